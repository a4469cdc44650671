#include "ned/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ned {

using json = nlohmann::ordered_json;

namespace {

MatrixXd parse_matrix(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("matrix must be a non-empty 2D array");
    int rows = (int)j.size();
    int cols = (int)j[0].size();
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if ((int)j[i].size() != cols) throw ConfigError("matrix rows differ in length");
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(row);
    }
    return rows;
}

SystemSpec parse_system(const json& j) {
    if (!j.contains("family")) throw ConfigError("system.family is required");
    SystemSpec s;
    s.family = family_from_name(j.at("family").get<std::string>());
    s.dimension = j.value("dimension", 0);
    switch (s.family) {
        case Family::Constant:
            s.matrix = parse_matrix(j.at("matrix"));
            if (s.dimension == 0) s.dimension = (int)s.matrix.rows();
            break;
        case Family::ScalarTsin:
            s.dimension = 1;
            s.lambda0 = j.at("lambda0").get<double>();
            s.a = j.at("a").get<double>();
            break;
        case Family::DiagTsin:
            s.dimension = 2;
            s.lambda = j.at("lambda").get<double>();
            s.a = j.at("a").get<double>();
            break;
        case Family::Jordan:
            if (s.dimension == 0) s.dimension = 2;
            s.lambda = j.value("eigenvalue", 0.0);
            break;
        case Family::CoupledConstant:
            s.dimension = 2;
            s.lambda1 = j.at("lambda1").get<double>();
            s.lambda2 = j.at("lambda2").get<double>();
            s.coupling = j.value("coupling", 1.0);
            break;
        case Family::PiecewiseSamples: {
            for (const auto& t : j.at("times")) s.times.push_back(t.get<double>());
            for (const auto& m : j.at("matrices")) s.values.push_back(parse_matrix(m));
            if (s.dimension == 0 && !s.values.empty()) s.dimension = (int)s.values[0].rows();
            break;
        }
    }
    s.validate();
    return s;
}

json system_to_json(const SystemSpec& s) {
    json j;
    j["family"] = family_name(s.family);
    j["dimension"] = s.dimension;
    switch (s.family) {
        case Family::Constant: j["matrix"] = matrix_to_json(s.matrix); break;
        case Family::ScalarTsin:
            j["lambda0"] = s.lambda0;
            j["a"] = s.a;
            break;
        case Family::DiagTsin:
            j["lambda"] = s.lambda;
            j["a"] = s.a;
            break;
        case Family::Jordan: j["eigenvalue"] = s.lambda; break;
        case Family::CoupledConstant:
            j["lambda1"] = s.lambda1;
            j["lambda2"] = s.lambda2;
            j["coupling"] = s.coupling;
            break;
        case Family::PiecewiseSamples: {
            j["times"] = s.times;
            json ms = json::array();
            for (const auto& m : s.values) ms.push_back(matrix_to_json(m));
            j["matrices"] = ms;
            break;
        }
    }
    return j;
}

}  // namespace

void RunConfig::validate() const {
    system.validate();
    if (!(window_lo < 0.0 && 0.0 < window_hi))
        throw ConfigError("window must satisfy t_min < 0 < t_max");
    for (double v : {horizon, dead_band, endpoint_tol, rtol, atol})
        if (!(v > 0.0)) throw ConfigError("tolerances and horizon must be positive");
    if (anchor_count < 3) throw ConfigError("anchor count must be at least 3");
    if (format != "json" && format != "csv") throw ConfigError("format must be json or csv");
}

DichotomyParams RunConfig::dichotomy_params() const {
    DichotomyParams p;
    p.horizon = horizon;
    p.anchor_count = anchor_count;
    p.dead_band = dead_band;
    p.window_lo = window_lo;
    p.window_hi = window_hi;
    return p;
}

SpectrumParams RunConfig::spectrum_params() const {
    SpectrumParams p;
    p.endpoint_tol = endpoint_tol;
    return p;
}

ReductionParams RunConfig::reduction_params() const {
    ReductionParams p;
    p.dichotomy = dichotomy_params();
    p.spectrum = spectrum_params();
    p.grid_lo = std::max(-25.0, window_lo / 2.0);
    p.grid_hi = std::min(25.0, window_hi / 2.0);
    return p;
}

PropagatorOptions RunConfig::propagator_options() const {
    PropagatorOptions o;
    o.integrator.rtol = rtol;
    o.integrator.atol = atol;
    return o;
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // report line/column computed from the byte offset
        size_t line = 1, col = 1;
        for (size_t i = 0; i < std::min(text.size(), (size_t)e.byte); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("malformed JSON at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    RunConfig cfg;
    if (!j.contains("system")) throw ConfigError("config needs a 'system' object");
    cfg.system = parse_system(j.at("system"));
    if (j.contains("window")) {
        cfg.window_lo = j["window"].at(0).get<double>();
        cfg.window_hi = j["window"].at(1).get<double>();
    }
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.anchor_count = j.value("anchor_count", cfg.anchor_count);
    cfg.dead_band = j.value("dead_band", cfg.dead_band);
    cfg.endpoint_tol = j.value("endpoint_tol", cfg.endpoint_tol);
    cfg.rtol = j.value("rtol", cfg.rtol);
    cfg.atol = j.value("atol", cfg.atol);
    if (j.contains("gamma_range"))
        cfg.gamma_range = {j["gamma_range"].at(0).get<double>(),
                           j["gamma_range"].at(1).get<double>()};
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.format = j.value("format", cfg.format);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json j;
    j["system"] = system_to_json(cfg.system);
    j["window"] = {cfg.window_lo, cfg.window_hi};
    j["horizon"] = cfg.horizon;
    j["anchor_count"] = cfg.anchor_count;
    j["dead_band"] = cfg.dead_band;
    j["endpoint_tol"] = cfg.endpoint_tol;
    j["rtol"] = cfg.rtol;
    j["atol"] = cfg.atol;
    if (cfg.gamma_range) j["gamma_range"] = {cfg.gamma_range->first, cfg.gamma_range->second};
    j["out_dir"] = cfg.out_dir;
    j["format"] = cfg.format;
    return j.dump(2);
}

}  // namespace ned
