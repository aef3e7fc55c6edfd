#ifndef GWSPEED_ENGINE_HPP
#define GWSPEED_ENGINE_HPP

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwspeed/electrical.hpp"
#include "gwspeed/laws.hpp"
#include "gwspeed/speed.hpp"
#include "gwspeed/tree.hpp"

namespace gwspeed {

using nlohmann::json;

struct ExperimentConfig {
    std::string experiment = "speed";
    std::vector<std::pair<int, double>> offspring_pmf;
    std::vector<std::pair<double, double>> conductance_atoms;
    double delta = 0.1;
    double alpha = 0.0;
    std::optional<double> epsilon;
    std::vector<double> epsilon_grid;
    std::vector<std::vector<std::pair<double, double>>> law_sequence;
    std::vector<int> moment_orders = {1, 2, 3};
    std::int64_t replicas = 10'000;
    std::int64_t walks = 100;
    std::int64_t steps = 100'000;
    std::int64_t burn_in = 10'000;
    std::int32_t truncation = 16;
    std::int64_t m_horizon = 256; // must be large against 1/v for D_M to stabilize
    std::uint64_t master_seed = 1;
    int workers = 1;
    std::string out_dir = "out";

    OffspringLaw offspring() const { return OffspringLaw(offspring_pmf); }
    ConductanceLaw conductances() const {
        return ConductanceLaw(conductance_atoms, delta);
    }
    EpsilonMixture mixture() const {
        return EpsilonMixture(conductances(), alpha, epsilon.value_or(0.0));
    }
    LlnBudget lln_budget() const { return {steps, walks, burn_in}; }
};

namespace detail {

inline std::vector<std::pair<int, double>> parse_int_pairs(const json& j) {
    std::vector<std::pair<int, double>> out;
    for (const auto& e : j) out.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
    return out;
}

inline std::vector<std::pair<double, double>> parse_double_pairs(const json& j) {
    std::vector<std::pair<double, double>> out;
    for (const auto& e : j)
        out.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
    return out;
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    try {
        cfg.experiment = j.value("experiment", cfg.experiment);
        cfg.offspring_pmf = detail::parse_int_pairs(j.at("pmf"));
        cfg.conductance_atoms = detail::parse_double_pairs(j.at("conductance_atoms"));
        cfg.delta = j.value("delta", cfg.delta);
        cfg.alpha = j.value("alpha", cfg.alpha);
        if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
        if (j.contains("epsilon_grid"))
            cfg.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
        if (j.contains("law_sequence"))
            for (const auto& law : j.at("law_sequence"))
                cfg.law_sequence.push_back(detail::parse_double_pairs(law));
        if (j.contains("moment_orders"))
            cfg.moment_orders = j.at("moment_orders").get<std::vector<int>>();
        cfg.replicas = j.value("replicas", cfg.replicas);
        cfg.walks = j.value("walks", cfg.walks);
        cfg.steps = j.value("steps", cfg.steps);
        cfg.burn_in = j.value("burn_in", cfg.burn_in);
        cfg.truncation = j.value("truncation", cfg.truncation);
        cfg.m_horizon = j.value("m_horizon", cfg.m_horizon);
        cfg.master_seed = j.value("master_seed", cfg.master_seed);
        cfg.workers = j.value("workers", cfg.workers);
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    if (const char* env_seed = std::getenv("GWSPEED_SEED"))
        cfg.master_seed = std::stoull(env_seed);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config parse error in ") + path + ": " +
                                    e.what());
    }
    return parse_config(j);
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["experiment"] = cfg.experiment;
    j["pmf"] = cfg.offspring_pmf;
    j["conductance_atoms"] = cfg.conductance_atoms;
    j["delta"] = cfg.delta;
    j["alpha"] = cfg.alpha;
    if (cfg.epsilon) j["epsilon"] = *cfg.epsilon;
    if (!cfg.epsilon_grid.empty()) j["epsilon_grid"] = cfg.epsilon_grid;
    if (!cfg.law_sequence.empty()) j["law_sequence"] = cfg.law_sequence;
    j["moment_orders"] = cfg.moment_orders;
    j["replicas"] = cfg.replicas;
    j["walks"] = cfg.walks;
    j["steps"] = cfg.steps;
    j["burn_in"] = cfg.burn_in;
    j["truncation"] = cfg.truncation;
    j["m_horizon"] = cfg.m_horizon;
    j["master_seed"] = cfg.master_seed;
    j["workers"] = cfg.workers;
    j["out_dir"] = cfg.out_dir;
    return j;
}

// Stable hash of the canonicalized config. Worker count and output paths do
// not affect estimates, so they are excluded; fingerprints are then identical
// across worker counts and key orderings.
inline std::string config_fingerprint(const ExperimentConfig& cfg) {
    json canonical = config_to_json(cfg);
    canonical.erase("workers");
    canonical.erase("out_dir");
    const std::string dump = canonical.dump(); // nlohmann objects sort keys
    std::uint64_t hash = 0xcbf29ce484222325ULL; // FNV-1a 64
    for (unsigned char c : dump) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << hash;
    return out.str();
}

inline json estimate_to_json(const Estimate& est) {
    return json{{"value", est.value},
                {"stderr", est.stderr_value},
                {"replicas", est.replicas},
                {"method", est.method}};
}

struct RunRecord {
    std::string experiment;
    std::string fingerprint;
    json output;       // estimator blocks, pass flags, diagnostics
    json csv_rows;     // array of arrays, first row = header
    double wall_clock_seconds = 0.0;
    bool gate_pass = true; // false on statistical-gate failure

    json to_json() const {
        return json{{"experiment", experiment},
                    {"fingerprint", fingerprint},
                    {"gate_pass", gate_pass},
                    {"output", output}};
    }
};

namespace detail {

inline std::string format_double(double x) {
    std::ostringstream out;
    out << std::setprecision(17) << x;
    return out.str();
}

inline json theorem1_to_json(const Theorem1Report& report) {
    json curve = json::array();
    for (const auto& point : report.curve)
        curve.push_back({{"epsilon", point.epsilon},
                         {"estimate", estimate_to_json(point.estimate)}});
    return json{{"curve", curve},
                {"hat_survival", report.hat_survival},
                {"pruned_speed", estimate_to_json(report.pruned_speed)},
                {"target", report.target},
                {"target_stderr", report.target_stderr},
                {"limit_pass", report.limit_pass},
                {"monotone_trend", report.monotone_trend}};
}

} // namespace detail

inline RunRecord run(const ExperimentConfig& cfg) {
    RunRecord record;
    record.experiment = cfg.experiment;
    record.fingerprint = config_fingerprint(cfg);
    const auto start = std::chrono::steady_clock::now();
    const OffspringLaw offspring = cfg.offspring();
    const ConductanceLaw base = cfg.conductances();

    if (cfg.experiment == "speed") {
        const EpsilonMixture mix = cfg.mixture();
        const Estimate lln =
            speed_lln(offspring, mix, cfg.lln_budget(), cfg.master_seed, cfg.workers);
        const Estimate formula = speed_conductance_formula(
            offspring, mix, cfg.truncation, cfg.replicas, cfg.master_seed, cfg.workers);
        const InvariantEstimate invariant = speed_invariant_formula(
            offspring, mix, cfg.m_horizon, cfg.replicas, cfg.master_seed, cfg.workers);
        record.output = {{"lln", estimate_to_json(lln)},
                         {"conductance_formula", estimate_to_json(formula)},
                         {"invariant_formula", estimate_to_json(invariant.estimate)},
                         {"invariant_weight_mean", invariant.weight_mean}};
    } else if (cfg.experiment == "sweep-epsilon") {
        json rows = json::array();
        rows.push_back({"epsilon", "v_hat", "stderr", "replicas"});
        json blocks = json::array();
        for (double eps : cfg.epsilon_grid) {
            const Estimate est =
                speed_lln(offspring, EpsilonMixture(base, cfg.alpha, eps),
                          cfg.lln_budget(), cfg.master_seed, cfg.workers);
            rows.push_back({detail::format_double(eps),
                            detail::format_double(est.value),
                            detail::format_double(est.stderr_value),
                            std::to_string(est.replicas)});
            blocks.push_back({{"epsilon", eps}, {"estimate", estimate_to_json(est)}});
        }
        record.output = {{"sweep", blocks}};
        record.csv_rows = rows;
    } else if (cfg.experiment == "limit-check") {
        const Theorem1Report report = theorem1_check(
            offspring, cfg.alpha, base, cfg.epsilon_grid, cfg.lln_budget(),
            cfg.lln_budget(), cfg.master_seed, cfg.workers);
        record.output = detail::theorem1_to_json(report);
        record.gate_pass = report.limit_pass;
        json rows = json::array();
        rows.push_back({"epsilon", "v_hat", "stderr", "replicas"});
        for (const auto& point : report.curve)
            rows.push_back({detail::format_double(point.epsilon),
                            detail::format_double(point.estimate.value),
                            detail::format_double(point.estimate.stderr_value),
                            std::to_string(point.estimate.replicas)});
        rows.push_back({"target", detail::format_double(report.target),
                        detail::format_double(report.target_stderr),
                        std::to_string(report.pruned_speed.replicas)});
        record.csv_rows = rows;
    } else if (cfg.experiment == "stationarity") {
        std::vector<double> eps_values =
            cfg.epsilon_grid.empty() ? std::vector<double>{cfg.epsilon.value_or(0.0)}
                                     : cfg.epsilon_grid;
        json blocks = json::array();
        bool pass = true;
        for (double eps : eps_values) {
            const StationarityReport report =
                stationarity_check(offspring, EpsilonMixture(base, cfg.alpha, eps),
                                   cfg.replicas, cfg.master_seed, cfg.workers);
            json rows = json::array();
            for (const auto& row : report.rows)
                rows.push_back({{"function", test_function_name(row.function)},
                                {"invariance_diff", row.invariance_diff},
                                {"invariance_stderr", row.invariance_stderr},
                                {"symmetry_diff", row.symmetry_diff},
                                {"symmetry_stderr", row.symmetry_stderr},
                                {"pass", row.pass}});
            blocks.push_back({{"epsilon", eps},
                              {"rows", rows},
                              {"weight_mean", report.weight_mean},
                              {"pass", report.pass}});
            pass = pass && report.pass;
        }
        record.output = {{"stationarity", blocks}};
        record.gate_pass = pass;
    } else if (cfg.experiment == "continuity") {
        std::vector<ConductanceLaw> sequence;
        for (const auto& atoms : cfg.law_sequence)
            sequence.emplace_back(atoms, cfg.delta);
        const ContinuityReport report =
            continuity_check(offspring, sequence, base, cfg.truncation, cfg.replicas,
                             cfg.master_seed, cfg.workers);
        json points = json::array();
        for (const auto& point : report.sequence)
            points.push_back({{"estimate", estimate_to_json(point.estimate)},
                              {"deviation", point.deviation},
                              {"combined_stderr", point.combined_stderr}});
        record.output = {{"sequence", points},
                         {"limit", estimate_to_json(report.limit_estimate)},
                         {"pass", report.pass}};
        record.gate_pass = report.pass;
    } else if (cfg.experiment == "bounds") {
        json rows = json::array();
        rows.push_back({"order", "bound"});
        json blocks = json::array();
        for (int m : cfg.moment_orders) {
            const double bound = resistance_moment_bound(offspring, cfg.delta, m);
            rows.push_back({std::to_string(m), detail::format_double(bound)});
            blocks.push_back({{"order", m}, {"bound", bound}});
        }
        record.output = {{"bounds", blocks}};
        record.csv_rows = rows;
    } else {
        throw std::invalid_argument("unknown experiment: " + cfg.experiment);
    }

    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

// CSV uses '.' decimals and 17 significant digits; no locale dependence.
inline void write_csv(const json& rows, std::ostream& out) {
    for (const auto& row : rows) {
        bool first = true;
        for (const auto& cell : row) {
            if (!first) out << ',';
            out << cell.get<std::string>();
            first = false;
        }
        out << '\n';
    }
}

// `epsilon, v_hat, ci_low, ci_high, target, target_ci_low, target_ci_high`
// rows for generic plotting tools; one row per grid point plus a target row.
inline void emit_plot_data(const RunRecord& record, std::ostream& out) {
    if (record.experiment != "limit-check" && record.experiment != "sweep-epsilon")
        throw std::invalid_argument("plot data requires a sweep-epsilon or limit-check record");
    out << "epsilon,v_hat,ci_low,ci_high,target,target_ci_low,target_ci_high\n";
    const bool has_target = record.experiment == "limit-check";
    const double target = has_target ? record.output.at("target").get<double>() : 0.0;
    const double target_se =
        has_target ? record.output.at("target_stderr").get<double>() : 0.0;
    const json& curve = has_target ? record.output.at("curve")
                                   : record.output.at("sweep");
    auto fmt = detail::format_double;
    for (const auto& point : curve) {
        const double eps = point.at("epsilon").get<double>();
        const double v = point.at("estimate").at("value").get<double>();
        const double se = point.at("estimate").at("stderr").get<double>();
        out << fmt(eps) << ',' << fmt(v) << ',' << fmt(v - 3.0 * se) << ','
            << fmt(v + 3.0 * se) << ',' << fmt(target) << ','
            << fmt(target - 3.0 * target_se) << ',' << fmt(target + 3.0 * target_se)
            << '\n';
    }
    if (has_target)
        out << "," << fmt(target) << ',' << fmt(target - 3.0 * target_se) << ','
            << fmt(target + 3.0 * target_se) << ',' << fmt(target) << ','
            << fmt(target - 3.0 * target_se) << ',' << fmt(target + 3.0 * target_se)
            << '\n';
}

// Persists <out_dir>/<experiment>.json plus CSV artifacts when present.
inline void persist(const RunRecord& record, const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    {
        std::ofstream out(dir / (record.experiment + ".json"));
        out << record.to_json().dump(2) << '\n';
    }
    if (!record.csv_rows.empty()) {
        std::ofstream out(dir / (record.experiment + ".csv"));
        write_csv(record.csv_rows, out);
    }
    if (record.experiment == "limit-check" || record.experiment == "sweep-epsilon") {
        std::ofstream out(dir / (record.experiment + "-plot.csv"));
        emit_plot_data(record, out);
    }
}

} // namespace gwspeed

#endif
