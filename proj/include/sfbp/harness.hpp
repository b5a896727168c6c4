#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfbp/diagnostics.hpp"
#include "sfbp/problems.hpp"
#include "sfbp/solver.hpp"

namespace sfbp {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    std::vector<std::string> violations;
    explicit ConfigError(std::vector<std::string> v)
        : std::runtime_error(join(v)), violations(std::move(v)) {}

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "config errors:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
};

struct RunConfig {
    // problem
    std::string family;  // bilevel_quadratic | basis_pursuit | radon
    int dim = 20;
    int chain_len = 5;
    int bp_m = 40, bp_d = 100, bp_sparsity = 10;
    double bp_noise_sigma = 0.0;
    int radon_side = 32, radon_angles = 16, radon_detectors = 48;
    std::string radon_phantom = "blocks";
    // schedule
    std::string schedule_kind = "power_product";  // | constant
    double sched_a = 0.75, sched_n0 = 10.0, sched_c = 1.0;
    double sched_lambda = 0.1, sched_beta = 1.0;
    // noise
    std::string noise_regime = "off";  // off | ubv | asv
    double sigma_star = 0.0, sigma0 = 0.5, noise_q = 0.75;
    // run
    long n_steps = 10000;
    long record_every = 0;  // 0 = log-spaced
    int n_replicates = 1;
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    // flags
    bool beta_scales_noise = false;
    bool uniform_cesaro = false;
    bool enforce_step_rule = true;
    std::string l_constant_choice = "spectral";  // | frobenius
    int minibatch = 0;

    json to_json() const {
        json j;
        j["problem"]["family"] = family;
        if (family == "bilevel_quadratic") {
            j["problem"]["d"] = dim;
            j["problem"]["J"] = chain_len;
        } else if (family == "basis_pursuit") {
            j["problem"]["m"] = bp_m;
            j["problem"]["d"] = bp_d;
            j["problem"]["sparsity"] = bp_sparsity;
            j["problem"]["noise_sigma"] = bp_noise_sigma;
        } else {
            j["problem"]["image_side"] = radon_side;
            j["problem"]["n_angles"] = radon_angles;
            j["problem"]["n_detectors"] = radon_detectors;
            j["problem"]["phantom"] = radon_phantom;
        }
        j["schedule"]["kind"] = schedule_kind;
        if (schedule_kind == "power_product") {
            j["schedule"]["a"] = sched_a;
            j["schedule"]["n0"] = sched_n0;
            j["schedule"]["c"] = sched_c;
        } else {
            j["schedule"]["lambda"] = sched_lambda;
            j["schedule"]["beta"] = sched_beta;
        }
        j["noise"]["regime"] = noise_regime;
        if (noise_regime == "ubv") j["noise"]["sigma_star"] = sigma_star;
        if (noise_regime == "asv") {
            j["noise"]["sigma0"] = sigma0;
            j["noise"]["q"] = noise_q;
        }
        j["n_steps"] = n_steps;
        j["record_every"] = record_every;
        j["n_replicates"] = n_replicates;
        j["master_seed"] = master_seed;
        j["output_dir"] = output_dir;
        j["flags"]["beta_scales_noise"] = beta_scales_noise;
        j["flags"]["uniform_cesaro"] = uniform_cesaro;
        j["flags"]["enforce_step_rule"] = enforce_step_rule;
        j["flags"]["l_constant_choice"] = l_constant_choice;
        j["flags"]["minibatch"] = minibatch;
        return j;
    }
};

/// FNV-1a over the canonical serialized config; recorded in every output.
inline std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string s = cfg.to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

struct KeyChecker {
    const json& obj;
    std::string scope;
    std::vector<std::string>& violations;
    std::vector<std::string> known;

    void allow(const std::string& k) { known.push_back(k); }
    void finish() const {
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                violations.push_back(scope + ": unknown key \"" + it.key() + "\"");
    }
};

template <typename T>
void read_field(const json& obj, const std::string& scope, const char* key, T& out, KeyChecker& kc,
                std::vector<std::string>& violations, bool required = false) {
    kc.allow(key);
    if (!obj.contains(key)) {
        if (required) violations.push_back(scope + ": missing required key \"" + std::string(key) + "\"");
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        violations.push_back(scope + ": key \"" + std::string(key) + "\" has the wrong type");
    }
}

}  // namespace detail

inline RunConfig parse_config_json(const json& root) {
    std::vector<std::string> violations;
    RunConfig cfg;

    detail::KeyChecker top{root, "top-level", violations, {}};
    top.allow("problem");
    top.allow("schedule");
    top.allow("noise");
    top.allow("flags");
    detail::read_field(root, "top-level", "n_steps", cfg.n_steps, top, violations);
    detail::read_field(root, "top-level", "record_every", cfg.record_every, top, violations);
    detail::read_field(root, "top-level", "n_replicates", cfg.n_replicates, top, violations);
    detail::read_field(root, "top-level", "master_seed", cfg.master_seed, top, violations);
    detail::read_field(root, "top-level", "output_dir", cfg.output_dir, top, violations);
    top.finish();

    if (!root.contains("problem") || !root["problem"].is_object()) {
        violations.push_back("problem: missing or not an object");
    } else {
        const json& p = root["problem"];
        detail::KeyChecker kc{p, "problem", violations, {}};
        detail::read_field(p, "problem", "family", cfg.family, kc, violations, true);
        if (cfg.family == "bilevel_quadratic") {
            detail::read_field(p, "problem", "d", cfg.dim, kc, violations);
            detail::read_field(p, "problem", "J", cfg.chain_len, kc, violations);
        } else if (cfg.family == "basis_pursuit") {
            detail::read_field(p, "problem", "m", cfg.bp_m, kc, violations);
            detail::read_field(p, "problem", "d", cfg.bp_d, kc, violations);
            detail::read_field(p, "problem", "sparsity", cfg.bp_sparsity, kc, violations);
            detail::read_field(p, "problem", "noise_sigma", cfg.bp_noise_sigma, kc, violations);
        } else if (cfg.family == "radon") {
            detail::read_field(p, "problem", "image_side", cfg.radon_side, kc, violations);
            detail::read_field(p, "problem", "n_angles", cfg.radon_angles, kc, violations);
            detail::read_field(p, "problem", "n_detectors", cfg.radon_detectors, kc, violations);
            detail::read_field(p, "problem", "phantom", cfg.radon_phantom, kc, violations);
        } else if (p.contains("family")) {
            violations.push_back("problem: unknown family \"" + cfg.family + "\"");
        }
        kc.finish();
    }

    if (root.contains("schedule")) {
        if (!root["schedule"].is_object()) {
            violations.push_back("schedule: not an object");
        } else {
            const json& s = root["schedule"];
            detail::KeyChecker kc{s, "schedule", violations, {}};
            detail::read_field(s, "schedule", "kind", cfg.schedule_kind, kc, violations);
            detail::read_field(s, "schedule", "a", cfg.sched_a, kc, violations);
            detail::read_field(s, "schedule", "n0", cfg.sched_n0, kc, violations);
            detail::read_field(s, "schedule", "c", cfg.sched_c, kc, violations);
            detail::read_field(s, "schedule", "lambda", cfg.sched_lambda, kc, violations);
            detail::read_field(s, "schedule", "beta", cfg.sched_beta, kc, violations);
            kc.finish();
            if (cfg.schedule_kind != "power_product" && cfg.schedule_kind != "constant")
                violations.push_back("schedule: unknown kind \"" + cfg.schedule_kind + "\"");
        }
    }

    if (root.contains("noise")) {
        if (!root["noise"].is_object()) {
            violations.push_back("noise: not an object");
        } else {
            const json& nj = root["noise"];
            detail::KeyChecker kc{nj, "noise", violations, {}};
            detail::read_field(nj, "noise", "regime", cfg.noise_regime, kc, violations);
            detail::read_field(nj, "noise", "sigma_star", cfg.sigma_star, kc, violations);
            detail::read_field(nj, "noise", "sigma0", cfg.sigma0, kc, violations);
            detail::read_field(nj, "noise", "q", cfg.noise_q, kc, violations);
            kc.finish();
            if (cfg.noise_regime != "off" && cfg.noise_regime != "ubv" && cfg.noise_regime != "asv")
                violations.push_back("noise: unknown regime \"" + cfg.noise_regime + "\"");
            if (cfg.noise_regime == "asv" && cfg.noise_q <= 0.5)
                violations.push_back("noise: asv decay exponent q must exceed 1/2");
        }
    }

    if (root.contains("flags")) {
        if (!root["flags"].is_object()) {
            violations.push_back("flags: not an object");
        } else {
            const json& f = root["flags"];
            detail::KeyChecker kc{f, "flags", violations, {}};
            detail::read_field(f, "flags", "beta_scales_noise", cfg.beta_scales_noise, kc, violations);
            detail::read_field(f, "flags", "uniform_cesaro", cfg.uniform_cesaro, kc, violations);
            detail::read_field(f, "flags", "enforce_step_rule", cfg.enforce_step_rule, kc, violations);
            detail::read_field(f, "flags", "l_constant_choice", cfg.l_constant_choice, kc, violations);
            detail::read_field(f, "flags", "minibatch", cfg.minibatch, kc, violations);
            kc.finish();
            if (cfg.l_constant_choice != "spectral" && cfg.l_constant_choice != "frobenius")
                violations.push_back("flags: l_constant_choice must be spectral or frobenius");
        }
    }

    if (cfg.n_steps < 1) violations.push_back("n_steps: must be at least 1");
    if (cfg.n_replicates < 1) violations.push_back("n_replicates: must be at least 1");
    if (cfg.minibatch < 0) violations.push_back("flags: minibatch must be nonnegative");

    // step-rule check needs the problem's L; checked again at build, but the
    // constant-schedule product can be rejected here for L-free clarity only
    if (!violations.empty()) throw ConfigError(std::move(violations));
    return cfg;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file: " + path});
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ConfigError({std::string("invalid syntax: ") + e.what()});
    }
    if (!root.is_object()) throw ConfigError({"top-level: config must be an object"});
    return parse_config_json(root);
}

inline ProblemInstance build_problem(const RunConfig& cfg) {
    if (cfg.family == "bilevel_quadratic") return make_bilevel_quadratic(cfg.dim, cfg.chain_len);
    if (cfg.family == "basis_pursuit")
        return make_basis_pursuit(cfg.bp_m, cfg.bp_d, cfg.bp_sparsity, cfg.bp_noise_sigma, cfg.master_seed);
    Phantom ph = Phantom::Blocks;
    if (cfg.radon_phantom == "shepp-logan-like") ph = Phantom::SheppLoganLike;
    else if (cfg.radon_phantom == "zero") ph = Phantom::Zero;
    else if (cfg.radon_phantom != "blocks") throw ConfigError({"problem: unknown phantom \"" + cfg.radon_phantom + "\""});
    return make_radon(cfg.radon_side, cfg.radon_angles, cfg.radon_detectors, ph, cfg.master_seed);
}

inline Schedule build_schedule(const RunConfig& cfg, const PenaltyFn& psi) {
    const double l = cfg.l_constant_choice == "frobenius" ? psi.l_frobenius : psi.l_spectral;
    Schedule s;
    if (cfg.schedule_kind == "power_product") {
        s.kind = Schedule::Kind::PowerProduct;
        s.a = cfg.sched_a;
        s.n0 = cfg.sched_n0;
        s.c = cfg.sched_c;
    } else {
        s.kind = Schedule::Kind::Constant;
        s.const_lambda = cfg.sched_lambda;
        s.const_beta = cfg.sched_beta;
    }
    s.l_psi = l;
    s.enforce_step_rule = cfg.enforce_step_rule;
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError({std::string("schedule: ") + e.what()});
    }
    return s;
}

inline NoiseModel build_noise(const RunConfig& cfg, Eigen::Index dim) {
    if (cfg.noise_regime == "ubv") return NoiseModel::ubv(cfg.sigma_star, dim);
    if (cfg.noise_regime == "asv") return NoiseModel::asv(cfg.sigma0, cfg.noise_q, dim);
    return NoiseModel::off(dim);
}

struct ReplicateSummary {
    int replicate = 0;
    std::uint64_t seed = 0;
    bool diverged = false;
    long n = 0;
    double t = 0.0;
    double final_psi = 0.0;
    double final_objective = std::numeric_limits<double>::quiet_NaN();
    double final_dist = std::numeric_limits<double>::quiet_NaN();
    double x_bar_objective = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
    std::uint64_t config_hash = 0;
    std::vector<ReplicateSummary> replicates;
    json aggregate;
    json rate_fit_json;
    json concentration_json;
    double wall_seconds = 0.0;
    long total_steps = 0;
    bool all_diverged = false;

    json to_json(bool include_wall_clock = true) const {
        json j;
        char hash_buf[32];
        std::snprintf(hash_buf, sizeof(hash_buf), "%016llx", static_cast<unsigned long long>(config_hash));
        j["config_hash"] = hash_buf;
        j["replicates"] = json::array();
        for (const auto& r : replicates) {
            json row;
            row["replicate"] = r.replicate;
            row["seed"] = r.seed;
            row["diverged"] = r.diverged;
            row["n"] = r.n;
            row["t"] = r.t;
            row["final_psi"] = r.final_psi;
            row["final_objective"] = r.final_objective;
            row["final_dist"] = r.final_dist;
            row["x_bar_objective"] = r.x_bar_objective;
            j["replicates"].push_back(row);
        }
        j["aggregate"] = aggregate;
        if (!rate_fit_json.is_null()) j["rate_fit"] = rate_fit_json;
        if (!concentration_json.is_null()) j["concentration"] = concentration_json;
        j["total_steps"] = total_steps;
        j["all_diverged"] = all_diverged;
        if (include_wall_clock) j["wall_seconds"] = wall_seconds;
        return j;
    }
};

namespace detail {

inline json quantile_block(std::vector<double> v) {
    json j;
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return j;
    std::sort(v.begin(), v.end());
    const auto q = [&](double p) {
        const double idx = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (idx - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    double mean = 0.0;
    for (double x : v) mean += x;
    j["mean"] = mean / static_cast<double>(v.size());
    j["median"] = q(0.5);
    j["q25"] = q(0.25);
    j["q75"] = q(0.75);
    j["min"] = v.front();
    j["max"] = v.back();
    j["count"] = v.size();
    return j;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream out(path);
    out << "n,t,psi,objective,dist,gap_estimate,x_bar_objective\n";
    char buf[512];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.n, r.t, r.psi_value,
                      r.objective, r.dist, r.gap_estimate, r.x_bar_objective);
        out << buf;
    }
}

}  // namespace detail

/// Aggregate per-replicate rows into the report's summary block; pure so the
/// tests can recompute it from the rows.
inline json aggregate_summaries(const std::vector<ReplicateSummary>& rows) {
    json agg;
    std::vector<double> psi, obj, dist, xbar;
    int diverged = 0;
    for (const auto& r : rows) {
        if (r.diverged) {
            ++diverged;
            continue;
        }
        psi.push_back(r.final_psi);
        obj.push_back(r.final_objective);
        dist.push_back(r.final_dist);
        xbar.push_back(r.x_bar_objective);
    }
    agg["n_diverged"] = diverged;
    agg["final_psi"] = detail::quantile_block(psi);
    agg["final_objective"] = detail::quantile_block(obj);
    agg["final_dist"] = detail::quantile_block(dist);
    agg["x_bar_objective"] = detail::quantile_block(xbar);
    return agg;
}

/// Runs all replicates, writes per-replicate CSV traces, the JSON report and
/// the config hash into the output directory. Divergence of a replicate is
/// recorded and the run continues.
inline RunReport run_experiment(const RunConfig& cfg, bool write_files = true) {
    const auto t0 = std::chrono::steady_clock::now();
    ProblemInstance prob = build_problem(cfg);
    const Schedule schedule = build_schedule(cfg, prob.psi);
    const NoiseModel noise = build_noise(cfg, prob.dim);
    StepOptions opts;
    opts.beta_scales_noise = cfg.beta_scales_noise;
    opts.uniform_cesaro = cfg.uniform_cesaro;
    opts.enforce_step_rule = cfg.enforce_step_rule;
    opts.minibatch = cfg.minibatch;

    RunReport report;
    report.config_hash = config_hash(cfg);

    std::filesystem::path out_dir(cfg.output_dir);
    if (write_files) std::filesystem::create_directories(out_dir);

    // fixed graph sample set for the gap column when the solution is known
    std::vector<GraphSample> gap_samples;
    if (prob.known_solution) {
        Rng gap_rng(cfg.master_seed, 0xFFFFULL);
        gap_samples = sample_graph(prob.op, prob.constraint, *prob.known_solution, 1.0, 64, gap_rng);
    }

    RunHooks hooks;
    hooks.objective = prob.phi;
    hooks.x_star = prob.known_solution;
    hooks.record_stride = cfg.record_every;
    if (!gap_samples.empty())
        hooks.gap = [&gap_samples](const Vector& x) { return restricted_gap(x, gap_samples).value; };
    if (cfg.n_steps >= 5000) hooks.snapshot_steps = {100, 200, 1000, 5000};

    std::vector<Trajectory> trajectories;
    for (int rep = 0; rep < cfg.n_replicates; ++rep) {
        Rng rng(cfg.master_seed, static_cast<std::uint64_t>(rep));
        Trajectory traj = run(prob.op, prob.psi, schedule, noise, prob.x0, cfg.n_steps, rng, opts, hooks);
        traj.seed = cfg.master_seed;

        ReplicateSummary row;
        row.replicate = rep;
        row.seed = cfg.master_seed;
        row.diverged = traj.diverged;
        row.n = traj.final_state.n;
        row.t = traj.final_state.t;
        row.final_psi = eval_penalty(prob.psi, traj.final_state.x);
        if (prob.phi) {
            row.final_objective = prob.phi(traj.final_state.x);
            row.x_bar_objective = prob.phi(traj.final_state.x_bar);
        }
        if (prob.known_solution) row.final_dist = (traj.final_state.x - *prob.known_solution).norm();
        report.replicates.push_back(row);
        report.total_steps += traj.final_state.n;

        if (write_files) {
            char name[64];
            std::snprintf(name, sizeof(name), "replicate_%03d.csv", rep);
            detail::write_csv(out_dir / name, traj.records);
        }
        trajectories.push_back(std::move(traj));
    }

    report.all_diverged = true;
    for (const auto& r : report.replicates)
        if (!r.diverged) report.all_diverged = false;
    report.aggregate = aggregate_summaries(report.replicates);

    // rate fit on the replicate-mean Cesaro objective gap when a reference exists
    if (prob.phi && prob.phi_min && !trajectories.empty() && !trajectories.front().records.empty()) {
        const std::size_t n_rec = trajectories.front().records.size();
        std::vector<double> times, values;
        for (std::size_t i = 0; i < n_rec; ++i) {
            double acc = 0.0;
            int cnt = 0;
            for (const auto& traj : trajectories) {
                if (traj.diverged || i >= traj.records.size()) continue;
                acc += traj.records[i].x_bar_objective - *prob.phi_min;
                ++cnt;
            }
            if (cnt == 0) continue;
            times.push_back(trajectories.front().records[i].t);
            values.push_back(acc / cnt);
        }
        try {
            const RateFit fit = rate_fit(times, values);
            report.rate_fit_json = {{"slope", fit.rate},
                                    {"r_squared", fit.r_squared},
                                    {"points", fit.points},
                                    {"metric", "mean_cesaro_objective_gap"}};
        } catch (const std::invalid_argument&) {
        }
    }

    if (noise.regime != NoiseModel::Regime::Off && prob.known_solution && prob.phi) {
        std::vector<Trajectory> ok;
        for (auto& traj : trajectories)
            if (!traj.diverged) ok.push_back(std::move(traj));
        if (!ok.empty()) {
            const auto conc = concentration_report(ok, {1.0, 2.0, 3.0}, prob.phi, *prob.known_solution);
            report.concentration_json = json::array();
            for (const auto& row : conc.rows)
                report.concentration_json.push_back({{"epsilon", row.epsilon},
                                                     {"empirical_exceedance", row.empirical_exceedance},
                                                     {"bound", row.bound},
                                                     {"n_replicates", row.n_replicates}});
        }
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (write_files) {
        std::ofstream(out_dir / "report.json") << report.to_json().dump(2) << "\n";
        std::ofstream(out_dir / "config.json") << cfg.to_json().dump(2) << "\n";
    }
    return report;
}

/// Pools homogeneous reports (same config hash) into one.
inline RunReport replicate_aggregate(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("replicate_aggregate: empty input");
    RunReport pooled;
    pooled.config_hash = reports.front().config_hash;
    for (const auto& r : reports) {
        if (r.config_hash != pooled.config_hash)
            throw std::invalid_argument("replicate_aggregate: mixed config hashes");
        for (const auto& row : r.replicates) pooled.replicates.push_back(row);
        pooled.total_steps += r.total_steps;
    }
    pooled.aggregate = aggregate_summaries(pooled.replicates);
    pooled.all_diverged = true;
    for (const auto& row : pooled.replicates)
        if (!row.diverged) pooled.all_diverged = false;
    return pooled;
}

}  // namespace sfbp
