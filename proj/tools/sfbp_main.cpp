#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "sfbp/harness.hpp"

namespace {

int cmd_solve(const std::string& config_path, int threads, long long seed_override, const std::string& out_override) {
    (void)threads;  // replicates run in order on the current thread; flag kept for interface stability
    sfbp::RunConfig cfg;
    try {
        cfg = sfbp::parse_config(config_path);
    } catch (const sfbp::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.output_dir = out_override;
    sfbp::RunReport report;
    try {
        report = sfbp::run_experiment(cfg);
    } catch (const sfbp::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    std::cout << report.to_json().dump(2) << "\n";
    return report.all_diverged ? 3 : 0;
}

int cmd_check_ac(const std::string& config_path) {
    sfbp::RunConfig cfg;
    try {
        cfg = sfbp::parse_config(config_path);
    } catch (const sfbp::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        sfbp::ProblemInstance prob = sfbp::build_problem(cfg);
        const sfbp::Schedule schedule = sfbp::build_schedule(cfg, prob.psi);
        sfbp::Rng rng(cfg.master_seed, 0xACULL);
        std::vector<sfbp::Vector> p_samples;
        for (int k = 0; k < 5; ++k) {
            // draw p inside the conjugate's effective domain: for matrix
            // penalties that is the row space of A, so sample p = A^T u
            if (prob.psi.dense_mat.size() > 0) {
                sfbp::Vector u(prob.psi.dense_mat.rows());
                for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
                p_samples.push_back(prob.psi.dense_mat.transpose() * u);
            } else if (prob.psi.sparse_mat) {
                sfbp::Vector u(prob.psi.sparse_mat->rows);
                for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
                p_samples.push_back(prob.psi.sparse_mat->multiply_transpose(u));
            } else {
                sfbp::Vector p(prob.dim);
                for (Eigen::Index i = 0; i < prob.dim; ++i) p[i] = rng.normal();
                p_samples.push_back(std::move(p));
            }
        }
        const long horizon = std::max<long>(cfg.n_steps, 1000);
        const auto report = sfbp::check_ac_condition(schedule, prob.psi, prob.constraint, p_samples, horizon);
        std::printf("%-8s %-14s %-12s %s\n", "sample", "tail_slope", "verdict", "diagnostic");
        for (std::size_t i = 0; i < report.series.size(); ++i) {
            const auto& s = report.series[i];
            std::printf("%-8zu %-14.4f %-12s %s\n", i, s.tail_slope, sfbp::to_string(s.verdict),
                        s.diagnostic.c_str());
        }
        std::printf("overall: %s\n", sfbp::to_string(report.verdict));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}

sfbp::Vector load_point(const std::string& path, Eigen::Index dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open point file: " + path);
    std::vector<double> vals;
    double v;
    while (in >> v) vals.push_back(v);
    if (static_cast<Eigen::Index>(vals.size()) != dim)
        throw std::runtime_error("point file has " + std::to_string(vals.size()) + " values, expected " +
                                 std::to_string(dim));
    sfbp::Vector x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x[i] = vals[i];
    return x;
}

int cmd_gap(const std::string& config_path, const std::string& point_path) {
    sfbp::RunConfig cfg;
    try {
        cfg = sfbp::parse_config(config_path);
    } catch (const sfbp::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        sfbp::ProblemInstance prob = sfbp::build_problem(cfg);
        const sfbp::Vector x = load_point(point_path, prob.dim);
        nlohmann::json out;
        out["psi"] = sfbp::feasibility_residual(prob.psi, x);
        if (prob.phi) out["objective"] = prob.phi(x);
        if (prob.phi && prob.phi_min) out["objective_gap"] = sfbp::objective_gap(prob, x);
        if (prob.known_solution) {
            out["dist_to_solution"] = sfbp::dist_to_solution(x, *prob.known_solution);
            sfbp::Rng rng(cfg.master_seed, 0x6A9ULL);
            const auto est =
                sfbp::restricted_gap(prob.op, prob.constraint, x, *prob.known_solution, 1.0, 1000, rng);
            out["restricted_gap"] = est.value;
            out["gap_samples"] = est.n_samples;
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}

int cmd_radon_export(const std::string& config_path) {
    sfbp::RunConfig cfg;
    try {
        cfg = sfbp::parse_config(config_path);
        if (cfg.family != "radon") throw sfbp::ConfigError({"radon-export: config must use the radon family"});
    } catch (const sfbp::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    const sfbp::CsrMatrix a = sfbp::make_radon_matrix(cfg.radon_side, cfg.radon_angles, cfg.radon_detectors);
    char buf[96];
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
            std::snprintf(buf, sizeof(buf), "%lld %lld %.17g\n", static_cast<long long>(i),
                          static_cast<long long>(a.col_idx[k]), a.values[k]);
            std::fputs(buf, stdout);
        }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized stochastic forward-backward experiment runner"};
    app.require_subcommand(1);

    std::string config_path, point_path, out_dir;
    int threads = 0;
    long long seed = -1;

    auto* solve = app.add_subcommand("solve", "Run the configured experiment");
    solve->add_option("config", config_path, "Config file")->required();
    solve->add_option("--threads", threads, "Worker threads");
    solve->add_option("--seed", seed, "Master seed override");
    solve->add_option("--out", out_dir, "Output directory override");

    auto* check = app.add_subcommand("check-ac", "Check penalty-schedule summability");
    check->add_option("config", config_path, "Config file")->required();

    auto* gap = app.add_subcommand("gap", "Evaluate diagnostics at a saved point");
    gap->add_option("config", config_path, "Config file")->required();
    gap->add_option("--point", point_path, "Whitespace-separated point file")->required();

    auto* rexp = app.add_subcommand("radon-export", "Dump the sparse projector as 'row col value' lines");
    rexp->add_option("config", config_path, "Config file")->required();

    CLI11_PARSE(app, argc, argv);

    if (solve->parsed()) return cmd_solve(config_path, threads, seed, out_dir);
    if (check->parsed()) return cmd_check_ac(config_path);
    if (gap->parsed()) return cmd_gap(config_path, point_path);
    return cmd_radon_export(config_path);
}
