// mbpre: batch experiment runner for the branching-process verification
// suites.  `mbpre run --config cfg.json --out dir` executes one suite and
// writes results.jsonl, suite CSV tables, and manifest.json; exit status is 0
// iff every suite verdict passes its configured tolerance.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mbpre/env_model.hpp"
#include "mbpre/errors.hpp"
#include "mbpre/estimators.hpp"
#include "mbpre/parallel.hpp"
#include "mbpre/simulator.hpp"
#include "mbpre/walk.hpp"

using nlohmann::json;
using namespace mbpre;

namespace {

const char* kVersion = "0.1.0";

const std::vector<std::string> kSuites = {
    "quenched-selftest", "strong-ratio", "strong-p", "uniform",
    "interm-ratio",      "interm-q",     "renewal"};

struct ExperimentConfig {
    EnvModel model;
    std::string suite;
    std::uint64_t seed = 0;

    std::uint64_t N = 10000;
    std::vector<std::size_t> n_grid;
    Horizons horizons;
    std::uint64_t constants_N = 20000;

    double renewal_grid_max = 6.0;
    std::size_t renewal_grid_points = 10;
    std::uint64_t renewal_K_max = 10000;
    std::uint64_t renewal_N = 1000000;
    std::string renewal_table_path;  // optional: reuse a cached table

    std::size_t i = 0, l = 0;
    long c = 5;
    double t = 0.5;
    long z_max = 4;
    std::vector<long> z_totals = {1, 2, 3};

    double tol_drift = 0.05;
    double tol_uniform_dev = 0.02;
    double tol_sigma = 3.0;
    double tol_mass = 0.02;
    double tol_harmonicity = 0.02;
    double tol_v0 = 0.01;
    double tol_delta_tail = 0.05;

    bool want_csv = true, want_jsonl = true;
    std::string out_dir;
};

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    if (!j.contains("model")) throw ConfigError("config: missing \"model\"");
    c.model = EnvModel::from_json(j.at("model"));
    if (!j.contains("suite")) throw ConfigError("config: missing \"suite\"");
    c.suite = j.at("suite").get<std::string>();
    bool known = false;
    for (const auto& s : kSuites) known = known || s == c.suite;
    if (!known) throw ConfigError("config: unknown suite \"" + c.suite + "\"");
    if (!j.contains("seed")) throw ConfigError("config: missing \"seed\"");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.model.seed = c.seed;  // one seed governs the whole experiment

    try {
        if (j.contains("budgets")) {
            const auto& b = j.at("budgets");
            c.N = b.value("N", c.N);
            if (b.contains("n_grid"))
                c.n_grid = b.at("n_grid").get<std::vector<std::size_t>>();
            c.constants_N = b.value("constants_N", c.constants_N);
            if (b.contains("horizons")) {
                const auto& h = b.at("horizons");
                c.horizons.k_max = h.value("k_max", c.horizons.k_max);
                c.horizons.window = h.value("window", c.horizons.window);
                c.horizons.n_inner = h.value("n_inner", c.horizons.n_inner);
                c.horizons.N_infty = h.value("N_infty", c.horizons.N_infty);
            }
            if (b.contains("renewal")) {
                const auto& r = b.at("renewal");
                c.renewal_grid_max = r.value("grid_max", c.renewal_grid_max);
                c.renewal_grid_points = r.value("grid_points", c.renewal_grid_points);
                c.renewal_K_max = r.value("K_max", c.renewal_K_max);
                c.renewal_N = r.value("N", c.renewal_N);
            }
        }
        if (j.contains("params")) {
            const auto& p = j.at("params");
            c.i = p.value("i", c.i);
            c.l = p.value("l", c.l);
            c.c = p.value("c", c.c);
            c.t = p.value("t", c.t);
            c.z_max = p.value("z_max", c.z_max);
            if (p.contains("z_totals"))
                c.z_totals = p.at("z_totals").get<std::vector<long>>();
        }
        if (j.contains("tolerances")) {
            const auto& t = j.at("tolerances");
            c.tol_drift = t.value("drift", c.tol_drift);
            c.tol_uniform_dev = t.value("uniform_dev", c.tol_uniform_dev);
            c.tol_sigma = t.value("sigma", c.tol_sigma);
            c.tol_mass = t.value("mass", c.tol_mass);
            c.tol_harmonicity = t.value("harmonicity", c.tol_harmonicity);
            c.tol_v0 = t.value("v0", c.tol_v0);
            c.tol_delta_tail = t.value("delta_tail", c.tol_delta_tail);
        }
        if (j.contains("output")) {
            const auto& o = j.at("output");
            if (o.contains("formats")) {
                c.want_csv = c.want_jsonl = false;
                for (const auto& f : o.at("formats")) {
                    if (f == "csv") c.want_csv = true;
                    else if (f == "jsonl") c.want_jsonl = true;
                    else throw ConfigError("config: unknown output format");
                }
            }
            c.out_dir = o.value("dir", c.out_dir);
        }
        c.renewal_table_path = j.value("renewal_table", c.renewal_table_path);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.i >= c.model.K || c.l >= c.model.K)
        throw ConfigError("config: type index out of range");
    if (c.n_grid.empty()) c.n_grid = {24, 36};
    return c;
}

std::string zkey_str(const ZKey& z) {
    std::string s = "(";
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (j) s += ",";
        s += std::to_string(z[j]);
    }
    return s + ")";
}

struct Run {
    ExperimentConfig cfg;
    unsigned threads = 1;
    std::vector<json> results;
    std::map<std::string, bool> verdicts;
    json diagnostics = json::object();
    std::uint64_t fixture_hash = 0;

    void record(const std::string& estimator, const json& value, double stderr_,
                const json& diag = json::object()) {
        results.push_back(json{{"estimator", estimator},
                               {"fixture_hash", fixture_hash},
                               {"horizons",
                                {{"k_max", cfg.horizons.k_max},
                                 {"window", cfg.horizons.window},
                                 {"n_inner", cfg.horizons.n_inner},
                                 {"N_infty", cfg.horizons.N_infty}}},
                               {"value", value},
                               {"stderr", stderr_},
                               {"diagnostics", diag}});
    }

    void verdict(const std::string& name, bool pass) { verdicts[name] = pass; }
};

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << header << "\n";
    for (const auto& r : rows) os << r << "\n";
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

// ---------------------------------------------------------------------------
// suites
// ---------------------------------------------------------------------------

void suite_quenched_selftest(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    Rng rng = make_rng(cfg.seed, 0x73656c66ULL);
    std::size_t K = cfg.model.K;
    double worst_sum = 0.0, worst_pgf = 0.0;
    std::vector<std::string> rows;

    for (int fix = 0; fix < 20; ++fix) {
        std::size_t n = 1 + static_cast<std::size_t>(rng() % 4);
        QuenchedState st = QuenchedState::initial(cfg.model.v);
        for (std::size_t t = 0; t < n; ++t)
            st = step(st, cfg.model.construct_law(rng).law);

        // total vs summed vector masses, and pgf normalization
        for (long z = 1; z <= 6; ++z) {
            double total = local_prob_total(st, cfg.i, z);
            double summed = 0.0;
            for (const auto& zv : enumerate_support(K, z)) {
                long zs = 0;
                for (long c : zv) zs += c;
                if (zs == z) summed += local_prob_vector(st, cfg.i, zv);
            }
            worst_sum = std::max(worst_sum, std::abs(total - summed));
        }
        worst_pgf = std::max(worst_pgf,
                             std::abs(gf_eval(st, cfg.i, Vec(K, 1.0)) - 1.0));
        rows.push_back(std::to_string(fix) + "," + std::to_string(n) + "," +
                       fmt(worst_sum) + "," + fmt(worst_pgf));
    }

    // direct quenched sampler vs the closed-form total law
    {
        Rng srng = make_rng(cfg.seed, 0x73656c32ULL);
        QuenchedState st = QuenchedState::initial(cfg.model.v);
        for (int t = 0; t < 3; ++t) st = step(st, cfg.model.construct_law(srng).law);
        std::uint64_t draws = 200000;
        std::map<long, std::uint64_t> freq;
        for (std::uint64_t d = 0; d < draws; ++d)
            ++freq[sample_zn_direct(st, cfg.i, srng).total()];
        double worst_sigma = 0.0;
        for (long z = 0; z <= 6; ++z) {
            double p = z == 0 ? survival_probs(st).R[cfg.i]
                              : local_prob_total(st, cfg.i, z);
            double emp = static_cast<double>(freq[z]) / static_cast<double>(draws);
            double se = std::sqrt(std::max(p * (1 - p), 1e-12) /
                                  static_cast<double>(draws));
            worst_sigma = std::max(worst_sigma, std::abs(emp - p) / se);
        }
        run.diagnostics["sampler_worst_sigma"] = worst_sigma;
        run.verdict("sampler_matches_closed_form", worst_sigma <= 5.0);
    }

    run.diagnostics["worst_sum_residual"] = worst_sum;
    run.diagnostics["worst_pgf_residual"] = worst_pgf;
    run.verdict("vector_masses_sum_to_totals", worst_sum <= 1e-12);
    run.verdict("pgf_normalized", worst_pgf <= 1e-12);
    run.record("quenched_selftest",
               json{{"worst_sum_residual", worst_sum},
                    {"worst_pgf_residual", worst_pgf}},
               0.0);
    if (cfg.want_csv)
        write_csv(out + "/quenched_selftest.csv", "fixture,n,sum_residual,pgf_residual",
                  rows);
}

void suite_strong_ratio(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    StrongLimitConstants sc = estimate_strong_constants(
        cfg.model, enumerate_support(cfg.model.K, cfg.z_max), cfg.constants_N,
        cfg.horizons, 1, run.threads);
    run.record("theta", json{{"i", cfg.i}, {"value", sc.theta[cfg.i].mean}},
               sc.theta[cfg.i].stderr_,
               json{{"tail_diag", sc.tail_diag}, {"clamps", sc.clamp_count}});

    std::vector<std::string> rows;
    bool all_stable = true, all_match = true;
    for (long z : cfg.z_totals) {
        ZEvent ev;
        ev.kind = ZEvent::Total;
        ev.z = z;
        RatioTable t = verify_strong_ratio(cfg.model, cfg.i, ev, cfg.n_grid, cfg.N,
                                           cfg.tol_drift, 100 + z, run.threads);
        all_stable = all_stable && t.stabilized;
        // Theorem 1.1 limit for {|Z_n| = z} is theta_i (z-independent)
        const RatioRow& last = t.rows.back();
        double diff = std::abs(last.value.mean - sc.theta[cfg.i].mean);
        double comb = std::sqrt(last.value.stderr_ * last.value.stderr_ +
                                sc.theta[cfg.i].stderr_ * sc.theta[cfg.i].stderr_);
        all_match = all_match && diff <= cfg.tol_sigma * comb;
        for (const auto& row : t.rows)
            rows.push_back(std::to_string(row.n) + "," + std::to_string(z) + "," +
                           fmt(row.value.mean) + "," + fmt(row.value.stderr_) + "," +
                           fmt(sc.theta[cfg.i].mean));
        run.record("strong_ratio",
                   json{{"z", z},
                        {"ratios", [&] {
                             json a = json::array();
                             for (const auto& r : t.rows)
                                 a.push_back(json{{"n", r.n},
                                                  {"value", r.value.mean},
                                                  {"stderr", r.value.stderr_}});
                             return a;
                         }()}},
                   last.value.stderr_, json{{"rel_drift", t.rel_drift},
                                            {"verdict", t.verdict}});
    }
    run.verdict("ratio_stabilized", all_stable);
    run.verdict("ratio_matches_theta", all_match);
    if (cfg.want_csv)
        write_csv(out + "/strong_ratio.csv", "n,z,ratio,stderr,theta_ref", rows);
}

void suite_strong_p(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    auto support = enumerate_support(cfg.model.K, cfg.z_max);
    StrongLimitConstants sc = estimate_strong_constants(cfg.model, support,
                                                        cfg.constants_N, cfg.horizons,
                                                        1, run.threads);
    run.record("p_dist_total", json{{"value", sc.p_total.mean}}, sc.p_total.stderr_);
    run.verdict("p_total_mass",
                std::abs(sc.p_total.mean - 1.0) <= cfg.tol_mass +
                    cfg.tol_sigma * sc.p_total.stderr_);

    // two (i, l, t) choices; the limit must not depend on them
    struct Choice {
        std::size_t i, l;
        double t;
    };
    std::vector<Choice> choices = {{cfg.i, cfg.l, cfg.t},
                                   {(cfg.i + 1) % cfg.model.K,
                                    (cfg.l + 1) % cfg.model.K,
                                    cfg.t < 0.6 ? cfg.t + 0.2 : cfg.t - 0.2}};
    std::vector<ZMap> tables;
    for (std::size_t ci = 0; ci < choices.size(); ++ci) {
        auto tabs = verify_p(cfg.model, choices[ci].i, choices[ci].l, choices[ci].t,
                             support, cfg.n_grid, cfg.N, 200 + ci, run.threads);
        tables.push_back(tabs.back().cond);
        run.record("verify_p",
                   json{{"i", choices[ci].i},
                        {"l", choices[ci].l},
                        {"t", choices[ci].t},
                        {"n", tabs.back().n},
                        {"mass", tabs.back().mass}},
                   0.0);
    }

    bool agree_each_other = true, agree_pdist = true;
    std::vector<std::string> rows;
    for (const auto& z : support) {
        const MeanStderr& a = tables[0][z];
        const MeanStderr& b = tables[1][z];
        const MeanStderr& p = sc.p_dist[z];
        double se_ab = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
        double se_ap = std::sqrt(a.stderr_ * a.stderr_ + p.stderr_ * p.stderr_);
        agree_each_other =
            agree_each_other && std::abs(a.mean - b.mean) <= cfg.tol_sigma * se_ab;
        agree_pdist =
            agree_pdist && std::abs(a.mean - p.mean) <= cfg.tol_sigma * se_ap;
        rows.push_back(zkey_str(z) + "," + fmt(a.mean) + "," + fmt(a.stderr_) + "," +
                       fmt(b.mean) + "," + fmt(b.stderr_) + "," + fmt(p.mean) + "," +
                       fmt(p.stderr_));
    }
    run.verdict("p_tables_agree", agree_each_other);
    run.verdict("p_matches_closed_form", agree_pdist);
    if (cfg.want_csv)
        write_csv(out + "/strong_p.csv",
                  "z,cond_a,stderr_a,cond_b,stderr_b,p_dist,stderr_p", rows);
}

void suite_uniform(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    auto rowsv = verify_uniform(cfg.model, cfg.i, cfg.c, cfg.n_grid, cfg.N, 300,
                                run.threads);
    std::vector<std::string> rows;
    for (const auto& r : rowsv) {
        for (long z = 1; z <= cfg.c; ++z) {
            const MeanStderr& m = r.cond[static_cast<std::size_t>(z - 1)];
            rows.push_back(std::to_string(r.n) + "," + std::to_string(z) + "," +
                           fmt(m.mean) + "," + fmt(m.stderr_) + "," +
                           fmt(1.0 / static_cast<double>(cfg.c)));
        }
        run.record("verify_uniform", json{{"n", r.n}, {"max_dev", r.max_dev}}, 0.0);
    }
    run.diagnostics["max_dev"] = rowsv.back().max_dev;
    run.verdict("uniform_within_tolerance", rowsv.back().max_dev <= cfg.tol_uniform_dev);
    if (cfg.want_csv)
        write_csv(out + "/uniform.csv", "n,z,cond_prob,stderr,uniform_ref", rows);
}

RenewalTable obtain_renewal(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    if (!cfg.renewal_table_path.empty()) {
        std::ifstream is(cfg.renewal_table_path);
        if (!is) throw IoError("cannot read " + cfg.renewal_table_path);
        std::stringstream ss;
        ss << is.rdbuf();
        return RenewalTable::from_csv(ss.str());
    }
    Vec grid;
    for (std::size_t b = 0; b < cfg.renewal_grid_points; ++b)
        grid.push_back(cfg.renewal_grid_max * static_cast<double>(b) /
                       static_cast<double>(cfg.renewal_grid_points - 1));
    EnvModel tilted = cfg.model.tilt();
    RenewalTable t = renewal_function(tilted, grid, cfg.renewal_K_max, cfg.renewal_N,
                                      400, run.threads);
    if (cfg.want_csv) {
        std::ofstream os(out + "/renewal.csv");
        os << t.to_csv();
    }
    return t;
}

// deterministic harmonicity residual: E[V(x+X); x+X >= 0] by Simpson
// quadrature against the tabulated V
double harmonicity_residual(const RenewalTable& t, const EnvModel& tilted, double x) {
    double mu = tilted.rho_law.mu, sigma = tilted.rho_law.sigma;
    double lo = -x, hi = mu + 10.0 * sigma;
    if (hi <= lo) return 0.0;
    std::size_t steps = 4000;
    double h = (hi - lo) / static_cast<double>(steps);
    double acc = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
        double u = lo + h * static_cast<double>(k);
        double phi = std::exp(-(u - mu) * (u - mu) / (2 * sigma * sigma)) /
                     (sigma * std::sqrt(2 * M_PI));
        double w = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        acc += w * t.eval(x + u) * phi;
    }
    acc *= h / 3.0;
    return std::abs(acc - t.eval(x)) / t.eval(x);
}

void suite_renewal(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    RenewalTable t = obtain_renewal(run, out);
    EnvModel tilted = cfg.model.tilt();

    bool monotone = true;
    for (std::size_t b = 1; b < t.values.size(); ++b)
        monotone = monotone && t.values[b] >= t.values[b - 1];
    double worst_res = 0.0;
    // skip the top grid point: the quadrature would extrapolate past the table
    for (std::size_t b = 0; b + 1 < t.grid.size(); ++b)
        worst_res = std::max(worst_res, harmonicity_residual(t, tilted, t.grid[b]));

    run.diagnostics["harmonicity_residual"] = worst_res;
    run.diagnostics["tail_diag"] = t.tail_diag;
    run.verdict("v0_is_one", std::abs(t.values.front() - 1.0) <= cfg.tol_v0);
    run.verdict("monotone", monotone);
    run.verdict("harmonicity", worst_res <= cfg.tol_harmonicity);
    run.record("renewal_function",
               json{{"grid", t.grid}, {"values", t.values}},
               0.0,
               json{{"harmonicity_residual", worst_res},
                    {"tail_diag", t.tail_diag}});
}

void suite_interm_ratio(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    ZKey el(cfg.model.K, 0);
    el[cfg.l] = 1;
    RatioTable t = verify_interm_ratio(cfg.model, cfg.i, el, cfg.n_grid, cfg.N,
                                       cfg.tol_drift, 500, run.threads);
    const RatioRow& last = t.rows.back();
    run.verdict("ratio_stabilized", t.stabilized);
    run.verdict("ratio_positive", last.value.mean > 0.0);

    RenewalTable renewal = obtain_renewal(run, out);
    IntermDelta d = estimate_interm_delta(cfg.model, cfg.i, cfg.l, cfg.horizons,
                                          cfg.constants_N, renewal, 600, run.threads,
                                          cfg.tol_delta_tail);
    double diff = std::abs(last.value.mean - d.delta_el);
    double comb = std::sqrt(last.value.stderr_ * last.value.stderr_ +
                            d.stderr_el * d.stderr_el);
    run.verdict("ratio_matches_delta", diff <= cfg.tol_sigma * comb);
    run.record("interm_ratio",
               json{{"ratios", [&] {
                        json a = json::array();
                        for (const auto& r : t.rows)
                            a.push_back(json{{"n", r.n},
                                             {"value", r.value.mean},
                                             {"stderr", r.value.stderr_}});
                        return a;
                    }()}},
               last.value.stderr_,
               json{{"rel_drift", t.rel_drift}, {"verdict", t.verdict}});
    run.record("interm_delta",
               json{{"delta_hat", d.delta_hat.mean}, {"delta_el", d.delta_el}},
               d.stderr_el, json{{"tail_diag", d.tail_diag}});

    if (cfg.want_csv) {
        std::vector<std::string> rows;
        for (const auto& r : t.rows)
            rows.push_back(std::to_string(r.n) + "," + fmt(r.value.mean) + "," +
                           fmt(r.value.stderr_) + "," + fmt(d.delta_el));
        write_csv(out + "/interm_ratio.csv", "n,ratio,stderr,delta_ref", rows);
    }
}

void suite_interm_q(Run& run, const std::string& out) {
    const auto& cfg = run.cfg;
    auto support = enumerate_support(cfg.model.K, cfg.z_max);
    RenewalTable renewal = obtain_renewal(run, out);
    QEstimate q = estimate_q(cfg.model, support, cfg.horizons.n_inner, cfg.constants_N,
                             renewal, 700, run.threads);
    ZMap cond = interm_cond_law(cfg.model, cfg.i, cfg.l, cfg.n_grid.back(), support,
                                cfg.N, 701, run.threads);

    bool nonneg = true, agree = true;
    std::vector<std::string> rows;
    for (const auto& z : support) {
        const MeanStderr& a = q.q_dist[z];
        const MeanStderr& b = cond[z];
        nonneg = nonneg && a.mean >= 0.0;
        double se = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
        agree = agree && std::abs(a.mean - b.mean) <= cfg.tol_sigma * std::max(se, 1e-12);
        rows.push_back(zkey_str(z) + "," + fmt(a.mean) + "," + fmt(a.stderr_) + "," +
                       fmt(b.mean) + "," + fmt(b.stderr_));
    }
    run.verdict("q_nonnegative", nonneg);
    run.verdict("cond_law_matches_q", agree);
    run.record("estimate_q", json{{"support_mass", q.support_mass}}, 0.0);

    ZKey z1(cfg.model.K, 0);
    z1[cfg.i] = 1;
    auto ki = lemma_k_independence(cfg.model, z1, {1, 2}, cfg.horizons.n_inner, cfg.N,
                                   702, run.threads);
    double se = std::sqrt(ki[0].stderr_ * ki[0].stderr_ +
                          ki[1].stderr_ * ki[1].stderr_);
    run.verdict("k_independence",
                std::abs(ki[0].mean - ki[1].mean) <= cfg.tol_sigma * se);
    run.record("lemma_k_independence",
               json{{"k1", ki[0].mean}, {"k2", ki[1].mean}}, se);
    if (cfg.want_csv)
        write_csv(out + "/interm_q.csv", "z,q_dist,stderr_q,cond,stderr_cond", rows);
}

int cmd_run(const std::string& config_path, std::string out_dir, int threads_arg,
            long long seed_arg) {
    std::ifstream is(config_path);
    if (!is) {
        std::cerr << "cannot read config " << config_path << "\n";
        return 2;
    }
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        std::cerr << "config parse error: " << e.what() << "\n";
        return 2;
    }

    Run run;
    try {
        run.cfg = parse_config(j);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    if (seed_arg >= 0) {
        run.cfg.seed = static_cast<std::uint64_t>(seed_arg);
        run.cfg.model.seed = run.cfg.seed;
    }
    if (out_dir.empty()) out_dir = run.cfg.out_dir;
    if (out_dir.empty()) {
        std::cerr << "no output directory (config output.dir or --out)\n";
        return 2;
    }
    run.threads = resolve_threads(threads_arg);
    run.fixture_hash = run.cfg.model.config_hash();

    std::filesystem::create_directories(out_dir);
    auto start = std::chrono::system_clock::now();

    int status = 0;
    try {
        if (run.cfg.suite == "quenched-selftest") suite_quenched_selftest(run, out_dir);
        else if (run.cfg.suite == "strong-ratio") suite_strong_ratio(run, out_dir);
        else if (run.cfg.suite == "strong-p") suite_strong_p(run, out_dir);
        else if (run.cfg.suite == "uniform") suite_uniform(run, out_dir);
        else if (run.cfg.suite == "interm-ratio") suite_interm_ratio(run, out_dir);
        else if (run.cfg.suite == "interm-q") suite_interm_q(run, out_dir);
        else if (run.cfg.suite == "renewal") suite_renewal(run, out_dir);
    } catch (const Error& e) {
        std::cerr << "suite failed: " << e.what() << "\n";
        run.verdict("suite_completed", false);
        run.diagnostics["error"] = e.what();
        status = 1;
    }

    if (run.cfg.want_jsonl) {
        std::ofstream os(out_dir + "/results.jsonl");
        for (const auto& r : run.results) os << r.dump() << "\n";
    }

    bool all_pass = status == 0;
    json verdicts = json::object();
    for (const auto& [k, v] : run.verdicts) {
        verdicts[k] = v;
        all_pass = all_pass && v;
    }
    auto stamp = [](std::chrono::system_clock::time_point tp) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   tp.time_since_epoch())
            .count();
    };
    json manifest{{"config_hash", run.fixture_hash},
                  {"code_version", kVersion},
                  {"suite", run.cfg.suite},
                  {"seed", run.cfg.seed},
                  {"threads", run.threads},
                  {"start_ms", stamp(start)},
                  {"end_ms", stamp(std::chrono::system_clock::now())},
                  {"verdicts", verdicts},
                  {"diagnostics", run.diagnostics},
                  {"pass", all_pass}};
    {
        // atomic write: temp file then rename
        std::string tmp = out_dir + "/manifest.json.tmp";
        std::ofstream os(tmp);
        os << manifest.dump(2) << "\n";
        os.close();
        std::filesystem::rename(tmp, out_dir + "/manifest.json");
    }

    for (const auto& [k, v] : run.verdicts)
        std::cout << (v ? "PASS " : "FAIL ") << k << "\n";
    return all_pass ? 0 : 1;
}

int cmd_validate(const std::string& config_path) {
    std::ifstream is(config_path);
    if (!is) {
        std::cerr << "cannot read config " << config_path << "\n";
        return 2;
    }
    try {
        json j = json::parse(is);
        parse_config(j);
    } catch (const std::exception& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return 1;
    }
    std::cout << "ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"branching-process verification harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = -1;
    long long seed = -1;

    CLI::App* runc = app.add_subcommand("run", "execute a suite");
    runc->add_option("--config", config_path, "experiment config JSON")->required();
    runc->add_option("--out", out_dir, "output directory");
    runc->add_option("--threads", threads, "worker threads (default: MBPRE_THREADS or all cores)");
    runc->add_option("--seed", seed, "override config seed");

    std::string vpath;
    CLI::App* val = app.add_subcommand("validate-config", "check a config file");
    val->add_option("path", vpath, "config JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (runc->parsed()) return cmd_run(config_path, out_dir, threads, seed);
        return cmd_validate(vpath);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
