#include "mbpre/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "mbpre/accumulator.hpp"
#include "mbpre/errors.hpp"
#include "mbpre/parallel.hpp"
#include "mbpre/rng.hpp"

namespace mbpre {

namespace {

constexpr std::size_t kShards = 64;
constexpr double kRFloor = 1e-12;

std::size_t pick_shards(std::uint64_t N) { return N >= kShards ? kShards : 1; }

void regime_guard(const EnvModel& model, Regime expected, const char* who) {
    RegimeReport rep = model.classify(0);
    if (rep.regime != expected)
        throw RegimeMismatch(std::string(who) + ": model regime is " +
                             to_string(rep.regime) + ", expected " + to_string(expected));
}

double ratio_stderr(double a, double sa, double b, double sb) {
    if (a == 0.0 || b == 0.0) return 0.0;
    double r = a / b;
    return std::abs(r) * std::sqrt((sa / a) * (sa / a) + (sb / b) * (sb / b));
}

// quenched mass of the tracked event
double event_mass(const QuenchedState& st, std::size_t i, const ZEvent& ev) {
    if (ev.kind == ZEvent::Total) return local_prob_total(st, i, ev.z);
    return local_prob_vector(st, i, ev.zvec);
}

// quenched P_z(Z_n = e_l) from a vector of initial particles: exactly one
// particle leaves the unit descendant, the others die out.
double mass_z_to_el(const QuenchedState& st, const ZKey& z, std::size_t l) {
    std::size_t k = st.v.size();
    DerivedQuantities dq = survival_probs(st);
    ZKey el(k, 0);
    el[l] = 1;
    double prod_all = 1.0;
    for (std::size_t j = 0; j < k; ++j)
        prod_all *= std::pow(dq.R[j], static_cast<double>(z[j]));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        if (z[j] == 0) continue;
        if (dq.R[j] <= 0.0) continue;
        total += static_cast<double>(z[j]) * local_prob_vector(st, j, el) *
                 prod_all / dq.R[j];
    }
    return total;
}

// quenched P_z(|Z_n| = k) by truncated convolution of per-particle total laws
double mass_z_to_total(const QuenchedState& st, const ZKey& z, long ktot) {
    std::size_t K = st.v.size();
    DerivedQuantities dq = survival_probs(st);
    std::vector<double> conv(static_cast<std::size_t>(ktot) + 1, 0.0);
    conv[0] = 1.0;
    for (std::size_t j = 0; j < K; ++j) {
        for (long p = 0; p < z[j]; ++p) {
            std::vector<double> nxt(conv.size(), 0.0);
            for (long a = 0; a <= ktot; ++a) {
                double c = conv[static_cast<std::size_t>(a)];
                if (c == 0.0) continue;
                nxt[static_cast<std::size_t>(a)] += c * dq.R[j];
                for (long m = 1; a + m <= ktot; ++m)
                    nxt[static_cast<std::size_t>(a + m)] += c * local_prob_total(st, j, m);
            }
            conv = std::move(nxt);
        }
    }
    return conv[static_cast<std::size_t>(ktot)];
}

// per-replica limits (G, u) via one backward eigenvector sweep over
// T = k_max + window + 1 letters
struct GuRep {
    double G = 0.0;
    Vec u;
    double tail = 0.0;
};

GuRep gu_replica(const EnvModel& tilted, const Vec& v, std::size_t k_max,
                 std::size_t window, Rng& rng) {
    std::size_t T = k_max + window + 1;
    std::vector<EnvLetter> letters(T + 1);  // 1-indexed
    for (std::size_t t = 1; t <= T; ++t) letters[t] = tilted.construct_law(rng);

    std::size_t K = v.size();
    double vsum = norm1(v);

    // u^{(t)} = direction of M_t M_{t+1} ... applied to a positive seed,
    // normalized (v, u) = 1; one backward pass gives every window at once.
    std::vector<Vec> u(T + 2);
    u[T + 1] = Vec(K, 1.0);
    {
        double s = dot(v, u[T + 1]);
        for (auto& x : u[T + 1]) x /= s;
    }
    for (std::size_t t = T; t >= 1; --t) {
        Vec y = matvec(letters[t].law.M, u[t + 1]);
        double s = dot(v, y);
        for (auto& x : y) x /= s;
        u[t] = std::move(y);
    }

    GuRep rep;
    rep.u = u[1];
    double S = 0.0, last = 0.0;
    for (std::size_t k = 0; k <= k_max; ++k) {
        if (k > 0) S += letters[k].x;
        double rho = std::exp(letters[k + 1].x);
        double eta = (vsum / rho) * dot(letters[k + 1].law.w, u[k + 2]);
        last = eta * std::exp(-S);
        rep.G += last;
    }
    rep.tail = rep.G > 0.0 ? last / rep.G : 1.0;
    return rep;
}

}  // namespace

double multinomial_weight(const ZKey& z, const Vec& v) {
    long zsum = 0;
    for (long c : z) {
        if (c < 0) throw DomainError("multinomial_weight: negative count");
        zsum += c;
    }
    if (zsum == 0) throw DomainError("multinomial_weight: z = 0");
    double vsum = norm1(v);
    double lg = std::lgamma(static_cast<double>(zsum) + 1.0) - std::log(vsum);
    for (std::size_t r = 0; r < z.size(); ++r) {
        if (z[r] == 0) continue;
        lg -= std::lgamma(static_cast<double>(z[r]) + 1.0);
        lg += z[r] * std::log(v[r] / vsum);
    }
    return std::exp(lg);
}

std::vector<ZKey> enumerate_support(std::size_t K, long z_total_max) {
    std::vector<ZKey> out;
    ZKey cur(K, 0);
    std::function<void(std::size_t, long)> rec = [&](std::size_t pos, long left) {
        if (pos + 1 == K) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (long c = left; c >= 0; --c) {
            cur[pos] = c;
            rec(pos + 1, left - c);
        }
    };
    for (long tot = 1; tot <= z_total_max; ++tot) rec(0, tot);
    return out;
}

GuSamples estimate_G_u(const EnvModel& model, std::size_t k_max, std::size_t window,
                       std::uint64_t N, std::uint64_t seed_stream, unsigned threads,
                       double tail_bound) {
    if (N == 0) throw DomainError("estimate_G_u: N >= 1");
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);

    GuSamples out;
    out.G.resize(N);
    out.u.resize(N);
    std::vector<double> tails(n_shards, 0.0);

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x67755f73ULL, s));
        double worst = 0.0;
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            GuRep rep = gu_replica(tilted, model.v, k_max, window, rng);
            out.G[r] = rep.G;
            out.u[r] = std::move(rep.u);
            worst = std::max(worst, rep.tail);
        }
        tails[s] = worst;
    });

    for (double t : tails) out.tail_diag_max = std::max(out.tail_diag_max, t);
    if (out.tail_diag_max > tail_bound)
        throw TailNotConverged("estimate_G_u: truncated tail ratio " +
                               std::to_string(out.tail_diag_max) + " exceeds bound");
    return out;
}

StrongLimitConstants estimate_strong_constants(const EnvModel& model,
                                               const std::vector<ZKey>& z_support,
                                               std::uint64_t N, const Horizons& horizons,
                                               std::uint64_t seed_stream,
                                               unsigned threads) {
    regime_guard(model, Regime::StronglySupercritical, "estimate_strong_constants");
    if (N == 0) throw DomainError("estimate_strong_constants: N >= 1");
    std::size_t K = model.K;
    double vsum = norm1(model.v);
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::size_t nz = z_support.size();

    struct ShardAcc {
        Accum G;
        AccumVec u, Q, theta, thetaQ;
        std::vector<Accum> p;
        Accum total;
        double tail = 0.0;
        std::uint64_t clamps = 0;
    };
    std::vector<ShardAcc> acc(n_shards);
    for (auto& a : acc) {
        a.u = AccumVec(K);
        a.Q = AccumVec(K);
        a.theta = AccumVec(K);
        a.thetaQ = AccumVec(K);
        a.p.resize(nz);
    }

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x7374726fULL, s));
        ShardAcc& a = acc[s];
        Vec Q(K), R(K);
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            GuRep rep = gu_replica(tilted, model.v, horizons.k_max, horizons.window, rng);
            a.tail = std::max(a.tail, rep.tail);
            a.G.add(rep.G);
            for (std::size_t i = 0; i < K; ++i) {
                a.u.a[i].add(rep.u[i]);
                double q = rep.u[i] / rep.G;
                if (q > 1.0 - kRFloor) {
                    q = 1.0 - kRFloor;
                    ++a.clamps;
                }
                Q[i] = q;
                R[i] = 1.0 - q;
                a.Q.a[i].add(q);
                a.theta.a[i].add(rep.u[i] / (rep.G * rep.G) / vsum);
                a.thetaQ.a[i].add(q * q / rep.u[i] / vsum);
            }
            for (std::size_t zi = 0; zi < nz; ++zi) {
                const ZKey& z = z_support[zi];
                double prod = 1.0;
                long zsum = 0;
                for (std::size_t j = 0; j < K; ++j) {
                    prod *= std::pow(R[j], static_cast<double>(z[j]));
                    zsum += z[j];
                }
                double integ = 0.0;
                for (std::size_t rr = 0; rr < K; ++rr) {
                    if (z[rr] == 0) continue;
                    integ += (static_cast<double>(z[rr]) / rep.u[rr]) *
                             (Q[rr] * Q[rr] / R[rr]) * prod;
                }
                a.p[zi].add(integ);
            }
            // total mass of p over all z in closed form:
            //   sum_r v_r Q(r)^2 / (u_r |v|^2 (1-X)^2),  X = sum_j v_j R(j)/|v|
            double X = 0.0;
            for (std::size_t j = 0; j < K; ++j) X += model.v[j] * R[j] / vsum;
            double tot = 0.0;
            for (std::size_t rr = 0; rr < K; ++rr)
                tot += model.v[rr] * Q[rr] * Q[rr] /
                       (rep.u[rr] * vsum * vsum * (1.0 - X) * (1.0 - X));
            a.total.add(tot);
        }
    });

    ShardAcc m;
    m.u = AccumVec(K);
    m.Q = AccumVec(K);
    m.theta = AccumVec(K);
    m.thetaQ = AccumVec(K);
    m.p.resize(nz);
    for (const auto& a : acc) {
        m.G.merge(a.G);
        m.u.merge(a.u);
        m.Q.merge(a.Q);
        m.theta.merge(a.theta);
        m.thetaQ.merge(a.thetaQ);
        for (std::size_t zi = 0; zi < nz; ++zi) m.p[zi].merge(a.p[zi]);
        m.total.merge(a.total);
        m.tail = std::max(m.tail, a.tail);
        m.clamps += a.clamps;
    }

    StrongLimitConstants out;
    out.horizons = horizons;
    out.tail_diag = m.tail;
    out.clamp_count = m.clamps;
    out.G = MeanStderr{m.G.mean(), m.G.stderr_()};
    out.u.resize(K);
    out.Q.resize(K);
    out.theta.resize(K);
    out.theta_fromQ.resize(K);
    out.Theta.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
        out.u[i] = m.u.a[i].mean();
        out.Q[i] = MeanStderr{m.Q.a[i].mean(), m.Q.a[i].stderr_()};
        out.theta[i] = MeanStderr{m.theta.a[i].mean(), m.theta.a[i].stderr_()};
        out.theta_fromQ[i] = MeanStderr{m.thetaQ.a[i].mean(), m.thetaQ.a[i].stderr_()};
        for (const ZKey& z : z_support) {
            double c = multinomial_weight(z, model.v);
            // Theta_i(z) = C(z,v) E[Q(i)^2/u_i]; shares the theta_fromQ sample
            // mean so sum_{|z|=z} Theta_i(z) = theta_i holds exactly
            out.Theta[i][z] = MeanStderr{c * vsum * out.theta_fromQ[i].mean,
                                         c * vsum * out.theta_fromQ[i].stderr_};
        }
    }
    for (std::size_t zi = 0; zi < nz; ++zi) {
        double c = multinomial_weight(z_support[zi], model.v);
        out.p_dist[z_support[zi]] =
            MeanStderr{c * m.p[zi].mean(), c * m.p[zi].stderr_()};
    }
    out.p_total = MeanStderr{m.total.mean(), m.total.stderr_()};
    return out;
}

namespace {

// tilted-replica mean of e^{S_n} x mass(state) at each grid point
std::vector<MeanStderr> annealed_ratio(const EnvModel& model, std::size_t i,
                                       const ZEvent& event,
                                       const std::vector<std::size_t>& n_grid,
                                       std::uint64_t N, std::uint64_t stream_tag,
                                       std::uint64_t seed_stream, unsigned threads) {
    if (n_grid.empty()) throw DomainError("annealed_ratio: empty grid");
    std::size_t n_max = *std::max_element(n_grid.begin(), n_grid.end());
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::vector<AccumVec> acc(n_shards, AccumVec(n_grid.size()));

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, stream_tag, s));
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            QuenchedState st = QuenchedState::initial(model.v);
            for (std::size_t t = 1; t <= n_max; ++t) {
                st = step(st, tilted.construct_law(rng).law);
                for (std::size_t g = 0; g < n_grid.size(); ++g)
                    if (n_grid[g] == t)
                        acc[s].a[g].add(std::exp(st.S) * event_mass(st, i, event));
            }
        }
    });

    AccumVec m(n_grid.size());
    for (const auto& a : acc) m.merge(a);
    std::vector<MeanStderr> out(n_grid.size());
    for (std::size_t g = 0; g < n_grid.size(); ++g)
        out[g] = MeanStderr{m.a[g].mean(), m.a[g].stderr_()};
    return out;
}

RatioTable finish_table(const std::vector<std::size_t>& n_grid,
                        const std::vector<MeanStderr>& vals, double drift_tol) {
    RatioTable t;
    for (std::size_t g = 0; g < n_grid.size(); ++g)
        t.rows.push_back(RatioRow{n_grid[g], vals[g]});
    if (t.rows.size() < 2) {
        t.verdict = "insufficient grid";
        return t;
    }
    double last = t.rows.back().value.mean;
    double prev = t.rows[t.rows.size() - 2].value.mean;
    t.rel_drift = prev != 0.0 ? std::abs(last - prev) / std::abs(prev) : 1.0;
    t.stabilized = t.rel_drift <= drift_tol;
    t.verdict = t.stabilized ? "stabilized" : "drifting";
    return t;
}

}  // namespace

RatioTable verify_strong_ratio(const EnvModel& model, std::size_t i, const ZEvent& event,
                               const std::vector<std::size_t>& n_grid, std::uint64_t N,
                               double drift_tol, std::uint64_t seed_stream,
                               unsigned threads) {
    regime_guard(model, Regime::StronglySupercritical, "verify_strong_ratio");
    auto vals = annealed_ratio(model, i, event, n_grid, N, 0x76737261ULL, seed_stream,
                               threads);
    return finish_table(n_grid, vals, drift_tol);
}

IntermDelta estimate_interm_delta(const EnvModel& model, std::size_t i, std::size_t l,
                                  const Horizons& horizons, std::uint64_t N,
                                  const RenewalTable& renewal,
                                  std::uint64_t seed_stream, unsigned threads,
                                  double tail_bound) {
    regime_guard(model, Regime::IntermediatelySupercritical, "estimate_interm_delta");
    if (renewal.grid.empty())
        throw MissingRenewalTable("estimate_interm_delta: no renewal table");
    if (l >= model.K) throw IndexError("estimate_interm_delta: l out of range");
    std::size_t K = model.K;
    std::size_t k_max = horizons.k_max, N_inf = horizons.N_infty;
    std::size_t T = k_max + N_inf;
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);

    struct ShardAcc {
        Accum total;
        std::vector<double> per_k;
        std::vector<std::uint64_t> epochs;
    };
    std::vector<ShardAcc> acc(n_shards);
    for (auto& a : acc) {
        a.per_k.assign(k_max + 1, 0.0);
        a.epochs.assign(k_max + 1, 0);
    }

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x64656c74ULL, s));
        ShardAcc& a = acc[s];
        std::vector<EnvLetter> letters(T + 1);
        Vec S(T + 1);
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            S[0] = 0.0;
            for (std::size_t t = 1; t <= T; ++t) {
                letters[t] = tilted.construct_law(rng);
                S[t] = S[t - 1] + letters[t].x;
            }
            // windowed limit eigenvector of M_{1,window}
            Vec u(K, 1.0);
            std::size_t w_end = std::min(horizons.window, T);
            for (std::size_t t = w_end; t >= 1; --t) {
                u = matvec(letters[t].law.M, u);
                double sc = dot(model.v, u);
                for (auto& x : u) x /= sc;
            }

            QuenchedState prefix = QuenchedState::initial(model.v);
            double min_before = S[0];  // min(S_0..S_{k-1}) during iteration k
            double total = 0.0;
            for (std::size_t k = 0; k <= k_max; ++k) {
                bool ladder = true;  // tau_0 = 0 always
                if (k > 0) {
                    prefix = step(prefix, letters[k].law);
                    ladder = S[k] < min_before;  // strict descending ladder epoch
                    min_before = std::min(min_before, S[k]);
                }
                if (!ladder) continue;
                ++a.epochs[k];

                // suffix letters k+1 .. k+N_inf: extinction vector and the
                // conditioned-walk weight
                QuenchedState suf = QuenchedState::initial(model.v);
                double suf_min = 0.0, suf_S = 0.0;
                for (std::size_t t = k + 1; t <= k + N_inf; ++t) {
                    suf = step(suf, letters[t].law);
                    suf_S = S[t] - S[k];
                    suf_min = std::min(suf_min, suf_S);
                }
                double weight = suf_min >= 0.0 ? renewal.eval(suf_S) : 0.0;
                if (weight == 0.0) continue;

                DerivedQuantities dq = survival_probs(suf);
                Vec sstar(K);
                for (std::size_t j = 0; j < K; ++j) sstar[j] = dq.R[j];
                double f = gf_eval(prefix, i, sstar);
                double contrib = (1.0 - f) * (1.0 - f) / u[i] * weight;
                total += contrib;
                a.per_k[k] += contrib;
            }
            a.total.add(total);
        }
    });

    Accum total;
    std::vector<double> per_k(k_max + 1, 0.0);
    std::vector<std::uint64_t> epochs(k_max + 1, 0);
    for (const auto& a : acc) {
        total.merge(a.total);
        for (std::size_t k = 0; k <= k_max; ++k) {
            per_k[k] += a.per_k[k];
            epochs[k] += a.epochs[k];
        }
    }

    IntermDelta out;
    out.delta_hat = MeanStderr{total.mean(), total.stderr_()};
    double vsum = norm1(model.v);
    out.delta_el = vsum * vsum * out.delta_hat.mean / model.v[l];
    out.stderr_el = vsum * vsum * out.delta_hat.stderr_ / model.v[l];
    out.per_k.resize(k_max + 1);
    out.weight_k.resize(k_max + 1);
    double grand = 0.0, tail_sum = 0.0;
    std::size_t decile = k_max - k_max / 10;
    for (std::size_t k = 0; k <= k_max; ++k) {
        out.per_k[k] = per_k[k] / static_cast<double>(N);
        out.weight_k[k] = static_cast<double>(epochs[k]) / static_cast<double>(N);
        grand += out.per_k[k];
        if (k >= decile) tail_sum += out.per_k[k];
    }
    out.tail_diag = grand > 0.0 ? tail_sum / grand : 0.0;
    if (out.tail_diag > tail_bound)
        throw TailNotConverged("estimate_interm_delta: last-decile share " +
                               std::to_string(out.tail_diag) + " exceeds bound");
    return out;
}

RatioTable verify_interm_ratio(const EnvModel& model, std::size_t i, const ZKey& zvec,
                               const std::vector<std::size_t>& n_grid, std::uint64_t N,
                               double drift_tol, std::uint64_t seed_stream,
                               unsigned threads) {
    regime_guard(model, Regime::IntermediatelySupercritical, "verify_interm_ratio");
    ZEvent ev;
    ev.kind = ZEvent::Vector;
    ev.zvec = zvec;
    auto num = annealed_ratio(model, i, ev, n_grid, N, 0x76697261ULL, seed_stream,
                              threads);
    EnvModel tilted = model.tilt();
    std::vector<MeanStderr> vals(n_grid.size());
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
        MeanStderr den = prob_min_nonneg(tilted, n_grid[g], N,
                                         derive_seed(seed_stream, 0x64656e6fULL, g),
                                         threads);
        double r = den.mean > 0.0 ? num[g].mean / den.mean : 0.0;
        vals[g] = MeanStderr{r, ratio_stderr(num[g].mean, num[g].stderr_, den.mean,
                                             den.stderr_)};
    }
    return finish_table(n_grid, vals, drift_tol);
}

QEstimate estimate_q(const EnvModel& model, const std::vector<ZKey>& z_support,
                     std::size_t n, std::uint64_t N, const RenewalTable& renewal,
                     std::uint64_t seed_stream, unsigned threads) {
    regime_guard(model, Regime::IntermediatelySupercritical, "estimate_q");
    if (renewal.grid.empty()) throw MissingRenewalTable("estimate_q: no renewal table");
    if (n == 0 || N == 0) throw DomainError("estimate_q: n, N >= 1");
    std::size_t K = model.K;
    double vsum = norm1(model.v);
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::size_t nz = z_support.size();
    std::vector<AccumVec> acc(n_shards, AccumVec(nz));

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x71657374ULL, s));
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            QuenchedState st = QuenchedState::initial(model.v);
            double S = 0.0, L = 0.0;
            for (std::size_t t = 1; t <= n; ++t) {
                EnvLetter letter = tilted.construct_law(rng);
                st = step(st, letter.law);
                S += letter.x;
                L = std::min(L, S);
            }
            if (L < 0.0) {
                for (std::size_t zi = 0; zi < nz; ++zi) acc[s].a[zi].add(0.0);
                continue;
            }
            double weight = renewal.eval(S);
            DerivedQuantities dq = survival_probs(st);
            for (std::size_t zi = 0; zi < nz; ++zi) {
                const ZKey& z = z_support[zi];
                double prod = 1.0;
                for (std::size_t j = 0; j < K; ++j)
                    prod *= std::pow(dq.R[j], static_cast<double>(z[j]));
                double integ = 0.0;
                for (std::size_t ii = 0; ii < K; ++ii) {
                    if (z[ii] == 0) continue;
                    double rfl = std::max(dq.R[ii], kRFloor);
                    integ += (static_cast<double>(z[ii]) / (vsum * dq.u_hat[ii])) *
                             (dq.Q[ii] * dq.Q[ii] / rfl) * prod;
                }
                acc[s].a[zi].add(integ * weight);
            }
        }
    });

    AccumVec m(nz);
    for (const auto& a : acc) m.merge(a);
    QEstimate out;
    for (std::size_t zi = 0; zi < nz; ++zi) {
        const ZKey& z = z_support[zi];
        double c = multinomial_weight(z, model.v);
        out.T_hat[z] = MeanStderr{m.a[zi].mean(), m.a[zi].stderr_()};
        out.q_dist[z] = MeanStderr{c * vsum * m.a[zi].mean(), c * vsum * m.a[zi].stderr_()};
        out.support_mass += out.q_dist[z].mean;
    }
    return out;
}

std::vector<MeanStderr> lemma_k_independence(const EnvModel& model, const ZKey& z,
                                             const std::vector<long>& ks, std::size_t n,
                                             std::uint64_t N, std::uint64_t seed_stream,
                                             unsigned threads) {
    regime_guard(model, Regime::IntermediatelySupercritical, "lemma_k_independence");
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::size_t nk = ks.size();
    std::vector<AccumVec> num(n_shards, AccumVec(nk));
    std::vector<Accum> den(n_shards);

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x6b696e64ULL, s));
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            QuenchedState st = QuenchedState::initial(model.v);
            double S = 0.0, L = 0.0;
            for (std::size_t t = 1; t <= n; ++t) {
                EnvLetter letter = tilted.construct_law(rng);
                st = step(st, letter.law);
                S += letter.x;
                L = std::min(L, S);
            }
            bool keep = L >= 0.0;
            den[s].add(keep ? 1.0 : 0.0);
            for (std::size_t ki = 0; ki < nk; ++ki)
                num[s].a[ki].add(keep ? std::exp(S) * mass_z_to_total(st, z, ks[ki])
                                      : 0.0);
        }
    });

    AccumVec mnum(nk);
    Accum mden;
    for (std::size_t s = 0; s < n_shards; ++s) {
        mnum.merge(num[s]);
        mden.merge(den[s]);
    }
    std::vector<MeanStderr> out(nk);
    for (std::size_t ki = 0; ki < nk; ++ki) {
        double r = mden.mean() > 0.0 ? mnum.a[ki].mean() / mden.mean() : 0.0;
        out[ki] = MeanStderr{r, ratio_stderr(mnum.a[ki].mean(), mnum.a[ki].stderr_(),
                                             mden.mean(), mden.stderr_())};
    }
    return out;
}

ZMap interm_cond_law(const EnvModel& model, std::size_t i, std::size_t l,
                     std::size_t n, const std::vector<ZKey>& z_support, std::uint64_t N,
                     std::uint64_t seed_stream, unsigned threads) {
    regime_guard(model, Regime::IntermediatelySupercritical, "interm_cond_law");
    if (n < 2) throw DomainError("interm_cond_law: n >= 2");
    std::size_t K = model.K;
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::size_t nz = z_support.size();
    std::vector<AccumVec> num(n_shards, AccumVec(nz));
    std::vector<Accum> den(n_shards);
    std::size_t half = n / 2;
    ZKey el(K, 0);
    el[l] = 1;

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x63746175ULL, s));
        std::vector<EnvLetter> letters(n + 1);
        Vec S(n + 1);
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            S[0] = 0.0;
            for (std::size_t t = 1; t <= n; ++t) {
                letters[t] = tilted.construct_law(rng);
                S[t] = S[t - 1] + letters[t].x;
            }
            // m = tau_{half,n}: first index in [half, n] attaining the suffix min
            std::size_t m = half;
            for (std::size_t j = half + 1; j <= n; ++j)
                if (S[j] < S[m]) m = j;

            QuenchedState prefix = QuenchedState::initial(model.v);
            for (std::size_t t = 1; t <= m; ++t) prefix = step(prefix, letters[t].law);
            QuenchedState full = prefix;
            QuenchedState suffix = QuenchedState::initial(model.v);
            for (std::size_t t = m + 1; t <= n; ++t) {
                full = step(full, letters[t].law);
                suffix = step(suffix, letters[t].law);
            }
            double wden = std::exp(S[n]) * local_prob_vector(full, i, el);
            den[s].add(wden);
            for (std::size_t zi = 0; zi < nz; ++zi) {
                const ZKey& z = z_support[zi];
                double suf = m == n ? (z == el ? 1.0 : 0.0)
                                    : mass_z_to_el(suffix, z, l);
                double joint =
                    std::exp(S[n]) * local_prob_vector(prefix, i, z) * suf;
                num[s].a[zi].add(joint);
            }
        }
    });

    AccumVec mnum(nz);
    Accum mden;
    for (std::size_t s = 0; s < n_shards; ++s) {
        mnum.merge(num[s]);
        mden.merge(den[s]);
    }
    ZMap out;
    for (std::size_t zi = 0; zi < nz; ++zi) {
        double r = mden.mean() > 0.0 ? mnum.a[zi].mean() / mden.mean() : 0.0;
        out[z_support[zi]] =
            MeanStderr{r, ratio_stderr(mnum.a[zi].mean(), mnum.a[zi].stderr_(),
                                       mden.mean(), mden.stderr_())};
    }
    return out;
}

std::vector<UniformRow> verify_uniform(const EnvModel& model, std::size_t i, long c,
                                       const std::vector<std::size_t>& n_grid,
                                       std::uint64_t N, std::uint64_t seed_stream,
                                       unsigned threads) {
    if (c < 1) throw DomainError("verify_uniform: c >= 1");
    if (n_grid.empty()) throw DomainError("verify_uniform: empty grid");
    std::size_t n_max = *std::max_element(n_grid.begin(), n_grid.end());
    EnvModel tilted = model.tilt();
    std::size_t n_shards = pick_shards(N);
    auto ranges = shard_ranges(N, n_shards);
    std::size_t cells = n_grid.size() * static_cast<std::size_t>(c);
    std::vector<AccumVec> acc(n_shards, AccumVec(cells));

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x756e6966ULL, s));
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            QuenchedState st = QuenchedState::initial(model.v);
            for (std::size_t t = 1; t <= n_max; ++t) {
                st = step(st, tilted.construct_law(rng).law);
                for (std::size_t g = 0; g < n_grid.size(); ++g) {
                    if (n_grid[g] != t) continue;
                    for (long z = 1; z <= c; ++z)
                        acc[s].a[g * c + static_cast<std::size_t>(z - 1)].add(
                            std::exp(st.S) * local_prob_total(st, i, z));
                }
            }
        }
    });

    AccumVec m(cells);
    for (const auto& a : acc) m.merge(a);
    std::vector<UniformRow> out;
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
        UniformRow row;
        row.n = n_grid[g];
        double total = 0.0;
        for (long z = 1; z <= c; ++z)
            total += m.a[g * c + static_cast<std::size_t>(z - 1)].mean();
        for (long z = 1; z <= c; ++z) {
            const Accum& a = m.a[g * c + static_cast<std::size_t>(z - 1)];
            double p = total > 0.0 ? a.mean() / total : 0.0;
            double se = total > 0.0 ? a.stderr_() / total : 0.0;
            row.cond.push_back(MeanStderr{p, se});
            row.max_dev = std::max(row.max_dev,
                                   std::abs(p - 1.0 / static_cast<double>(c)));
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<CondTable> verify_p(const EnvModel& model, std::size_t i, std::size_t l,
                                double t, const std::vector<ZKey>& z_support,
                                const std::vector<std::size_t>& n_grid, std::uint64_t N,
                                std::uint64_t seed_stream, unsigned threads) {
    regime_guard(model, Regime::StronglySupercritical, "verify_p");
    if (t <= 0.0 || t >= 1.0) throw DomainError("verify_p: t in (0,1)");
    std::size_t K = model.K;
    EnvModel tilted = model.tilt();
    std::size_t nz = z_support.size();
    ZKey el(K, 0);
    el[l] = 1;

    std::vector<CondTable> out;
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        std::size_t n = n_grid[gi];
        std::size_t m = static_cast<std::size_t>(static_cast<double>(n) * t);
        if (m < 1 || m >= n) throw DomainError("verify_p: floor(nt) out of (0,n)");

        // factor A(z): kappa^{-m} P(Z_m = z); factor B(z): kappa^{-(n-m)}
        // P_z(Z_{n-m} = e_l); factor C: kappa^{-n} P(Z_n = e_l).  Environments
        // before and after m are independent, so A B / C is the conditional
        // law and the kappa powers cancel.
        std::size_t n_shards = pick_shards(N);
        auto ranges = shard_ranges(N, n_shards);
        std::vector<AccumVec> accA(n_shards, AccumVec(nz)), accB(n_shards, AccumVec(nz));
        std::vector<Accum> accC(n_shards);

        parallel_shards(n_shards, threads, [&](std::size_t s) {
            Rng rng = make_rng(model.seed,
                               derive_seed(seed_stream, 0x70666163ULL + gi, s));
            for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
                QuenchedState pre = QuenchedState::initial(model.v);
                for (std::size_t tt = 1; tt <= m; ++tt)
                    pre = step(pre, tilted.construct_law(rng).law);
                for (std::size_t zi = 0; zi < nz; ++zi)
                    accA[s].a[zi].add(std::exp(pre.S) *
                                      local_prob_vector(pre, i, z_support[zi]));

                QuenchedState suf = QuenchedState::initial(model.v);
                for (std::size_t tt = 1; tt + m <= n; ++tt)
                    suf = step(suf, tilted.construct_law(rng).law);
                for (std::size_t zi = 0; zi < nz; ++zi)
                    accB[s].a[zi].add(std::exp(suf.S) *
                                      mass_z_to_el(suf, z_support[zi], l));

                QuenchedState full = QuenchedState::initial(model.v);
                for (std::size_t tt = 1; tt <= n; ++tt)
                    full = step(full, tilted.construct_law(rng).law);
                accC[s].add(std::exp(full.S) * local_prob_vector(full, i, el));
            }
        });

        AccumVec mA(nz), mB(nz);
        Accum mC;
        for (std::size_t s = 0; s < n_shards; ++s) {
            mA.merge(accA[s]);
            mB.merge(accB[s]);
            mC.merge(accC[s]);
        }
        CondTable tab;
        tab.n = n;
        for (std::size_t zi = 0; zi < nz; ++zi) {
            double a = mA.a[zi].mean(), b = mB.a[zi].mean(), cc = mC.mean();
            double val = cc > 0.0 ? a * b / cc : 0.0;
            double rel = 0.0;
            if (a > 0.0) rel += (mA.a[zi].stderr_() / a) * (mA.a[zi].stderr_() / a);
            if (b > 0.0) rel += (mB.a[zi].stderr_() / b) * (mB.a[zi].stderr_() / b);
            if (cc > 0.0) rel += (mC.stderr_() / cc) * (mC.stderr_() / cc);
            tab.cond[z_support[zi]] = MeanStderr{val, val * std::sqrt(rel)};
            tab.mass += val;
        }
        out.push_back(std::move(tab));
    }
    return out;
}

}  // namespace mbpre
