#ifndef MBPRE_ESTIMATORS_HPP
#define MBPRE_ESTIMATORS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mbpre/env_model.hpp"
#include "mbpre/linfrac.hpp"
#include "mbpre/walk.hpp"

namespace mbpre {

// Truncation horizons for the nested limits; every estimator reports tail
// diagnostics instead of silently trusting these.
struct Horizons {
    std::size_t k_max = 200;    // series truncation (G, delta sums)
    std::size_t window = 50;    // eigenvector window length
    std::size_t n_inner = 400;  // prefix length standing in for n -> infinity
    std::size_t N_infty = 400;  // suffix length standing in for the inner limit
};

using ZKey = std::vector<long>;
using ZMap = std::map<ZKey, MeanStderr>;

// C(z,v) = (|z|!/(z_1!..z_K!|v|)) prod_r (v_r/|v|)^{z_r}
double multinomial_weight(const ZKey& z, const Vec& v);

// All z with 1 <= |z| <= z_total_max (enumeration order: lexicographic).
std::vector<ZKey> enumerate_support(std::size_t K, long z_total_max);

// ---------------------------------------------------------------------------
// strong regime
// ---------------------------------------------------------------------------

struct GuSamples {
    std::vector<double> G;
    std::vector<Vec> u;
    double tail_diag_max = 0.0;  // max over replicas of last-term/total ratio
};

// Per-replica samples of the a.s. limits (G, u): G = sum_k eta_{k+1} e^{-S_k}
// truncated at k_max, with the windowed right-eigenvector approximation of
// u^{(k)} computed by one backward normalization sweep.  Sampling is done
// under the tilted model.  Throws TailNotConverged when the truncated tail
// exceeds tail_bound for any replica.
GuSamples estimate_G_u(const EnvModel& model, std::size_t k_max, std::size_t window,
                       std::uint64_t N, std::uint64_t seed_stream = 0,
                       unsigned threads = 1, double tail_bound = 1e-6);

struct StrongLimitConstants {
    MeanStderr G;
    Vec u;                              // mean of u_hat samples
    std::vector<MeanStderr> Q;          // Q(i) = u_i/G (per-replica, then averaged)
    std::vector<MeanStderr> theta;      // (1/|v|) E[u_i/G^2]
    std::vector<MeanStderr> theta_fromQ;  // (1/|v|) E[Q(i)^2/u_i] (equal in the limit)
    std::vector<ZMap> Theta;            // Theta_i(z) = C(z,v) E[Q(i)^2/u_i]
    ZMap p_dist;                        // p(z) = C(z,v) E[sum_r (z_r/u_r)(Q(r)^2/R(r)) prod_j R(j)^{z_j}]
    MeanStderr p_total;                 // enumerated + analytic geometric tail
    double tail_diag = 0.0;
    std::uint64_t clamp_count = 0;      // Q/R clamps during accumulation
    Horizons horizons;
};

StrongLimitConstants estimate_strong_constants(const EnvModel& model,
                                               const std::vector<ZKey>& z_support,
                                               std::uint64_t N, const Horizons& horizons,
                                               std::uint64_t seed_stream = 0,
                                               unsigned threads = 1);

// Event whose annealed probability is tracked along an n-grid.
struct ZEvent {
    enum Kind { Total, Vector } kind = Total;
    long z = 1;    // Total: {|Z_n| = z}
    ZKey zvec;     // Vector: {Z_n = zvec}
};

struct RatioRow {
    std::size_t n = 0;
    MeanStderr value;
};

struct RatioTable {
    std::vector<RatioRow> rows;
    double rel_drift = 0.0;  // |last - prev| / |prev|
    bool stabilized = false;
    std::string verdict;
};

// kappa^{-n} P_{e_i}(event) estimated as the tilted-replica mean of
// e^{S_n} x (quenched closed-form mass); stabilization measured between the
// last two grid points.
RatioTable verify_strong_ratio(const EnvModel& model, std::size_t i, const ZEvent& event,
                               const std::vector<std::size_t>& n_grid, std::uint64_t N,
                               double drift_tol = 0.05, std::uint64_t seed_stream = 0,
                               unsigned threads = 1);

// ---------------------------------------------------------------------------
// intermediate regime
// ---------------------------------------------------------------------------

struct IntermDelta {
    MeanStderr delta_hat;          // truncated ladder-epoch series
    double delta_el = 0.0;         // |v|^2 delta_hat / v_l
    double stderr_el = 0.0;
    std::vector<double> per_k;     // mean contribution of each k term
    std::vector<double> weight_k;  // empirical P(tau_k = k), cross-checkable
    double tail_diag = 0.0;        // last-decile share of the sum
};

// Truncated series delta_hat = sum_{k<=k_max} E[(1 - F_{0,k}^{(i)}(F_{k+1,inf}(0)))^2
// / u_i ; tau_k = k], with the suffix expectation taken under the
// conditioned-to-stay-nonnegative measure (weight V(S_suffix) 1{L_suffix >= 0})
// and F_{k+1,inf}(0) cut off at N_infty letters.
IntermDelta estimate_interm_delta(const EnvModel& model, std::size_t i, std::size_t l,
                                  const Horizons& horizons, std::uint64_t N,
                                  const RenewalTable& renewal,
                                  std::uint64_t seed_stream = 0, unsigned threads = 1,
                                  double tail_bound = 0.05);

// P_{e_i}(Z_n = zvec) / (kappa^n P(L_n >= 0)) along the grid; denominator by
// direct walk Monte Carlo under the tilted model.
RatioTable verify_interm_ratio(const EnvModel& model, std::size_t i, const ZKey& zvec,
                               const std::vector<std::size_t>& n_grid, std::uint64_t N,
                               double drift_tol = 0.10, std::uint64_t seed_stream = 0,
                               unsigned threads = 1);

struct QEstimate {
    ZMap T_hat;   // T(z) = E^+[sum_i (z_i/(|v|u_i))(Q(i)^2/R(i)) prod_j R(j)^{z_j}]
    ZMap q_dist;  // q(z) = C(z,v) |v| T(z)
    double support_mass = 0.0;
};

QEstimate estimate_q(const EnvModel& model, const std::vector<ZKey>& z_support,
                     std::size_t n, std::uint64_t N, const RenewalTable& renewal,
                     std::uint64_t seed_stream = 0, unsigned threads = 1);

// E[e^{S_n} P_z(|Z_n| = k) | L_n >= 0] for the auxiliary totals k; the limit
// must not depend on k.
std::vector<MeanStderr> lemma_k_independence(const EnvModel& model, const ZKey& z,
                                             const std::vector<long>& ks, std::size_t n,
                                             std::uint64_t N,
                                             std::uint64_t seed_stream = 0,
                                             unsigned threads = 1);

// Empirical law of Z_{tau_{floor(n/2), n}} given {Z_n = e_l}, from the
// annealed joint masses (closed-form quenched factors, tilted averaging).
ZMap interm_cond_law(const EnvModel& model, std::size_t i, std::size_t l,
                     std::size_t n, const std::vector<ZKey>& z_support, std::uint64_t N,
                     std::uint64_t seed_stream = 0, unsigned threads = 1);

// ---------------------------------------------------------------------------
// shared verification
// ---------------------------------------------------------------------------

struct UniformRow {
    std::size_t n = 0;
    std::vector<MeanStderr> cond;  // P(|Z_n| = z | 1 <= |Z_n| <= c), z = 1..c
    double max_dev = 0.0;          // max |cond - 1/c|
};

// Conditional law of |Z_n| on {1..c} along the grid (regime-agnostic; uses
// change-of-measure quenched averaging).
std::vector<UniformRow> verify_uniform(const EnvModel& model, std::size_t i, long c,
                                       const std::vector<std::size_t>& n_grid,
                                       std::uint64_t N, std::uint64_t seed_stream = 0,
                                       unsigned threads = 1);

struct CondTable {
    std::size_t n = 0;
    ZMap cond;       // P(Z_{floor(nt)} = z | Z_n = e_l)
    double mass = 0.0;  // enumerated conditional mass
};

// Theorem-level conditional law via the Markov factorization
// P(Z_m = z) P_z(Z_{n-m} = e_l) / P(Z_n = e_l), each factor by tilted
// quenched averaging; to be compared against p_dist.
std::vector<CondTable> verify_p(const EnvModel& model, std::size_t i, std::size_t l,
                                double t, const std::vector<ZKey>& z_support,
                                const std::vector<std::size_t>& n_grid, std::uint64_t N,
                                std::uint64_t seed_stream = 0, unsigned threads = 1);

}  // namespace mbpre

#endif
