#ifndef MBPRE_WALK_HPP
#define MBPRE_WALK_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mbpre/env_model.hpp"
#include "mbpre/vecmat.hpp"

namespace mbpre {

// Associated random walk S_0 = 0, S_n = X_1 + ... + X_n.
struct WalkPath {
    Vec S;  // S[0] = 0

    std::size_t n() const { return S.size() - 1; }
};

struct WalkFunctionals {
    double L = 0.0;        // min(S_0..S_n)
    double M = 0.0;        // max(S_0..S_n)
    std::size_t tau = 0;   // first index attaining L
    double L_kn = 0.0;     // min_{0<=j<=n-k} (S_{k+j} - S_k)
    std::size_t tau_kn = 0;  // first j in [k,n] with S_j = min(S_k..S_n)
};

// Running min/max and first-attainment argmins; ties broken to the first
// index.  Throws IndexError if k > n.
WalkFunctionals functionals(const WalkPath& path, std::size_t k = 0);

// Monte Carlo frequency of {min(S_0..S_n) >= 0} under the model's X law,
// with binomial stderr.  n = 0 gives exactly 1.
MeanStderr prob_min_nonneg(const EnvModel& model, std::size_t n, std::uint64_t N,
                           std::uint64_t seed_stream = 0, unsigned threads = 1);

// Tabulated estimate of the renewal function
//   V(x) = 1 + sum_{k>=1} P(-S_k <= x, max(S_1..S_k) < 0),  x >= 0,
// truncated at K_max terms.  V = 0 for x < 0 by convention.
struct RenewalTable {
    Vec grid;       // ascending, nonnegative
    Vec values;     // V-hat at grid points
    Vec stderrs;    // per-point standard errors
    std::uint64_t horizon = 0;   // K_max
    std::uint64_t replicas = 0;  // N
    double tail_diag = 0.0;      // fraction of replicas still ladder-active at K_max

    // Piecewise-linear in x on the grid, linearly extrapolated past the last
    // point (V grows asymptotically linearly for zero-drift walks), 0 below 0.
    double eval(double x) const;

    std::string to_csv() const;
    static RenewalTable from_csv(const std::string& text);
};

RenewalTable renewal_function(const EnvModel& model, const Vec& grid,
                              std::uint64_t K_max, std::uint64_t N,
                              std::uint64_t seed_stream = 0, unsigned threads = 1,
                              std::size_t n_shards = 64);

// E^+[g] = E[g(prefix) V(S_n); L_n >= 0] estimated over replicas of length n
// drawn from the model.  Throws MissingRenewalTable on an empty table.
MeanStderr plus_expect(const EnvModel& model,
                       const std::function<double(const std::vector<EnvLetter>&)>& g,
                       std::size_t n, std::uint64_t N, const RenewalTable& table,
                       std::uint64_t seed_stream = 0, unsigned threads = 1,
                       std::size_t n_shards = 64);

}  // namespace mbpre

#endif
