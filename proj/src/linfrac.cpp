#include "mbpre/linfrac.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "mbpre/errors.hpp"

namespace mbpre {

namespace {
std::atomic<std::uint64_t> g_clamp_events{0};
}

std::uint64_t clamp_event_count() { return g_clamp_events.load(); }
void reset_clamp_event_count() { g_clamp_events.store(0); }

double perron_root(const LinFracLaw& law, const Vec& v, double rel_tol) {
    if (v.size() != law.K) throw DomainError("perron_root: v has wrong dimension");
    Vec vm = vecmat(v, law.M);
    double rho = vm[0] / v[0];
    for (std::size_t j = 1; j < law.K; ++j) {
        double rj = vm[j] / v[j];
        if (std::abs(rj - rho) > rel_tol * std::abs(rho))
            throw EigenMismatch("perron_root: v is not a left eigenvector (ratio " +
                                std::to_string(rj) + " vs " + std::to_string(rho) + ")");
    }
    return rho;
}

Vec right_eigenvector(const Mat& m, const Vec& v, double tol) {
    std::size_t k = m.k;
    Vec u(k, 1.0 / static_cast<double>(k));
    std::size_t max_iter = 10 * k + 10;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Vec nu = matvec(m, u);
        double s = norm1(nu);
        for (auto& x : nu) x /= s;
        double diff = 0.0;
        for (std::size_t i = 0; i < k; ++i) diff += std::abs(nu[i] - u[i]);
        u = std::move(nu);
        if (diff < tol) break;
    }
    double scale = dot(v, u);
    for (auto& x : u) x /= scale;
    return u;
}

QuenchedState step(const QuenchedState& state, const LinFracLaw& law) {
    double rho = perron_root(law, state.v);
    std::size_t k = law.K;
    QuenchedState next;
    next.n = state.n + 1;
    next.S = state.S + std::log(rho);
    next.v = state.v;

    Mat scaled = law.M;
    for (auto& x : scaled.a) x /= rho;

    next.Mtilde = matmul(state.Mtilde, scaled);
    next.Dtilde = vecmat(state.Dtilde, scaled);
    // e^{-S'} w may underflow for long prefixes; the dropped terms are below
    // machine epsilon relative to the converged Dtilde.
    double emS = std::exp(-next.S);
    for (std::size_t j = 0; j < k; ++j) next.Dtilde[j] += emS * law.w[j];
    return next;
}

DerivedQuantities survival_probs(const QuenchedState& state) {
    if (state.n < 1) throw DomainError("survival_probs: n >= 1 required");
    std::size_t k = state.v.size();
    double emS = std::exp(-state.S);
    double dn = norm1(state.Dtilde);
    double denom = emS + dn;  // = e^{-S} (1 + |D_n|)

    DerivedQuantities dq;
    dq.Q.resize(k);
    dq.R.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        dq.Q[i] = row_sum(state.Mtilde, i) / denom;
        dq.R[i] = 1.0 - dq.Q[i];
    }
    dq.H = dn / denom;
    dq.u_hat = right_eigenvector(state.Mtilde, state.v);
    return dq;
}

double local_prob_total(const QuenchedState& state, std::size_t i, long z) {
    if (z < 1) throw DomainError("local_prob_total: z >= 1 required");
    if (state.n < 1) throw DomainError("local_prob_total: n >= 1 required");
    double emS = std::exp(-state.S);
    double dn = norm1(state.Dtilde);
    double denom = emS + dn;
    double q = row_sum(state.Mtilde, i) / denom;
    double h = dn / denom;
    return (emS * q * q / row_sum(state.Mtilde, i)) * std::pow(h, static_cast<double>(z - 1));
}

double local_prob_vector(const QuenchedState& state, std::size_t i,
                         const std::vector<long>& z) {
    if (state.n < 1) throw DomainError("local_prob_vector: n >= 1 required");
    std::size_t k = state.v.size();
    long zsum = 0;
    for (long c : z) {
        if (c < 0) throw DomainError("local_prob_vector: negative count");
        zsum += c;
    }
    if (zsum == 0) throw DomainError("local_prob_vector: z = 0 not allowed");

    double emS = std::exp(-state.S);
    double dn = norm1(state.Dtilde);
    double denom = emS + dn;

    // multinomial factor |z|! / (z_1! ... z_K!) times prod (D(r)/(1+|D|))^{z_r}
    double log_prod = std::lgamma(static_cast<double>(zsum) + 1.0);
    for (std::size_t r = 0; r < k; ++r) {
        if (z[r] == 0) continue;
        if (state.Dtilde[r] <= 0.0)
            throw DegenerateShift("local_prob_vector: D_n(j) = 0 with z_j > 0");
        log_prod -= std::lgamma(static_cast<double>(z[r]) + 1.0);
        log_prod += z[r] * std::log(state.Dtilde[r] / denom);
    }

    double bracket = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        if (z[j] == 0) continue;
        bracket += static_cast<double>(z[j]) * state.Mtilde(i, j) /
                   (static_cast<double>(zsum) * state.Dtilde[j]);
    }
    bracket -= row_sum(state.Mtilde, i) / denom;

    if (bracket < 0.0) {
        ++g_clamp_events;
        return 0.0;
    }
    double p = std::exp(log_prod) * bracket;
    if (p > 1.0) p = 1.0;
    return p;
}

double gf_eval(const QuenchedState& state, std::size_t i, const Vec& s) {
    std::size_t k = state.v.size();
    double num = 0.0, den = std::exp(-state.S);
    for (std::size_t j = 0; j < k; ++j) {
        double a = 1.0 - s[j];
        num += state.Mtilde(i, j) * a;
        den += state.Dtilde[j] * a;
    }
    return 1.0 - num / den;
}

}  // namespace mbpre
