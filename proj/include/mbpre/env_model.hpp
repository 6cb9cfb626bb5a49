#ifndef MBPRE_ENV_MODEL_HPP
#define MBPRE_ENV_MODEL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbpre/linfrac.hpp"
#include "mbpre/rng.hpp"
#include "mbpre/vecmat.hpp"

#include "json.hpp"

namespace mbpre {

// X = ln rho is Gaussian (rho lognormal): non-lattice, finite variance,
// closed-form kappa and exponential tilt.
struct RhoLaw {
    std::string family = "gaussian_logrho";
    double mu = 0.0;
    double sigma = 0.0;
};

struct ShapeLaw {
    double lo = 0.5;  // entrywise uniform support for the raw matrix A
    double hi = 2.0;
};

struct WLaw {
    std::string family = "uniform";  // uniform | lognormal | constant
    double a = 0.5;                  // lo / mu / value
    double b = 1.5;                  // hi / sigma / unused
};

enum class Regime {
    StronglySupercritical,
    IntermediatelySupercritical,
    WeaklySupercritical,
    NotSupercritical,
};

std::string to_string(Regime r);

struct RegimeReport {
    double kappa = 0.0;          // E[e^{-X}]
    double drift_tilted = 0.0;   // E[X e^{-X}] / kappa
    Regime regime = Regime::NotSupercritical;
    bool condition_EgenValue0 = false;  // drift_tilted < ln((1+a^2)/(1-a^2))
    double vartheta_moment = 0.0;       // MC estimate of E_P[ln^3 vartheta]
};

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

struct EnvLetter {
    LinFracLaw law;
    double x = 0.0;  // ln rho
};

class EnvModel {
public:
    std::size_t K = 2;
    Vec v;
    double alpha = 0.3;
    RhoLaw rho_law;
    ShapeLaw shape_law;
    WLaw w_law;
    std::uint64_t seed = 0;

    static EnvModel from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // Stable content hash of the configuration (used to key caches/artifacts).
    std::uint64_t config_hash() const;

    // Draw one environment letter.  The mean matrix is built as
    // M(i,j) = A(i,j) rho v_j / sum_i v_i A(i,j), which forces vM = rho v.
    // (A, w) pairs failing the ratio bound or the pgf-validity constraint
    // M(i,j)(1+|w|) >= |M(i)| w_j are redrawn, up to 1000 attempts.
    EnvLetter construct_law(Rng& rng) const;

    RegimeReport classify(std::uint64_t mc_budget = 20000) const;

    // Environment law reweighted by e^{-X}/kappa; for Gaussian X only the
    // mean shifts: mu -> mu - sigma^2.
    EnvModel tilt() const;

    // E_P[f(prefix)] with stderr, estimated either by sampling the tilted
    // model directly or by importance weights e^{-S_n}/kappa^n under this
    // model.
    MeanStderr weighted_expect(const std::function<double(const std::vector<EnvLetter>&)>& f,
                               std::size_t n, std::size_t budget,
                               bool use_importance_weights = false) const;

    // Hypothesis-condition diagnostics (warnings, not errors).
    // srrong01: E[e^{-X}|X + ln|w||^{1+eps}] < inf with eps = 1.
    // strong1: kappa E_P[ln sum_i Q_1(i)] > -inf, probed over tilted draws.
    std::vector<std::string> check_moment_conditions(std::uint64_t budget = 10000) const;
};

// vartheta = 1 + rho^{-2} sum_i v_i sum_{j,k} z_j z_k F^(i)[z], in closed
// form for the linear-fractional family:
//   sum_z z_j z_k F^(i)[z] = M(i,j)w_k + M(i,k)w_j + delta_{jk} M(i,j).
double compute_vartheta(const LinFracLaw& law, const Vec& v);

}  // namespace mbpre

#endif
