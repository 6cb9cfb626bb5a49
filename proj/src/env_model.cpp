#include "mbpre/env_model.hpp"

#include <cmath>
#include <random>

#include "mbpre/errors.hpp"

namespace mbpre {

std::string to_string(Regime r) {
    switch (r) {
        case Regime::StronglySupercritical: return "strongly_supercritical";
        case Regime::IntermediatelySupercritical: return "intermediately_supercritical";
        case Regime::WeaklySupercritical: return "weakly_supercritical";
        default: return "not_supercritical";
    }
}

EnvModel EnvModel::from_json(const nlohmann::json& j) {
    EnvModel m;
    try {
        m.K = j.at("K").get<std::size_t>();
        m.v = j.at("v").get<Vec>();
        m.alpha = j.at("alpha").get<double>();
        const auto& rl = j.at("rho_law");
        m.rho_law.family = rl.at("family").get<std::string>();
        m.rho_law.mu = rl.at("mu").get<double>();
        m.rho_law.sigma = rl.at("sigma").get<double>();
        const auto& sl = j.at("shape_law");
        m.shape_law.lo = sl.at("lo").get<double>();
        m.shape_law.hi = sl.at("hi").get<double>();
        const auto& wl = j.at("w_law");
        m.w_law.family = wl.at("family").get<std::string>();
        if (m.w_law.family == "uniform") {
            m.w_law.a = wl.at("lo").get<double>();
            m.w_law.b = wl.at("hi").get<double>();
        } else if (m.w_law.family == "lognormal") {
            m.w_law.a = wl.at("mu").get<double>();
            m.w_law.b = wl.at("sigma").get<double>();
        } else if (m.w_law.family == "constant") {
            m.w_law.a = wl.at("value").get<double>();
            m.w_law.b = 0.0;
        } else {
            throw ConfigError("unknown w_law family: " + m.w_law.family);
        }
        m.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    if (m.rho_law.family != "gaussian_logrho")
        throw UnsupportedFamily("rho_law family must be gaussian_logrho");
    if (m.v.size() != m.K) throw ConfigError("v must have K components");
    for (double vi : m.v)
        if (vi <= 0.0) throw ConfigError("v must be strictly positive");
    if (m.alpha <= 0.0 || m.alpha >= 1.0) throw ConfigError("alpha must lie in (0,1)");
    if (m.shape_law.lo <= 0.0 || m.shape_law.hi < m.shape_law.lo)
        throw ConfigError("shape_law requires 0 < lo <= hi");
    return m;
}

nlohmann::json EnvModel::to_json() const {
    nlohmann::json wl;
    wl["family"] = w_law.family;
    if (w_law.family == "uniform") {
        wl["lo"] = w_law.a;
        wl["hi"] = w_law.b;
    } else if (w_law.family == "lognormal") {
        wl["mu"] = w_law.a;
        wl["sigma"] = w_law.b;
    } else {
        wl["value"] = w_law.a;
    }
    return nlohmann::json{
        {"K", K},
        {"v", v},
        {"alpha", alpha},
        {"rho_law", {{"family", rho_law.family}, {"mu", rho_law.mu}, {"sigma", rho_law.sigma}}},
        {"shape_law", {{"lo", shape_law.lo}, {"hi", shape_law.hi}}},
        {"w_law", wl},
        {"seed", seed}};
}

std::uint64_t EnvModel::config_hash() const {
    std::string s = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

double draw_w_component(const WLaw& wl, Rng& rng) {
    if (wl.family == "uniform")
        return std::uniform_real_distribution<double>(wl.a, wl.b)(rng);
    if (wl.family == "lognormal")
        return std::exp(std::normal_distribution<double>(wl.a, wl.b)(rng));
    return wl.a;  // constant
}

}  // namespace

EnvLetter EnvModel::construct_law(Rng& rng) const {
    std::normal_distribution<double> xdist(rho_law.mu, rho_law.sigma);
    double x = rho_law.sigma > 0.0 ? xdist(rng) : rho_law.mu;
    double rho = std::exp(x);

    std::uniform_real_distribution<double> adist(shape_law.lo, shape_law.hi);
    bool degenerate_shape = shape_law.hi == shape_law.lo;

    for (int attempt = 0; attempt < 1000; ++attempt) {
        Mat a(K);
        for (auto& e : a.a) e = degenerate_shape ? shape_law.lo : adist(rng);
        Vec w(K);
        for (auto& e : w) e = draw_w_component(w_law, rng);

        Mat m(K);
        for (std::size_t j = 0; j < K; ++j) {
            double colw = 0.0;
            for (std::size_t i = 0; i < K; ++i) colw += v[i] * a(i, j);
            for (std::size_t i = 0; i < K; ++i) m(i, j) = a(i, j) * rho * v[j] / colw;
        }

        double mmax = m.a[0], mmin = m.a[0];
        for (double e : m.a) {
            mmax = std::max(mmax, e);
            mmin = std::min(mmin, e);
        }
        if (mmax / mmin > 1.0 / alpha) continue;

        // pgf validity: every coefficient of the fractional-linear form is
        // nonnegative iff M(i,j)(1+|w|) >= |M(i)| w_j.
        double wsum = norm1(w);
        bool valid = true;
        for (std::size_t i = 0; i < K && valid; ++i) {
            double rsum = row_sum(m, i);
            for (std::size_t j = 0; j < K; ++j) {
                if (m(i, j) * (1.0 + wsum) < rsum * w[j]) {
                    valid = false;
                    break;
                }
            }
        }
        if (!valid) continue;

        return EnvLetter{LinFracLaw(std::move(m), std::move(w)), x};
    }
    throw RejectionExhausted(
        "construct_law: 1000 redraws failed; alpha or w_law inconsistent with shape_law");
}

RegimeReport EnvModel::classify(std::uint64_t mc_budget) const {
    double mu = rho_law.mu, s2 = rho_law.sigma * rho_law.sigma;
    RegimeReport rep;
    rep.kappa = std::exp(-mu + s2 / 2.0);
    rep.drift_tilted = mu - s2;

    const double tol = 1e-9;
    if (rep.drift_tilted > tol)
        rep.regime = Regime::StronglySupercritical;
    else if (rep.drift_tilted >= -tol)
        rep.regime = Regime::IntermediatelySupercritical;
    else if (mu < -tol)
        rep.regime = Regime::NotSupercritical;
    else
        rep.regime = Regime::WeaklySupercritical;

    double bound = std::log((1.0 + alpha * alpha) / (1.0 - alpha * alpha));
    rep.condition_EgenValue0 = rep.drift_tilted < bound;

    if (mc_budget > 0) {
        EnvModel tilted = tilt();
        Rng rng = make_rng(seed, 0x7468657461ULL);
        double acc = 0.0;
        for (std::uint64_t r = 0; r < mc_budget; ++r) {
            EnvLetter letter = tilted.construct_law(rng);
            double vt = compute_vartheta(letter.law, v);
            acc += std::pow(std::log(vt), 3.0);  // a + eps = 3 with eps = 1
        }
        rep.vartheta_moment = acc / static_cast<double>(mc_budget);
    }
    return rep;
}

EnvModel EnvModel::tilt() const {
    if (rho_law.family != "gaussian_logrho")
        throw UnsupportedFamily("tilt: only gaussian_logrho supported");
    EnvModel t = *this;
    t.rho_law.mu = rho_law.mu - rho_law.sigma * rho_law.sigma;
    return t;
}

MeanStderr EnvModel::weighted_expect(
    const std::function<double(const std::vector<EnvLetter>&)>& f, std::size_t n,
    std::size_t budget, bool use_importance_weights) const {
    if (n < 1 || budget < 1) throw DomainError("weighted_expect: n, budget >= 1");
    const EnvModel sampler = use_importance_weights ? *this : tilt();
    double kappa = std::exp(-rho_law.mu + rho_law.sigma * rho_law.sigma / 2.0);
    double log_kappa_n = static_cast<double>(n) * std::log(kappa);

    Rng rng = make_rng(seed, 0x77657870ULL);
    double sum = 0.0, sum2 = 0.0;
    std::vector<EnvLetter> prefix(n);
    for (std::size_t r = 0; r < budget; ++r) {
        double sn = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            prefix[t] = sampler.construct_law(rng);
            sn += prefix[t].x;
        }
        double y = f(prefix);
        if (use_importance_weights) y *= std::exp(-sn - log_kappa_n);
        sum += y;
        sum2 += y * y;
    }
    double mean = sum / budget;
    double var = std::max(0.0, sum2 / budget - mean * mean);
    return MeanStderr{mean, std::sqrt(var / budget)};
}

std::vector<std::string> EnvModel::check_moment_conditions(std::uint64_t budget) const {
    std::vector<std::string> warnings;
    EnvModel tilted = tilt();
    Rng rng = make_rng(seed, 0x636f6e64ULL);

    double m01 = 0.0;
    double min_q = 1.0;
    for (std::uint64_t r = 0; r < budget; ++r) {
        EnvLetter letter = tilted.construct_law(rng);
        double wsum = norm1(letter.law.w);
        // tilted-sample mean of |X + ln|w||^2 estimates the srrong01 moment
        // up to the finite kappa factor.
        double t = std::abs(letter.x + std::log(std::max(wsum, 1e-300)));
        m01 += t * t;

        QuenchedState st = step(QuenchedState::initial(v), letter.law);
        DerivedQuantities dq = survival_probs(st);
        for (double q : dq.Q) min_q = std::min(min_q, q);
    }
    m01 /= static_cast<double>(budget);
    if (!std::isfinite(m01) || m01 > 1e6)
        warnings.push_back("srrong01 moment estimate very large or non-finite: may slow a.s. convergence");
    if (min_q < 1e-12)
        warnings.push_back("strong1 check: one-step survival probability nearly degenerate");
    return warnings;
}

double compute_vartheta(const LinFracLaw& law, const Vec& v) {
    double rho = perron_root(law, v);
    double wsum = norm1(law.w);
    double acc = 0.0;
    for (std::size_t i = 0; i < law.K; ++i)
        acc += v[i] * (2.0 * wsum + 1.0) * row_sum(law.M, i);
    return 1.0 + acc / (rho * rho);
}

}  // namespace mbpre
