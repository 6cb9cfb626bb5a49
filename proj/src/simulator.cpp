#include "mbpre/simulator.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mbpre/errors.hpp"

namespace mbpre {

namespace {

std::size_t draw_index(const Vec& weights, double wsum, Rng& rng) {
    double u = std::uniform_real_distribution<double>(0.0, wsum)(rng);
    double run = 0.0;
    for (std::size_t j = 0; j + 1 < weights.size(); ++j) {
        run += weights[j];
        if (u < run) return j;
    }
    return weights.size() - 1;
}

// Draw from the head+tail decomposition of a linear-fractional law given by
// head weights pi (unnormalized, nonnegative), tail weights t (types ~
// t/|t|), geometric ratio h = P(one more tail particle), and survival
// probability q.
std::vector<long> draw_linfrac(std::size_t k, const Vec& pi, const Vec& tail,
                               double h, double q, Rng& rng) {
    std::vector<long> z(k, 0);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= q) return z;

    double pisum = 0.0;
    for (double x : pi) pisum += x;
    z[draw_index(pi, pisum, rng)] += 1;

    double tsum = 0.0;
    for (double x : tail) tsum += x;
    if (h > 0.0 && tsum > 0.0) {
        std::geometric_distribution<long> geo(1.0 - h);
        long g = geo(rng);
        for (long t = 0; t < g; ++t) z[draw_index(tail, tsum, rng)] += 1;
    }
    return z;
}

}  // namespace

std::vector<long> sample_offspring(const LinFracLaw& law, std::size_t i, Rng& rng) {
    std::size_t k = law.K;
    if (i >= k) throw IndexError("sample_offspring: type out of range");
    double wsum = norm1(law.w);
    double msum = row_sum(law.M, i);
    double q = msum / (1.0 + wsum);  // survival probability
    if (q > 1.0) throw DomainError("sample_offspring: |M(i)| > 1 + |w|, not a pgf");

    Vec pi(k);
    for (std::size_t j = 0; j < k; ++j) {
        double a = law.M(i, j) * (1.0 + wsum) - msum * law.w[j];
        pi[j] = a > 0.0 ? a : 0.0;  // tiny negatives are roundoff
    }
    double h = wsum / (1.0 + wsum);
    return draw_linfrac(k, pi, law.w, h, q, rng);
}

Trajectory simulate_particles(const std::vector<LinFracLaw>& env,
                              const PopulationState& z0, std::size_t horizon,
                              Rng& rng, long cap) {
    if (cap <= 0) throw DomainError("simulate_particles: cap > 0 required");
    if (horizon > env.size())
        throw DomainError("simulate_particles: horizon exceeds environment length");
    std::size_t k = z0.counts.size();
    for (long c : z0.counts)
        if (c < 0) throw DomainError("simulate_particles: negative count");

    Trajectory traj;
    PopulationState cur = z0;
    cur.generation = 0;
    traj.states.push_back(cur);

    for (std::size_t n = 0; n < horizon; ++n) {
        const LinFracLaw& law = env[n];
        std::vector<long> next(k, 0);
        long total = 0;
        for (std::size_t i = 0; i < k; ++i) {
            for (long p = 0; p < cur.counts[i]; ++p) {
                std::vector<long> kids = sample_offspring(law, i, rng);
                for (std::size_t j = 0; j < k; ++j) next[j] += kids[j];
            }
        }
        for (long c : next) total += c;
        if (total > cap) {
            traj.explosion_capped = true;
            break;
        }
        cur.counts = std::move(next);
        cur.generation = n + 1;
        traj.states.push_back(cur);
        if (total == 0) {
            // extinction is absorbing: fill remaining generations with zeros
            for (std::size_t m = n + 1; m < horizon; ++m) {
                cur.generation = m + 1;
                traj.states.push_back(cur);
            }
            break;
        }
    }
    return traj;
}

PopulationState sample_zn_direct(const QuenchedState& state, std::size_t i, Rng& rng) {
    if (state.n < 1) throw DomainError("sample_zn_direct: n >= 1 required");
    std::size_t k = state.v.size();
    if (i >= k) throw IndexError("sample_zn_direct: type out of range");
    double dsum = norm1(state.Dtilde);
    if (dsum <= 0.0) throw DegenerateShift("sample_zn_direct: |D_n| = 0");

    double emS = std::exp(-state.S);
    double denom = emS + dsum;  // = e^{-S}(1 + |D_n|)
    double msum = row_sum(state.Mtilde, i);
    double q = msum / denom;

    // head weights: M(i,j)(1+|D|) - |M(i)| D_j, rescaled by e^{-2S}
    Vec pi(k);
    for (std::size_t j = 0; j < k; ++j) {
        double a = state.Mtilde(i, j) * denom - msum * state.Dtilde[j];
        pi[j] = a > 0.0 ? a : 0.0;
    }
    double h = dsum / denom;

    PopulationState out;
    out.counts = draw_linfrac(k, pi, state.Dtilde, h, q, rng);
    out.generation = state.n;
    return out;
}

PopulationState conditional_sampler(const QuenchedState& state, std::size_t i,
                                    const Condition& cond, Rng& rng) {
    std::size_t k = state.v.size();
    PopulationState out;
    out.generation = state.n;

    if (cond.kind == Condition::UnitVector) {
        if (cond.l >= k) throw IndexError("conditional_sampler: type out of range");
        std::vector<long> el(k, 0);
        el[cond.l] = 1;
        if (local_prob_vector(state, i, el) <= 0.0)
            throw ZeroMassCondition("conditional_sampler: P(Z_n = e_l) = 0");
        out.counts = std::move(el);
        return out;
    }

    if (cond.c < 1) throw DomainError("conditional_sampler: c >= 1 required");
    Vec mass(static_cast<std::size_t>(cond.c));
    double total = 0.0;
    for (long z = 1; z <= cond.c; ++z) {
        mass[static_cast<std::size_t>(z - 1)] = local_prob_total(state, i, z);
        total += mass[static_cast<std::size_t>(z - 1)];
    }
    if (total <= 0.0)
        throw ZeroMassCondition("conditional_sampler: P(1 <= |Z_n| <= c) = 0");
    long z = 1 + static_cast<long>(draw_index(mass, total, rng));

    // given |Z_n| = z, the type split is head J ~ pi plus a
    // Multinomial(z-1, D/|D|) tail
    double dsum = norm1(state.Dtilde);
    if (dsum <= 0.0 && z > 1)
        throw DegenerateShift("conditional_sampler: |D_n| = 0 with z > 1");
    double emS = std::exp(-state.S);
    double denom = emS + dsum;
    double msum = row_sum(state.Mtilde, i);
    Vec pi(k);
    for (std::size_t j = 0; j < k; ++j) {
        double a = state.Mtilde(i, j) * denom - msum * state.Dtilde[j];
        pi[j] = a > 0.0 ? a : 0.0;
    }
    double pisum = 0.0;
    for (double x : pi) pisum += x;

    std::vector<long> counts(k, 0);
    counts[draw_index(pi, pisum, rng)] += 1;
    for (long t = 1; t < z; ++t) counts[draw_index(state.Dtilde, dsum, rng)] += 1;
    out.counts = std::move(counts);
    return out;
}

std::string trajectory_to_jsonl(const Trajectory& traj) {
    std::ostringstream os;
    for (const auto& st : traj.states) {
        nlohmann::json rec{{"n", st.generation}, {"counts", st.counts}, {"total", st.total()}};
        os << rec.dump() << "\n";
    }
    return os.str();
}

nlohmann::json env_to_json(const std::vector<LinFracLaw>& env) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& law : env) {
        nlohmann::json m = nlohmann::json::array();
        for (std::size_t i = 0; i < law.K; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < law.K; ++j) row.push_back(law.M(i, j));
            m.push_back(row);
        }
        out.push_back(nlohmann::json{{"M", m}, {"w", law.w}});
    }
    return out;
}

std::vector<LinFracLaw> env_from_json(const nlohmann::json& j) {
    std::vector<LinFracLaw> env;
    for (const auto& rec : j) {
        const auto& m = rec.at("M");
        std::size_t k = m.size();
        Mat mat(k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t jj = 0; jj < k; ++jj)
                mat(i, jj) = m[i][jj].get<double>();
        Vec w = rec.at("w").get<Vec>();
        if (w.size() != k) throw ConfigError("env_from_json: w dimension mismatch");
        env.emplace_back(std::move(mat), std::move(w));
    }
    return env;
}

}  // namespace mbpre
