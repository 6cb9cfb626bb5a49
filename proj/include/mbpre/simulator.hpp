#ifndef MBPRE_SIMULATOR_HPP
#define MBPRE_SIMULATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mbpre/linfrac.hpp"
#include "mbpre/rng.hpp"

#include "json.hpp"

namespace mbpre {

struct PopulationState {
    std::vector<long> counts;
    std::size_t generation = 0;

    long total() const {
        long t = 0;
        for (long c : counts) t += c;
        return t;
    }
};

struct Trajectory {
    std::vector<PopulationState> states;  // generations 0..horizon
    bool explosion_capped = false;
    std::uint64_t seed = 0;
};

// One offspring draw of a type-i parent.  The linear-fractional pgf
// factorizes as
//   F^(i)(s) = r + (1-r) (pi, s) / (1 + (w, 1-s)),  r = 1 - |M(i)|/(1+|w|),
// i.e. extinction with prob r, else one "head" particle of type J ~ pi with
//   pi_j = M(i,j)(1+|w|)/|M(i)| - w_j   (sums to 1, nonnegative for valid laws)
// plus a Geometric(1/(1+|w|)) number of tail particles with types ~ w/|w|.
std::vector<long> sample_offspring(const LinFracLaw& law, std::size_t i, Rng& rng);

// Particle-by-particle simulation along a realized environment prefix.
// Populations above `cap` stop the run with explosion_capped set (the
// remaining generations are not appended); capping is an outcome, not an
// error.
Trajectory simulate_particles(const std::vector<LinFracLaw>& env,
                              const PopulationState& z0, std::size_t horizon,
                              Rng& rng, long cap = 10000000L);

// O(K) exact draw of Z_n from the quenched n-step law (same head/tail
// decomposition with (M_{1,n}, D_n) in place of (M, w), evaluated in
// stabilized form).  Throws DegenerateShift if |D_n| = 0.
PopulationState sample_zn_direct(const QuenchedState& state, std::size_t i, Rng& rng);

struct Condition {
    enum Kind { UnitVector, TotalRange } kind = UnitVector;
    std::size_t l = 0;  // UnitVector: {Z_n = e_l}
    long c = 1;         // TotalRange: {1 <= |Z_n| <= c}
};

// Exact draw from the conditioned quenched law; masses come from the closed
// forms, so no rejection is involved.  Throws ZeroMassCondition when the
// condition has zero quenched probability.
PopulationState conditional_sampler(const QuenchedState& state, std::size_t i,
                                    const Condition& cond, Rng& rng);

// One JSON record per generation: {"n":..,"counts":[..],"total":..}.
std::string trajectory_to_jsonl(const Trajectory& traj);

// Environment fixture files: JSON list of {"M": [[..]], "w": [..]}.
nlohmann::json env_to_json(const std::vector<LinFracLaw>& env);
std::vector<LinFracLaw> env_from_json(const nlohmann::json& j);

}  // namespace mbpre

#endif
