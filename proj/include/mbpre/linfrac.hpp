#ifndef MBPRE_LINFRAC_HPP
#define MBPRE_LINFRAC_HPP

#include <cstddef>
#include <cstdint>

#include "mbpre/vecmat.hpp"

namespace mbpre {

// One environment letter of a multitype linear-fractional branching process:
// the offspring pgf of a type-i parent is
//   F^(i)(s) = 1 - (M(i),1-s) / (1 + (w,1-s)),
// with M strictly positive (mean matrix) and w nonnegative (shift vector).
struct LinFracLaw {
    std::size_t K = 0;
    Mat M;
    Vec w;

    LinFracLaw() = default;
    LinFracLaw(Mat m, Vec w_) : K(m.k), M(std::move(m)), w(std::move(w_)) {}
};

// Running quenched product along an environment prefix, stored in stabilized
// form: S = log of the Perron product, Mtilde = e^{-S} M_{1,n},
// Dtilde = e^{-S} D_n.  Raw M_{1,n} and D_n grow like e^{S} and would
// overflow doubles for long prefixes.
struct QuenchedState {
    std::size_t n = 0;
    double S = 0.0;
    Mat Mtilde;
    Vec Dtilde;
    Vec v;  // common left eigenvector, fixed for the run

    static QuenchedState initial(const Vec& v) {
        QuenchedState st;
        st.n = 0;
        st.S = 0.0;
        st.Mtilde = Mat::identity(v.size());
        st.Dtilde = Vec(v.size(), 0.0);
        st.v = v;
        return st;
    }
};

// Survival/extinction probabilities and associated spectral data at the
// current prefix length.
struct DerivedQuantities {
    Vec Q;         // survival probabilities Q_n(i)
    Vec R;         // extinction probabilities R_n(i) = 1 - Q_n(i)
    double H = 0;  // |D_n| / (1 + |D_n|)
    Vec u_hat;     // right Perron eigenvector of M_{1,n}, (v,u_hat) = 1
};

// rho with vM = rho v; throws EigenMismatch if the component ratios disagree
// beyond rel_tol (the law violates the common-left-eigenvector hypothesis).
double perron_root(const LinFracLaw& law, const Vec& v, double rel_tol = 1e-12);

// Right Perron eigenvector of a positive matrix by power iteration,
// normalized so (v,u) = 1.
Vec right_eigenvector(const Mat& m, const Vec& v, double tol = 1e-12);

// Append one letter: S' = S + ln rho, Mtilde' = Mtilde (M/rho),
// Dtilde' = Dtilde (M/rho) + e^{-S'} w.
QuenchedState step(const QuenchedState& state, const LinFracLaw& law);

DerivedQuantities survival_probs(const QuenchedState& state);

// Quenched P(|Z_n| = z) started from one type-i particle:
//   Q_n(i)^2 H_n^{z-1} / |M_{1,n}(i)|, evaluated in stabilized form.
double local_prob_total(const QuenchedState& state, std::size_t i, long z);

// Quenched P(Z_n = z) for a nonzero count vector z (type-resolved local
// probability).  Tiny negatives from cancellation are clamped to 0 and
// counted (see clamp_event_count).
double local_prob_vector(const QuenchedState& state, std::size_t i,
                         const std::vector<long>& z);

// Quenched pgf F_{0,n}^{(i)}(s) for s in [0,1]^K.
double gf_eval(const QuenchedState& state, std::size_t i, const Vec& s);

// Number of times local_prob_vector clamped a negative mass to zero since
// process start (process-wide diagnostic).
std::uint64_t clamp_event_count();
void reset_clamp_event_count();

}  // namespace mbpre

#endif
