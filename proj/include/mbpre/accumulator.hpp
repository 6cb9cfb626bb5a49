#ifndef MBPRE_ACCUMULATOR_HPP
#define MBPRE_ACCUMULATOR_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace mbpre {

// Mergeable moment accumulator.  Merging shard accumulators in a fixed order
// is the only reduction we ever do, so results are independent of thread
// scheduling.
struct Accum {
    std::uint64_t n = 0;
    double sum = 0.0;
    double sum2 = 0.0;

    void add(double x) {
        ++n;
        sum += x;
        sum2 += x * x;
    }
    void merge(const Accum& o) {
        n += o.n;
        sum += o.sum;
        sum2 += o.sum2;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        double m = mean();
        double v = sum2 / static_cast<double>(n) - m * m;
        return v > 0.0 ? v : 0.0;
    }
    double stderr_() const {
        return n ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
};

struct AccumVec {
    std::vector<Accum> a;

    explicit AccumVec(std::size_t k = 0) : a(k) {}
    void merge(const AccumVec& o) {
        if (a.size() < o.a.size()) a.resize(o.a.size());
        for (std::size_t i = 0; i < o.a.size(); ++i) a[i].merge(o.a[i]);
    }
};

}  // namespace mbpre

#endif
