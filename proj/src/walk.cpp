#include "mbpre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mbpre/accumulator.hpp"
#include "mbpre/errors.hpp"
#include "mbpre/parallel.hpp"
#include "mbpre/rng.hpp"

namespace mbpre {

WalkFunctionals functionals(const WalkPath& path, std::size_t k) {
    if (path.S.empty() || path.S[0] != 0.0)
        throw DomainError("functionals: path must start at S_0 = 0");
    std::size_t n = path.n();
    if (k > n) throw IndexError("functionals: k > n");

    WalkFunctionals f;
    f.L = path.S[0];
    f.M = path.S[0];
    f.tau = 0;
    for (std::size_t j = 1; j <= n; ++j) {
        if (path.S[j] < f.L) {
            f.L = path.S[j];
            f.tau = j;
        }
        if (path.S[j] > f.M) f.M = path.S[j];
    }
    double mn = path.S[k];
    f.tau_kn = k;
    for (std::size_t j = k + 1; j <= n; ++j) {
        if (path.S[j] < mn) {
            mn = path.S[j];
            f.tau_kn = j;
        }
    }
    f.L_kn = mn - path.S[k];
    return f;
}

namespace {
constexpr std::size_t kDefaultShards = 64;
}

MeanStderr prob_min_nonneg(const EnvModel& model, std::size_t n, std::uint64_t N,
                           std::uint64_t seed_stream, unsigned threads) {
    if (n == 0) return MeanStderr{1.0, 0.0};
    if (N == 0) throw DomainError("prob_min_nonneg: N >= 1");
    std::size_t n_shards = N >= kDefaultShards ? kDefaultShards : 1;
    auto ranges = shard_ranges(N, n_shards);
    std::vector<std::uint64_t> hits(n_shards, 0);

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x6d696e6eULL, s));
        std::normal_distribution<double> xd(model.rho_law.mu, model.rho_law.sigma);
        std::uint64_t h = 0;
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            double S = 0.0;
            bool ok = true;
            for (std::size_t t = 0; t < n; ++t) {
                S += xd(rng);
                if (S < 0.0) {
                    ok = false;
                    break;
                }
            }
            if (ok) ++h;
        }
        hits[s] = h;
    });

    std::uint64_t total = 0;
    for (auto h : hits) total += h;
    double p = static_cast<double>(total) / static_cast<double>(N);
    double se = std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(N));
    return MeanStderr{p, se};
}

double RenewalTable::eval(double x) const {
    if (grid.empty()) throw MissingRenewalTable("RenewalTable::eval: empty table");
    if (x < 0.0) return 0.0;
    if (x <= grid.front()) return values.front();
    std::size_t m = grid.size();
    if (x >= grid.back()) {
        if (m == 1) return values.back();
        double slope = (values[m - 1] - values[m - 2]) / (grid[m - 1] - grid[m - 2]);
        return values.back() + slope * (x - grid.back());
    }
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - grid.begin());
    std::size_t lo = hi - 1;
    double t = (x - grid[lo]) / (grid[hi] - grid[lo]);
    return values[lo] + t * (values[hi] - values[lo]);
}

std::string RenewalTable::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "# horizon=" << horizon << " replicas=" << replicas
       << " tail_diag=" << tail_diag << "\n";
    os << "x,V,stderr\n";
    for (std::size_t b = 0; b < grid.size(); ++b)
        os << grid[b] << "," << values[b] << "," << stderrs[b] << "\n";
    return os.str();
}

RenewalTable RenewalTable::from_csv(const std::string& text) {
    RenewalTable t;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tok;
            while (ls >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "horizon") t.horizon = std::stoull(val);
                else if (key == "replicas") t.replicas = std::stoull(val);
                else if (key == "tail_diag") t.tail_diag = std::stod(val);
            }
            continue;
        }
        if (line.rfind("x,", 0) == 0) continue;  // header
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') ||
            !std::getline(ls, c, ','))
            throw IoError("RenewalTable::from_csv: malformed row: " + line);
        t.grid.push_back(std::stod(a));
        t.values.push_back(std::stod(b));
        t.stderrs.push_back(std::stod(c));
    }
    if (t.grid.empty()) throw IoError("RenewalTable::from_csv: no data rows");
    return t;
}

RenewalTable renewal_function(const EnvModel& model, const Vec& grid,
                              std::uint64_t K_max, std::uint64_t N,
                              std::uint64_t seed_stream, unsigned threads,
                              std::size_t n_shards) {
    std::size_t m = grid.size();
    if (m == 0) throw DomainError("renewal_function: empty grid");
    for (std::size_t b = 0; b < m; ++b) {
        if (grid[b] < 0.0) throw DomainError("renewal_function: grid must be nonnegative");
        if (b > 0 && grid[b] <= grid[b - 1])
            throw DomainError("renewal_function: grid must be strictly ascending");
    }
    if (N == 0 || K_max == 0) throw DomainError("renewal_function: N, K_max >= 1");
    if (n_shards == 0 || n_shards > N) n_shards = 1;

    auto ranges = shard_ranges(N, n_shards);
    std::vector<AccumVec> acc(n_shards, AccumVec(m));
    std::vector<std::uint64_t> active(n_shards, 0);

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x72656e65ULL, s));
        std::normal_distribution<double> xd(model.rho_law.mu, model.rho_law.sigma);
        std::vector<double> cnt(m);
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            std::fill(cnt.begin(), cnt.end(), 0.0);
            double S = 0.0;
            bool survived = true;
            for (std::uint64_t k = 1; k <= K_max; ++k) {
                S += xd(rng);
                if (S >= 0.0) {
                    survived = false;
                    break;
                }
                // event {max(S_1..S_k) < 0, -S_k <= x}: contributes to all
                // grid points >= -S_k
                auto it = std::lower_bound(grid.begin(), grid.end(), -S);
                if (it != grid.end()) cnt[static_cast<std::size_t>(it - grid.begin())] += 1.0;
            }
            if (survived) ++active[s];
            double run = 0.0;
            for (std::size_t b = 0; b < m; ++b) {
                run += cnt[b];
                acc[s].a[b].add(run);
            }
        }
    });

    AccumVec total(m);
    std::uint64_t still = 0;
    for (std::size_t s = 0; s < n_shards; ++s) {
        total.merge(acc[s]);
        still += active[s];
    }

    RenewalTable t;
    t.grid = grid;
    t.values.resize(m);
    t.stderrs.resize(m);
    for (std::size_t b = 0; b < m; ++b) {
        t.values[b] = 1.0 + total.a[b].mean();
        t.stderrs[b] = total.a[b].stderr_();
    }
    t.horizon = K_max;
    t.replicas = N;
    t.tail_diag = static_cast<double>(still) / static_cast<double>(N);
    return t;
}

MeanStderr plus_expect(const EnvModel& model,
                       const std::function<double(const std::vector<EnvLetter>&)>& g,
                       std::size_t n, std::uint64_t N, const RenewalTable& table,
                       std::uint64_t seed_stream, unsigned threads,
                       std::size_t n_shards) {
    if (table.grid.empty()) throw MissingRenewalTable("plus_expect: no renewal table");
    if (n == 0 || N == 0) throw DomainError("plus_expect: n, N >= 1");
    if (n_shards == 0 || n_shards > N) n_shards = 1;

    auto ranges = shard_ranges(N, n_shards);
    std::vector<Accum> acc(n_shards);

    parallel_shards(n_shards, threads, [&](std::size_t s) {
        Rng rng = make_rng(model.seed, derive_seed(seed_stream, 0x706c7573ULL, s));
        std::vector<EnvLetter> prefix(n);
        for (std::uint64_t r = ranges[s].first; r < ranges[s].second; ++r) {
            double S = 0.0, L = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                prefix[t] = model.construct_law(rng);
                S += prefix[t].x;
                L = std::min(L, S);
            }
            double y = 0.0;
            if (L >= 0.0) y = g(prefix) * table.eval(S);
            acc[s].add(y);
        }
    });

    Accum total;
    for (const auto& a : acc) total.merge(a);
    return MeanStderr{total.mean(), total.stderr_()};
}

}  // namespace mbpre
