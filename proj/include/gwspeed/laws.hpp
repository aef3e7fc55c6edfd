#ifndef GWSPEED_LAWS_HPP
#define GWSPEED_LAWS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gwspeed/rng.hpp"

namespace gwspeed {

inline constexpr double kMassTolerance = 1e-12;

// Finite-support offspring distribution together with its first two moments.
// Immutable after construction; safe to share across workers.
class OffspringLaw {
public:
    // pmf entries are (k, p_k); zero-probability entries are dropped.
    explicit OffspringLaw(std::vector<std::pair<int, double>> pmf) {
        double total = 0.0;
        for (const auto& [k, p] : pmf) {
            if (k < 0) throw std::invalid_argument("offspring count must be >= 0");
            if (p < 0.0) throw std::invalid_argument("offspring probability must be >= 0");
            total += p;
        }
        if (std::abs(total - 1.0) > kMassTolerance)
            throw std::invalid_argument("offspring pmf must sum to 1");
        std::sort(pmf.begin(), pmf.end());
        for (const auto& [k, p] : pmf) {
            if (p == 0.0) continue;
            if (!pmf_.empty() && pmf_.back().first == k)
                pmf_.back().second += p;
            else
                pmf_.emplace_back(k, p);
        }
        if (pmf_.empty()) throw std::invalid_argument("offspring pmf is empty");
        for (const auto& [k, p] : pmf_) {
            mean_ += p * k;
            second_moment_ += p * static_cast<double>(k) * k;
        }
        cumulative_.reserve(pmf_.size());
        double acc = 0.0;
        for (const auto& [k, p] : pmf_) {
            acc += p;
            cumulative_.push_back(acc);
        }
        cumulative_.back() = 1.0;
    }

    static OffspringLaw point_mass(int k) { return OffspringLaw({{k, 1.0}}); }

    const std::vector<std::pair<int, double>>& pmf() const { return pmf_; }
    double mean() const { return mean_; }
    double second_moment() const { return second_moment_; }
    int max_support() const { return pmf_.back().first; }
    double prob(int k) const {
        for (const auto& [j, p] : pmf_)
            if (j == k) return p;
        return 0.0;
    }
    bool supercritical() const { return mean_ > 1.0; }
    bool has_leaves() const { return pmf_.front().first == 0; }

    int sample(Rng& rng) const {
        const double u = rng.next_double();
        for (std::size_t i = 0; i < cumulative_.size(); ++i)
            if (u < cumulative_[i]) return pmf_[i].first;
        return pmf_.back().first;
    }

private:
    std::vector<std::pair<int, double>> pmf_;
    std::vector<double> cumulative_;
    double mean_ = 0.0;
    double second_moment_ = 0.0;
};

// Finite-support conductance law on [delta, 1/delta].
class ConductanceLaw {
public:
    ConductanceLaw(std::vector<std::pair<double, double>> atoms, double delta)
        : atoms_(std::move(atoms)), delta_(delta) {
        if (delta_ <= 0.0) throw std::invalid_argument("ellipticity delta must be > 0");
        double total = 0.0;
        for (const auto& [v, w] : atoms_) {
            if (v < delta_ - 1e-15 || v > 1.0 / delta_ + 1e-15)
                throw std::invalid_argument("conductance atom outside [delta, 1/delta]");
            if (w < 0.0) throw std::invalid_argument("atom weight must be >= 0");
            total += w;
            mean_ += v * w;
        }
        if (std::abs(total - 1.0) > kMassTolerance)
            throw std::invalid_argument("conductance weights must sum to 1");
        double acc = 0.0;
        for (const auto& [v, w] : atoms_) {
            acc += w;
            cumulative_.push_back(acc);
        }
        cumulative_.back() = 1.0;
    }

    static ConductanceLaw unit() { return ConductanceLaw({{1.0, 1.0}}, 1.0); }

    const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }
    double delta() const { return delta_; }
    double mean() const { return mean_; }

    double sample(Rng& rng) const {
        const double u = rng.next_double();
        for (std::size_t i = 0; i < cumulative_.size(); ++i)
            if (u < cumulative_[i]) return atoms_[i].first;
        return atoms_.back().first;
    }

    ConductanceLaw scaled(double c) const {
        std::vector<std::pair<double, double>> atoms = atoms_;
        for (auto& [v, w] : atoms) v *= c;
        double d = std::min(delta_ * c, 1.0 / (c / delta_));
        return ConductanceLaw(std::move(atoms), d);
    }

private:
    std::vector<std::pair<double, double>> atoms_;
    std::vector<double> cumulative_;
    double delta_ = 0.0;
    double mean_ = 0.0;
};

// mu_eps = alpha * delta_eps + (1 - alpha) * mu. A sample is marked when it
// comes from the epsilon atom, so pruning never compares floats against eps.
struct EpsilonSample {
    double value;
    bool is_epsilon;
};

class EpsilonMixture {
public:
    EpsilonMixture(ConductanceLaw base, double alpha, double epsilon)
        : base_(std::move(base)), alpha_(alpha), epsilon_(epsilon) {
        if (alpha_ < 0.0 || alpha_ >= 1.0)
            throw std::invalid_argument("mixture weight alpha must be in [0, 1)");
        if (epsilon_ < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    }

    static EpsilonMixture pure(ConductanceLaw base) {
        return EpsilonMixture(std::move(base), 0.0, 0.0);
    }

    const ConductanceLaw& base() const { return base_; }
    double alpha() const { return alpha_; }
    double epsilon() const { return epsilon_; }
    bool elliptic() const { return alpha_ == 0.0 || epsilon_ > 0.0; }

    // The coin toss and the base draw are both consumed on every call, so
    // trees sampled under different eps values from the same seed share
    // topology and the exact set of marked edges.
    EpsilonSample sample(Rng& rng) const {
        const bool marked = alpha_ > 0.0 ? rng.bernoulli(alpha_) : (rng.next_double(), false);
        const double base_value = base_.sample(rng);
        if (marked) return {epsilon_, true};
        return {base_value, false};
    }

    EpsilonMixture with_epsilon(double eps) const {
        return EpsilonMixture(base_, alpha_, eps);
    }

private:
    ConductanceLaw base_;
    double alpha_;
    double epsilon_;
};

// gamma, the mean conductance of an edge; normalizes the hat measure.
inline double mixture_mean(const EpsilonMixture& mix) {
    return mix.alpha() * mix.epsilon() + (1.0 - mix.alpha()) * mix.base().mean();
}

inline double pgf_eval(const OffspringLaw& law, double s) {
    if (s < 0.0 || s > 1.0) throw std::domain_error("pgf argument must be in [0, 1]");
    double value = 0.0;
    for (const auto& [k, p] : law.pmf()) value += p * std::pow(s, k);
    return value;
}

inline double pgf_derivative(const OffspringLaw& law, double s) {
    double value = 0.0;
    for (const auto& [k, p] : law.pmf())
        if (k >= 1) value += p * k * std::pow(s, k - 1);
    return value;
}

namespace detail {
inline double binomial_coefficient(int n, int k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    return c;
}
} // namespace detail

// Binomial thinning: every child edge is removed independently with
// probability alpha. The resulting PGF is f(alpha + (1 - alpha) s).
inline OffspringLaw thinned_law(const OffspringLaw& law, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("thinning probability must be in [0, 1]");
    const int kmax = law.max_support();
    std::vector<double> probs(static_cast<std::size_t>(kmax) + 1, 0.0);
    for (const auto& [k, p] : law.pmf())
        for (int j = 0; j <= k; ++j)
            probs[j] += p * detail::binomial_coefficient(k, j) *
                        std::pow(1.0 - alpha, j) * std::pow(alpha, k - j);
    std::vector<std::pair<int, double>> pmf;
    double total = 0.0;
    for (int j = 0; j <= kmax; ++j) total += probs[j];
    for (int j = 0; j <= kmax; ++j)
        if (probs[j] > 0.0) pmf.emplace_back(j, probs[j] / total);
    return OffspringLaw(std::move(pmf));
}

// Smallest fixed point q of f(s) = s on [0, 1]. Bisection; the theory
// already pins the degenerate cases (mean <= 1 and p0 = 0).
inline double extinction_probability(const OffspringLaw& law) {
    if (!law.has_leaves()) return 0.0;
    if (law.mean() <= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0 - 1e-15;
    // f(s) - s is positive on [0, q) and negative on (q, 1).
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (pgf_eval(law, mid) - mid > 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15) break;
    }
    const double q = 0.5 * (lo + hi);
    if (std::abs(pgf_eval(law, q) - q) >= 1e-12)
        throw std::runtime_error("extinction fixed-point solver did not converge");
    return q;
}

// (E[T], E[T^2]) for the total progeny T of a subcritical process:
// E[T] = 1/(1-m), E[T^2] = (m2 - m^2 - m + 1)/(1-m)^3.
inline std::pair<double, double> progeny_moments(const OffspringLaw& law) {
    const double m = law.mean();
    if (m >= 1.0)
        throw std::invalid_argument("progeny moments require subcritical law");
    const double m2 = law.second_moment();
    const double one_minus = 1.0 - m;
    return {1.0 / one_minus,
            (m2 - m * m - m + 1.0) / (one_minus * one_minus * one_minus)};
}

// Duality: the supercritical tree conditioned on extinction is a GW tree
// with pmf p_k q^{k-1}.
inline OffspringLaw dual_law(const OffspringLaw& law) {
    const double q = extinction_probability(law);
    if (q <= 0.0 || q >= 1.0)
        throw std::invalid_argument("dual law requires extinction probability in (0, 1)");
    std::vector<std::pair<int, double>> pmf;
    double total = 0.0;
    for (const auto& [k, p] : law.pmf()) {
        const double pk = p * std::pow(q, k - 1);
        pmf.emplace_back(k, pk);
        total += pk;
    }
    for (auto& [k, p] : pmf) p /= total; // total = f(q)/q = 1 up to rounding
    return OffspringLaw(std::move(pmf));
}

struct HarrisLaws {
    OffspringLaw backbone; // leafless, same mean as the input law
    OffspringLaw bush;     // subcritical; equals the dual law when q > 0
};

// Harris decomposition of the survival-conditioned tree: backbone PGF
// (f(q + (1-q)s) - f(q)) / (1-q), bush PGF f(qs)/q.
inline HarrisLaws harris_laws(const OffspringLaw& law) {
    const double q = extinction_probability(law);
    if (q >= 1.0)
        throw std::invalid_argument("harris decomposition requires supercritical law");
    if (q == 0.0)
        return {law, OffspringLaw::point_mass(0)};
    const int kmax = law.max_support();
    std::vector<double> backbone_probs(static_cast<std::size_t>(kmax) + 1, 0.0);
    for (const auto& [k, p] : law.pmf())
        for (int j = 1; j <= k; ++j)
            backbone_probs[j] += p * detail::binomial_coefficient(k, j) *
                                 std::pow(1.0 - q, j) * std::pow(q, k - j);
    double total = 0.0;
    for (int j = 1; j <= kmax; ++j) total += backbone_probs[j];
    std::vector<std::pair<int, double>> backbone_pmf;
    for (int j = 1; j <= kmax; ++j)
        if (backbone_probs[j] > 0.0)
            backbone_pmf.emplace_back(j, backbone_probs[j] / total);
    return {OffspringLaw(std::move(backbone_pmf)), dual_law(law)};
}

inline int sample_offspring(const OffspringLaw& law, Rng& rng) {
    return law.sample(rng);
}

inline EpsilonSample sample_conductance(const EpsilonMixture& mix, Rng& rng) {
    return mix.sample(rng);
}

} // namespace gwspeed

#endif
