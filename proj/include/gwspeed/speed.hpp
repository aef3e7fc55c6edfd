#ifndef GWSPEED_SPEED_HPP
#define GWSPEED_SPEED_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwspeed/electrical.hpp"
#include "gwspeed/laws.hpp"
#include "gwspeed/parallel.hpp"
#include "gwspeed/rng.hpp"
#include "gwspeed/tree.hpp"
#include "gwspeed/walk.hpp"

namespace gwspeed {

// Substream ids shared by all estimators, so coupled configurations consume
// randomness in the same order.
inline constexpr std::uint64_t kTreeStream = 1;
inline constexpr std::uint64_t kWalkStream = 2;

struct Estimate {
    double value = 0.0;
    double stderr_value = 0.0;
    std::int64_t replicas = 0;
    std::string method;

    double half_width_3sigma() const { return 3.0 * stderr_value; }
};

namespace detail {

inline Estimate mean_estimate(const std::vector<double>& samples, std::string method) {
    Estimate est;
    est.method = std::move(method);
    est.replicas = static_cast<std::int64_t>(samples.size());
    double sum = 0.0;
    for (double s : samples) sum += s;
    est.value = sum / static_cast<double>(samples.size());
    double ss = 0.0;
    for (double s : samples) ss += (s - est.value) * (s - est.value);
    if (samples.size() > 1)
        est.stderr_value = std::sqrt(ss / (static_cast<double>(samples.size()) - 1.0) /
                                     static_cast<double>(samples.size()));
    return est;
}

inline double root_pi(const WeightedTree& tree) {
    double pi = 0.0;
    tree.ensure_children(tree.root());
    for (std::int32_t i = 0; i < tree.child_count(tree.root()); ++i)
        pi += tree.edge_conductance(tree.child(tree.root(), i));
    return pi;
}

} // namespace detail

struct LlnBudget {
    std::int64_t steps = 100'000;
    std::int64_t walks = 100;
    std::int64_t burn_in = 10'000;
};

// |X_n| / n over long quenched walks, averaged over environments.
inline Estimate speed_lln(const OffspringLaw& offspring, const EpsilonMixture& mix,
                          const LlnBudget& budget, std::uint64_t master_seed,
                          int workers = 1) {
    if (!offspring.supercritical() || offspring.has_leaves())
        throw std::invalid_argument("speed_lln requires a supercritical leafless law");
    if (budget.burn_in >= budget.steps)
        throw std::invalid_argument("burn_in must be below steps");
    if (!mix.elliptic()) {
        const OffspringLaw thinned = thinned_law(offspring, mix.alpha());
        if (thinned.mean() <= 1.0) {
            Estimate zero;
            zero.method = "lln";
            zero.replicas = 0;
            return zero; // v(nu, mu_0) = 0 when the pruned process dies out
        }
        throw std::invalid_argument(
            "epsilon = 0 with a surviving pruned process requires conditioning; "
            "use speed_on_pruned");
    }
    auto samples = parallel_map<double>(budget.walks, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        WeightedTree tree(WeightedTree::PlainGen{offspring, mix},
                          mix_seed(seed, kTreeStream));
        Rng walk_rng = Rng::substream(seed, kWalkStream);
        std::int64_t v = tree.root();
        std::int32_t depth_at_burn_in = 0;
        for (std::int64_t t = 1; t <= budget.steps; ++t) {
            v = step(tree, v, walk_rng);
            if (t == budget.burn_in) depth_at_burn_in = tree.depth(v);
        }
        return static_cast<double>(tree.depth(v) - depth_at_burn_in) /
               static_cast<double>(budget.steps - budget.burn_in);
    });
    return detail::mean_estimate(samples, "lln");
}

// v = 1 - (2 / gamma) E^aug[xi_0 C(T*) / C(T)], Monte Carlo over augmented
// trees with both conductances truncated at a common level.
inline Estimate speed_conductance_formula(const OffspringLaw& offspring,
                                          const EpsilonMixture& mix,
                                          std::int32_t truncation,
                                          std::int64_t replicas,
                                          std::uint64_t master_seed, int workers = 1) {
    if (!mix.elliptic())
        throw std::invalid_argument(
            "conductance formula requires a uniformly elliptic mixture");
    if (truncation < 2) throw std::invalid_argument("truncation must be >= 2");
    const double gamma = mixture_mean(mix);
    auto samples = parallel_map<double>(replicas, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        WeightedTree tree(
            WeightedTree::AugmentedGen{offspring, size_biased_root_degree(offspring), mix},
            mix_seed(seed, kTreeStream));
        tree.extend_to_depth(truncation);
        const RatioPair pair = conductance_ratio_pair(tree, truncation);
        const double xi0 = tree.edge_conductance(tree.v0());
        return pair.c_full > 0.0 ? xi0 * pair.c_star / pair.c_full : 0.0;
    });
    Estimate est = detail::mean_estimate(samples, "conductance_formula");
    est.value = 1.0 - (2.0 / gamma) * est.value;
    est.stderr_value *= 2.0 / gamma;
    return est;
}

struct InvariantEstimate {
    Estimate estimate;
    double weight_mean = 0.0; // sanity statistic; E[pi(rho)/(gamma deg rho)] = 1
};

// v = E-hat[[X_1 - X_0]_{X_{-infinity}}], approximated by D_M and computed by
// self-normalized importance sampling over augmented environments.
inline InvariantEstimate speed_invariant_formula(const OffspringLaw& offspring,
                                                 const EpsilonMixture& mix,
                                                 std::int64_t horizon_m,
                                                 std::int64_t replicas,
                                                 std::uint64_t master_seed,
                                                 int workers = 1) {
    if (!mix.elliptic())
        throw std::invalid_argument(
            "invariant-measure formula requires X_{-infinity}; epsilon must be > 0 "
            "or alpha = 0");
    const double gamma = mixture_mean(mix);
    struct Sample {
        double weighted_dm;
        double weight;
    };
    auto samples = parallel_map<Sample>(replicas, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        WeightedTree tree(
            WeightedTree::AugmentedGen{offspring, size_biased_root_degree(offspring), mix},
            mix_seed(seed, kTreeStream));
        const WalkPath path =
            bi_infinite_walk(tree, horizon_m, 1, mix_seed(seed, kWalkStream));
        const double weight =
            detail::root_pi(tree) /
            (gamma * static_cast<double>(tree.child_count(tree.root())));
        const double dm = static_cast<double>(d_m_increment(path, tree, horizon_m));
        return Sample{weight * dm, weight};
    });
    double sum_a = 0.0, sum_b = 0.0;
    for (const Sample& s : samples) {
        sum_a += s.weighted_dm;
        sum_b += s.weight;
    }
    const double n = static_cast<double>(samples.size());
    const double mean_a = sum_a / n, mean_b = sum_b / n;
    const double ratio = mean_a / mean_b;
    // Delta method for the ratio estimator.
    double ss = 0.0;
    for (const Sample& s : samples) {
        const double r = s.weighted_dm - ratio * s.weight;
        ss += r * r;
    }
    InvariantEstimate out;
    out.estimate.method = "invariant_formula";
    out.estimate.replicas = static_cast<std::int64_t>(samples.size());
    out.estimate.value = ratio;
    out.estimate.stderr_value = std::sqrt(ss / (n - 1.0) / n) / mean_b;
    out.weight_mean = mean_b;
    return out;
}

// Closed form for P-hat_0(|T_0| = infinity): condition on the root degree k
// (weight p_{k-1}) and on the number j of unmarked root edges; the cluster
// survives one of the j kept subtrees with probability 1 - q^j, and the
// conductance-law mean cancels against gamma_0.
inline double hat_survival_probability(const OffspringLaw& offspring, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw std::invalid_argument("alpha must be in [0, 1)");
    const OffspringLaw thinned = thinned_law(offspring, alpha);
    if (thinned.mean() <= 1.0) return 0.0;
    const double q = extinction_probability(thinned);
    double total = 0.0;
    for (const auto& [km1, p] : offspring.pmf()) {
        const int k = km1 + 1; // root degree under the augmented law
        double inner = 0.0;
        for (int j = 1; j <= k; ++j)
            inner += detail::binomial_coefficient(k, j) * std::pow(1.0 - alpha, j) *
                     std::pow(alpha, k - j) * j * (1.0 - std::pow(q, j));
        total += p * inner / ((1.0 - alpha) * k);
    }
    return total;
}

// Weighted Monte Carlo oracle for the closed form above: sample augmented
// trees with epsilon-marks, weight by pi(rho)/(gamma_0 deg rho), and resolve
// the survival of the root cluster exactly by q-propagation over its
// frontier vertices.
inline Estimate hat_survival_mc_oracle(const OffspringLaw& offspring, double alpha,
                                       const ConductanceLaw& base,
                                       std::int32_t depth, std::int64_t replicas,
                                       std::uint64_t master_seed, int workers = 1) {
    const OffspringLaw thinned = thinned_law(offspring, alpha);
    const double q = thinned.mean() <= 1.0 ? 1.0 : extinction_probability(thinned);
    const EpsilonMixture mix(base, alpha, 0.0);
    const double gamma = mixture_mean(mix);
    auto samples = parallel_map<double>(replicas, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        WeightedTree tree(
            WeightedTree::AugmentedGen{offspring, size_biased_root_degree(offspring), mix},
            mix_seed(seed, kTreeStream));
        tree.extend_to_depth(depth);
        const double weight =
            detail::root_pi(tree) /
            (gamma * static_cast<double>(tree.child_count(tree.root())));
        const PrunedCluster cluster = prune_cluster(tree);
        const double survival =
            1.0 - std::pow(q, static_cast<double>(cluster.frontier_vertices));
        return weight * survival;
    });
    return detail::mean_estimate(samples, "hat_survival_mc");
}

enum class PrunedSampler { Harris, Rejection };

// v(nu, mu_0): LLN speed on the pruned cluster conditioned on survival. The
// walk moves on a tree with leaves; at a leaf the only move is back.
inline Estimate speed_on_pruned(const OffspringLaw& offspring, double alpha,
                                const ConductanceLaw& conductances,
                                const LlnBudget& budget, std::uint64_t master_seed,
                                int workers = 1,
                                PrunedSampler sampler = PrunedSampler::Harris) {
    const OffspringLaw thinned = thinned_law(offspring, alpha);
    if (thinned.mean() <= 1.0)
        throw std::invalid_argument("pruned process is not supercritical");
    auto walk_speed = [&](const WeightedTree& tree, std::uint64_t seed) {
        Rng walk_rng = Rng::substream(seed, kWalkStream);
        std::int64_t v = tree.root();
        std::int32_t depth_at_burn_in = 0;
        for (std::int64_t t = 1; t <= budget.steps; ++t) {
            v = step(tree, v, walk_rng);
            if (t == budget.burn_in) depth_at_burn_in = tree.depth(v);
        }
        return static_cast<double>(tree.depth(v) - depth_at_burn_in) /
               static_cast<double>(budget.steps - budget.burn_in);
    };
    auto samples = parallel_map<double>(budget.walks, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        if (sampler == PrunedSampler::Harris) {
            WeightedTree tree = sample_conditioned_cluster(offspring, alpha, conductances,
                                                           0, mix_seed(seed, kTreeStream));
            return walk_speed(tree, seed);
        }
        // Rejection oracle: generate, prune, reject extinct clusters. Only
        // the cluster frontier is grown (the ambient tree is supercritical
        // and would explode). A cluster is accepted once its frontier is
        // wide enough that the residual extinction mass q^frontier is
        // negligible, or once it survives to the depth cap.
        for (std::uint64_t attempt = 0;; ++attempt) {
            WeightedTree tree(
                WeightedTree::PlainGen{offspring, EpsilonMixture(conductances, alpha, 0.0)},
                mix_seed(mix_seed(seed, attempt + 100), kTreeStream));
            bool accepted = false;
            for (;;) {
                const PrunedCluster cluster = prune_cluster(tree);
                if (cluster.state == ClusterState::Extinct) break;
                if (cluster.frontier_vertices >= 30) {
                    accepted = true;
                    break;
                }
                bool grew = false;
                for (std::int64_t v : cluster.vertices) {
                    if (!tree.expanded(v) && tree.depth(v) < 48) {
                        tree.ensure_children(v);
                        grew = true;
                    }
                }
                if (!grew) { // alive but pinched against the depth cap
                    accepted = true;
                    break;
                }
            }
            if (accepted) return walk_speed(tree, seed);
        }
    });
    Estimate est = detail::mean_estimate(
        samples, sampler == PrunedSampler::Harris ? "pruned_harris" : "pruned_rejection");
    return est;
}

struct Theorem1Point {
    double epsilon = 0.0;
    Estimate estimate;
};

struct Theorem1Report {
    std::vector<Theorem1Point> curve; // one row per grid epsilon
    double hat_survival = 0.0;
    Estimate pruned_speed;
    double target = 0.0;
    double target_stderr = 0.0;
    bool limit_pass = false;    // smallest-eps estimate inside the 3-sigma band
    bool monotone_trend = true; // diagnostic, not gating
};

// Desk-scale check of the vanishing-conductance limit: the speed along a
// decreasing epsilon grid against hat-survival times the conditioned speed.
// All grid points share the master seed, so trees are coupled across eps.
inline Theorem1Report theorem1_check(const OffspringLaw& offspring, double alpha,
                                     const ConductanceLaw& base,
                                     const std::vector<double>& epsilon_grid,
                                     const LlnBudget& lln_budget,
                                     const LlnBudget& pruned_budget,
                                     std::uint64_t master_seed, int workers = 1) {
    if (epsilon_grid.empty())
        throw std::invalid_argument("epsilon grid must be nonempty");
    for (std::size_t i = 1; i < epsilon_grid.size(); ++i)
        if (epsilon_grid[i] >= epsilon_grid[i - 1] || epsilon_grid[i] <= 0.0)
            throw std::invalid_argument("epsilon grid must be strictly decreasing and > 0");
    Theorem1Report report;
    report.hat_survival = hat_survival_probability(offspring, alpha);
    const OffspringLaw thinned = thinned_law(offspring, alpha);
    if (thinned.mean() > 1.0) {
        report.pruned_speed = speed_on_pruned(offspring, alpha, base, pruned_budget,
                                              master_seed, workers);
        report.target = report.hat_survival * report.pruned_speed.value;
        report.target_stderr = report.hat_survival * report.pruned_speed.stderr_value;
    } else {
        report.pruned_speed.method = "pruned_harris";
        report.target = 0.0; // v(nu, mu_0) = 0 convention
    }
    for (double eps : epsilon_grid) {
        Theorem1Point point;
        point.epsilon = eps;
        point.estimate = speed_lln(offspring, EpsilonMixture(base, alpha, eps),
                                   lln_budget, master_seed, workers);
        report.curve.push_back(point);
    }
    for (std::size_t i = 1; i < report.curve.size(); ++i) {
        const Estimate& prev = report.curve[i - 1].estimate;
        const Estimate& cur = report.curve[i].estimate;
        const double band = 3.0 * std::sqrt(prev.stderr_value * prev.stderr_value +
                                            cur.stderr_value * cur.stderr_value);
        if (cur.value > prev.value + band) report.monotone_trend = false;
    }
    const Estimate& last = report.curve.back().estimate;
    const double band =
        3.0 * std::sqrt(last.stderr_value * last.stderr_value +
                        report.target_stderr * report.target_stderr);
    report.limit_pass = std::abs(last.value - report.target) <= band;
    return report;
}

struct ContinuityPoint {
    Estimate estimate;
    double deviation = 0.0;
    double combined_stderr = 0.0;
};

struct ContinuityReport {
    std::vector<ContinuityPoint> sequence;
    Estimate limit_estimate;
    bool pass = false; // final deviation statistically indistinguishable from 0
};

// Empirical continuity of the speed in the conductance law: estimates along
// a law sequence against the limit law, shared seeds throughout.
inline ContinuityReport continuity_check(const OffspringLaw& offspring,
                                         const std::vector<ConductanceLaw>& sequence,
                                         const ConductanceLaw& limit,
                                         std::int32_t truncation, std::int64_t replicas,
                                         std::uint64_t master_seed, int workers = 1) {
    for (const ConductanceLaw& law : sequence)
        if (law.delta() != limit.delta())
            throw std::invalid_argument("all laws must share the ellipticity constant");
    ContinuityReport report;
    report.limit_estimate = speed_conductance_formula(
        offspring, EpsilonMixture::pure(limit), truncation, replicas, master_seed, workers);
    for (const ConductanceLaw& law : sequence) {
        ContinuityPoint point;
        point.estimate = speed_conductance_formula(offspring, EpsilonMixture::pure(law),
                                                   truncation, replicas, master_seed,
                                                   workers);
        point.deviation = std::abs(point.estimate.value - report.limit_estimate.value);
        point.combined_stderr =
            std::sqrt(point.estimate.stderr_value * point.estimate.stderr_value +
                      report.limit_estimate.stderr_value *
                          report.limit_estimate.stderr_value);
        report.sequence.push_back(point);
    }
    const ContinuityPoint& last = report.sequence.back();
    report.pass = last.deviation <= 3.0 * last.combined_stderr;
    return report;
}

enum class TestFunction { DegreeRoot, PiRoot, ConductanceBall3, ClusterBallIndicator };

inline const char* test_function_name(TestFunction f) {
    switch (f) {
        case TestFunction::DegreeRoot: return "deg_rho";
        case TestFunction::PiRoot: return "pi_rho";
        case TestFunction::ConductanceBall3: return "conductance_g3";
        case TestFunction::ClusterBallIndicator: return "cluster_b2_gt4";
    }
    return "?";
}

namespace detail {

inline double vertex_pi(const WeightedTree& tree, std::int64_t v) {
    tree.ensure_children(v);
    double pi = tree.parent(v) != kNoVertex ? tree.edge_conductance(v) : 0.0;
    for (std::int32_t i = 0; i < tree.child_count(v); ++i)
        pi += tree.edge_conductance(tree.child(v, i));
    return pi;
}

inline double vertex_degree(const WeightedTree& tree, std::int64_t v) {
    tree.ensure_children(v);
    return static_cast<double>(tree.child_count(v) +
                               (tree.parent(v) != kNoVertex ? 1 : 0));
}

// |T0(v) intersected with the radius-2 ball around v|.
inline std::size_t cluster_ball_size(const WeightedTree& tree, std::int64_t v) {
    std::size_t count = 0;
    std::deque<std::pair<std::int64_t, std::int32_t>> queue{{v, 0}};
    std::deque<std::int64_t> from{kNoVertex};
    while (!queue.empty()) {
        const auto [u, dist] = queue.front();
        const std::int64_t origin = from.front();
        queue.pop_front();
        from.pop_front();
        ++count;
        if (dist == 2) continue;
        tree.ensure_children(u);
        const std::int64_t p = tree.parent(u);
        if (p != kNoVertex && p != origin && !tree.eps_mark(u)) {
            queue.emplace_back(p, dist + 1);
            from.push_back(u);
        }
        for (std::int32_t i = 0; i < tree.child_count(u); ++i) {
            const std::int64_t c = tree.child(u, i);
            if (c != origin && !tree.eps_mark(c)) {
                queue.emplace_back(c, dist + 1);
                from.push_back(u);
            }
        }
    }
    return count;
}

inline double eval_test_function(const WeightedTree& tree, std::int64_t v,
                                 TestFunction f) {
    switch (f) {
        case TestFunction::DegreeRoot: return vertex_degree(tree, v);
        case TestFunction::PiRoot: return vertex_pi(tree, v);
        case TestFunction::ConductanceBall3: return conductance_to_sphere(tree, v, 3);
        case TestFunction::ClusterBallIndicator:
            return cluster_ball_size(tree, v) > 4 ? 1.0 : 0.0;
    }
    return 0.0;
}

} // namespace detail

struct StationarityRow {
    TestFunction function;
    double invariance_diff = 0.0;    // mean of w f(rho) - w Gf(rho)
    double invariance_stderr = 0.0;
    double symmetry_diff = 0.0;      // mean of w xi0 (f(rho) - f(v0)), g = 1
    double symmetry_stderr = 0.0;
    bool pass = false;
};

struct StationarityReport {
    std::vector<StationarityRow> rows;
    double weight_mean = 0.0;
    bool pass = false;
};

// Invariance of the hat measure under one environment re-rooting step, plus
// the edge-symmetry identity, both as paired Monte Carlo tests.
inline StationarityReport stationarity_check(const OffspringLaw& offspring,
                                             const EpsilonMixture& mix,
                                             std::int64_t replicas,
                                             std::uint64_t master_seed,
                                             int workers = 1) {
    constexpr std::array<TestFunction, 4> functions = {
        TestFunction::DegreeRoot, TestFunction::PiRoot,
        TestFunction::ConductanceBall3, TestFunction::ClusterBallIndicator};
    const double gamma = mixture_mean(mix);
    struct Row {
        std::array<double, 4> invariance;
        std::array<double, 4> symmetry;
        double weight;
    };
    auto samples = parallel_map<Row>(replicas, workers, [&](std::int64_t i) {
        const std::uint64_t seed = replica_seed(master_seed, static_cast<std::uint64_t>(i));
        WeightedTree tree(
            WeightedTree::AugmentedGen{offspring, size_biased_root_degree(offspring), mix},
            mix_seed(seed, kTreeStream));
        const std::int64_t rho = tree.root();
        const std::int64_t v0 = tree.v0();
        const double deg = static_cast<double>(tree.child_count(rho));
        const double weight = detail::root_pi(tree) / (gamma * deg);
        const double xi0 = tree.edge_conductance(v0);
        Row row{};
        row.weight = weight;
        for (std::size_t fi = 0; fi < functions.size(); ++fi) {
            const TestFunction f = functions[fi];
            const double f_rho = detail::eval_test_function(tree, rho, f);
            // w * Gf(rho) = sum_v xi(rho, v) f(v) / (gamma deg rho)
            double gf = 0.0;
            for (std::int32_t c = 0; c < tree.child_count(rho); ++c) {
                const std::int64_t v = tree.child(rho, c);
                const double xi = tree.edge_conductance(v);
                if (xi > 0.0) gf += xi * detail::eval_test_function(tree, v, f);
            }
            gf /= gamma * deg;
            row.invariance[fi] = weight * f_rho - gf;
            // Edge symmetry of the augmented law (the identity behind
            // reversibility): E[xi0 f(rho) g(v0)] = E[xi0 f(v0) g(rho)],
            // tested unweighted with g = 1. The root weight cancels against
            // the neighbor sum when this is paired with the hat measure.
            row.symmetry[fi] =
                xi0 > 0.0
                    ? xi0 * (f_rho - detail::eval_test_function(tree, v0, f)) / gamma
                    : 0.0;
        }
        return row;
    });
    StationarityReport report;
    report.pass = true;
    const double n = static_cast<double>(samples.size());
    for (const Row& s : samples) report.weight_mean += s.weight / n;
    for (std::size_t fi = 0; fi < functions.size(); ++fi) {
        StationarityRow row;
        row.function = functions[fi];
        double inv_mean = 0.0, sym_mean = 0.0;
        for (const Row& s : samples) {
            inv_mean += s.invariance[fi] / n;
            sym_mean += s.symmetry[fi] / n;
        }
        double inv_ss = 0.0, sym_ss = 0.0;
        for (const Row& s : samples) {
            inv_ss += (s.invariance[fi] - inv_mean) * (s.invariance[fi] - inv_mean);
            sym_ss += (s.symmetry[fi] - sym_mean) * (s.symmetry[fi] - sym_mean);
        }
        row.invariance_diff = inv_mean;
        row.invariance_stderr = std::sqrt(inv_ss / (n - 1.0) / n);
        row.symmetry_diff = sym_mean;
        row.symmetry_stderr = std::sqrt(sym_ss / (n - 1.0) / n);
        row.pass = std::abs(row.invariance_diff) <= 3.0 * row.invariance_stderr &&
                   std::abs(row.symmetry_diff) <= 3.0 * row.symmetry_stderr;
        report.pass = report.pass && row.pass;
        report.rows.push_back(row);
    }
    return report;
}

} // namespace gwspeed

#endif
