#ifndef GWSPEED_WALK_HPP
#define GWSPEED_WALK_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "gwspeed/rng.hpp"
#include "gwspeed/tree.hpp"

namespace gwspeed {

// Time-indexed vertex sequence over the window [-M, N]; position(0) is the
// walk's start (the root for bi-infinite walks).
class WalkPath {
public:
    WalkPath(std::int64_t past, std::int64_t future_capacity, std::int64_t start)
        : past_(past) {
        positions_.reserve(static_cast<std::size_t>(past + future_capacity + 1));
        positions_.assign(static_cast<std::size_t>(past) + 1, start);
    }

    std::int64_t past_window() const { return past_; }
    std::int64_t future_window() const {
        return static_cast<std::int64_t>(positions_.size()) - past_ - 1;
    }

    std::int64_t position(std::int64_t time) const {
        return positions_[static_cast<std::size_t>(time + past_)];
    }

    void set_past(std::int64_t time, std::int64_t v) {
        positions_[static_cast<std::size_t>(time + past_)] = v;
    }
    void append_future(std::int64_t v) { positions_.push_back(v); }

private:
    std::int64_t past_;
    std::vector<std::int64_t> positions_;
};

// One quenched step from v: neighbor w with probability xi(v, w) / pi(v);
// uniform over neighbors when pi(v) = 0.
inline std::int64_t step(const WeightedTree& tree, std::int64_t v, Rng& rng) {
    tree.ensure_children(v);
    const std::int64_t p = tree.parent(v);
    const std::int32_t k = tree.child_count(v);
    double pi = (p != kNoVertex) ? tree.edge_conductance(v) : 0.0;
    for (std::int32_t i = 0; i < k; ++i)
        pi += tree.edge_conductance(tree.child(v, i));
    if (pi == 0.0) {
        const std::int64_t degree = k + (p != kNoVertex ? 1 : 0);
        if (degree == 0) throw std::logic_error("isolated vertex has no neighbors");
        std::int64_t pick = static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(degree)));
        if (p != kNoVertex) {
            if (pick == 0) return p;
            --pick;
        }
        return tree.child(v, static_cast<std::int32_t>(pick));
    }
    const double target = rng.next_double() * pi;
    double acc = 0.0;
    if (p != kNoVertex) {
        acc += tree.edge_conductance(v);
        if (target < acc) return p;
    }
    for (std::int32_t i = 0; i < k - 1; ++i) {
        acc += tree.edge_conductance(tree.child(v, i));
        if (target < acc) return tree.child(v, i);
    }
    return tree.child(v, k - 1);
}

inline WalkPath run_walk(const WeightedTree& tree, std::int64_t start,
                         std::int64_t steps, Rng& rng) {
    WalkPath path(0, steps, start);
    std::int64_t v = start;
    for (std::int64_t t = 0; t < steps; ++t) {
        v = step(tree, v, rng);
        path.append_future(v);
    }
    return path;
}

// Past and future are independent quenched walks from the root, driven by
// separate substreams of `seed`.
inline WalkPath bi_infinite_walk(const WeightedTree& tree, std::int64_t past_steps,
                                 std::int64_t future_steps, std::uint64_t seed) {
    WalkPath path(past_steps, 0, tree.root());
    Rng past_rng = Rng::substream(seed, 0x9a57ULL);
    std::int64_t v = tree.root();
    for (std::int64_t t = 1; t <= past_steps; ++t) {
        v = step(tree, v, past_rng);
        path.set_past(-t, v);
    }
    Rng future_rng = Rng::substream(seed, 0xf07eULL);
    v = tree.root();
    for (std::int64_t t = 1; t <= future_steps; ++t) {
        v = step(tree, v, future_rng);
        path.append_future(v);
    }
    return path;
}

// Signed distance of u to v with respect to z: [u - v]_z = d(u, z) - d(v, z).
inline std::int32_t horodistance(const WeightedTree& tree, std::int64_t u,
                                 std::int64_t v, std::int64_t z) {
    return tree.distance(u, z) - tree.distance(v, z);
}

// D_M = [X_1 - X_0]_{X_{-M}}, the speed integrand proxy; always +-1.
inline std::int32_t d_m_increment(const WalkPath& path, const WeightedTree& tree,
                                  std::int64_t m) {
    if (path.past_window() < m || path.future_window() < 1)
        throw std::invalid_argument("walk window does not cover [-M, 1]");
    return horodistance(tree, path.position(1), path.position(0), path.position(-m));
}

struct TrapStats {
    std::vector<std::int64_t> entries;       // a_k
    std::vector<std::int64_t> exits;         // b_k
    std::vector<std::int64_t> sojourns;      // D_k = b_k - a_k (forward count)
    std::vector<std::size_t> cluster_sizes;  // |T0(X_{a_k})|
    std::int64_t first_exit = -1;            // b_1, exit from T0(X_0)
    std::size_t indeterminate = 0;           // clusters alive at the frontier
};

namespace detail {

struct ClusterInfo {
    int id = -1;
    bool finite = false;
    bool resolved = false; // false: alive-at-frontier / over budget
    std::size_t size = 0;
};

// Classifies conductance clusters (components through unmarked edges) of
// visited vertices, with memoization across queries.
class ClusterIndex {
public:
    explicit ClusterIndex(const WeightedTree& tree, std::size_t size_cap = 100'000)
        : tree_(tree), size_cap_(size_cap) {}

    const ClusterInfo& cluster_of(std::int64_t v) {
        if (auto it = member_.find(v); it != member_.end())
            return clusters_[static_cast<std::size_t>(it->second)];
        ClusterInfo info;
        info.id = static_cast<int>(clusters_.size());
        info.resolved = true;
        info.finite = true;
        std::vector<std::int64_t> members;
        std::deque<std::int64_t> queue{v};
        std::unordered_map<std::int64_t, bool> seen{{v, true}};
        while (!queue.empty()) {
            const std::int64_t u = queue.front();
            queue.pop_front();
            members.push_back(u);
            if (members.size() > size_cap_) {
                info.resolved = false;
                info.finite = false;
                break;
            }
            if (!tree_.expanded(u)) {
                info.resolved = false;
                info.finite = false;
                continue;
            }
            const std::int64_t p = tree_.parent(u);
            if (p != kNoVertex && !tree_.eps_mark(u) && !seen.count(p)) {
                seen.emplace(p, true);
                queue.push_back(p);
            }
            for (std::int32_t i = 0; i < tree_.child_count(u); ++i) {
                const std::int64_t c = tree_.child(u, i);
                if (!tree_.eps_mark(c) && !seen.count(c)) {
                    seen.emplace(c, true);
                    queue.push_back(c);
                }
            }
        }
        info.size = members.size();
        for (std::int64_t u : members) member_.emplace(u, info.id);
        clusters_.push_back(info);
        return clusters_.back();
    }

private:
    const WeightedTree& tree_;
    std::size_t size_cap_;
    std::unordered_map<std::int64_t, int> member_;
    std::vector<ClusterInfo> clusters_;
};

} // namespace detail

// Entry times a_k into finite conductance clusters, exit times b_k, and
// forward sojourn durations D_k = b_k - a_k. Clusters whose finiteness cannot
// be certified from the realized tree are counted as indeterminate and never
// reported as traps.
inline TrapStats trap_statistics(const WalkPath& path, const WeightedTree& tree) {
    TrapStats stats;
    detail::ClusterIndex index(tree);
    const std::int64_t horizon = path.future_window();

    const detail::ClusterInfo start = index.cluster_of(path.position(0));
    std::int64_t t = 0;
    const int start_id = start.id;
    while (t < horizon && index.cluster_of(path.position(t + 1)).id == start_id) ++t;
    if (t < horizon) stats.first_exit = t + 1;
    std::int64_t scan = (stats.first_exit >= 0) ? stats.first_exit : horizon;

    while (scan < horizon) {
        const detail::ClusterInfo info = index.cluster_of(path.position(scan));
        if (!info.resolved) {
            ++stats.indeterminate;
            const int id = info.id;
            while (scan < horizon && index.cluster_of(path.position(scan)).id == id)
                ++scan;
            continue;
        }
        if (!info.finite) {
            ++scan;
            continue;
        }
        const std::int64_t entry = scan;
        const int id = info.id;
        while (scan < horizon && index.cluster_of(path.position(scan + 1)).id == id)
            ++scan;
        if (scan >= horizon) break; // still inside at the end of the window
        const std::int64_t exit = scan + 1;
        stats.entries.push_back(entry);
        stats.exits.push_back(exit);
        stats.sojourns.push_back(exit - entry);
        stats.cluster_sizes.push_back(info.size);
        scan = exit;
    }
    return stats;
}

namespace detail {

// Effective conductance from v to the level-n generation of the tree, seen
// as an undirected network re-rooted at v. Every branch terminates at the
// generation (leafless trees), so the recursion is finite.
inline double conductance_to_generation(const WeightedTree& tree, std::int64_t v,
                                        std::int32_t level) {
    struct Link {
        std::int64_t vertex;
        std::int64_t from;
        double xi;
    };
    auto branch = [&](auto&& self, const Link& link) -> double {
        if (link.xi == 0.0) return 0.0;
        if (tree.depth(link.vertex) >= level) return link.xi;
        tree.ensure_children(link.vertex);
        double c = 0.0;
        const std::int64_t p = tree.parent(link.vertex);
        if (p != kNoVertex && p != link.from)
            c += self(self, {p, link.vertex, tree.edge_conductance(link.vertex)});
        for (std::int32_t i = 0; i < tree.child_count(link.vertex); ++i) {
            const std::int64_t ch = tree.child(link.vertex, i);
            if (ch == link.from) continue;
            c += self(self, {ch, link.vertex, tree.edge_conductance(ch)});
        }
        if (c == 0.0) return 0.0;
        return 1.0 / (1.0 / link.xi + 1.0 / c);
    };
    tree.ensure_children(v);
    double total = 0.0;
    const std::int64_t p = tree.parent(v);
    if (p != kNoVertex) total += branch(branch, {p, v, tree.edge_conductance(v)});
    for (std::int32_t i = 0; i < tree.child_count(v); ++i) {
        const std::int64_t ch = tree.child(v, i);
        total += branch(branch, {ch, v, tree.edge_conductance(ch)});
    }
    return total;
}

} // namespace detail

struct ReturnBound {
    double empirical = 0.0;
    double stderr_value = 0.0;
    double bound = 0.0;
    std::int64_t trials = 0;
};

// Hitting-probability check: the chance that a walk from v hits the root
// before the level-`escape_level` generation is at most
// C(v, rho) / C(v, G_escape_level). C(v, rho) is the series conductance of
// the unique path; the denominator truncates C(v, infinity) from above.
inline ReturnBound return_bound_check(const WeightedTree& tree, std::int64_t v,
                                      std::int32_t escape_level, std::int64_t trials,
                                      Rng& rng) {
    if (v == tree.root()) throw std::invalid_argument("v must differ from the root");
    if (tree.depth(v) >= escape_level)
        throw std::invalid_argument("escape level must lie beyond v");
    double path_resistance = 0.0;
    for (std::int64_t u = v; u != tree.root(); u = tree.parent(u)) {
        const double xi = tree.edge_conductance(u);
        if (xi == 0.0) throw std::invalid_argument("v is disconnected from the root");
        path_resistance += 1.0 / xi;
    }
    ReturnBound result;
    result.trials = trials;
    result.bound = (1.0 / path_resistance) /
                   detail::conductance_to_generation(tree, v, escape_level);
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < trials; ++i) {
        std::int64_t x = v;
        while (x != tree.root() && tree.depth(x) < escape_level)
            x = step(tree, x, rng);
        if (x == tree.root()) ++hits;
    }
    result.empirical = static_cast<double>(hits) / static_cast<double>(trials);
    result.stderr_value =
        std::sqrt(result.empirical * (1.0 - result.empirical) /
                  static_cast<double>(trials));
    return result;
}

} // namespace gwspeed

#endif
