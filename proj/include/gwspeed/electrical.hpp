#ifndef GWSPEED_ELECTRICAL_HPP
#define GWSPEED_ELECTRICAL_HPP

#include <Eigen/Sparse>
#include <cstdint>
#include <deque>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gwspeed/laws.hpp"
#include "gwspeed/tree.hpp"

namespace gwspeed {

struct ConductanceResult {
    double value = 0.0;
    std::int32_t truncation_depth = 0;
    std::vector<double> trace; // C_n values, nonincreasing in n
};

namespace detail {

// Effective conductance of the edge (parent, v) in series with v's subtree
// truncated at `level`. Boundary vertices (depth == level) are shorted:
// the series formula degenerates to the bare edge conductance, exactly.
// Zero-conductance edges are absent wires and contribute 0.
inline double subtree_series_conductance(const WeightedTree& tree, std::int64_t v,
                                         std::int32_t level) {
    struct Frame {
        std::int64_t vertex;
        std::int32_t next_child;
        double acc;
    };
    // C(v) for internal v is the parallel sum of the series contributions of
    // its child edges; computed with an explicit stack (rays can be deep).
    auto series = [](double xi, double child_c, bool child_at_boundary) {
        if (xi == 0.0) return 0.0;
        if (child_at_boundary) return xi;
        if (child_c == 0.0) return 0.0;
        return 1.0 / (1.0 / xi + 1.0 / child_c);
    };
    if (tree.depth(v) >= level) return tree.edge_conductance(v);
    if (tree.edge_conductance(v) == 0.0) return 0.0;
    if (!tree.expanded(v))
        throw std::invalid_argument("tree not realized to the requested level");
    std::vector<Frame> stack{{v, 0, 0.0}};
    double returned = 0.0;
    bool returned_boundary = false;
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child > 0) {
            const std::int64_t done = tree.child(f.vertex, f.next_child - 1);
            const double xi = tree.edge_conductance(done);
            f.acc += series(xi, returned, returned_boundary);
        }
        if (f.next_child < tree.child_count(f.vertex)) {
            const std::int64_t c = tree.child(f.vertex, f.next_child);
            ++f.next_child;
            if (tree.edge_conductance(c) == 0.0) {
                // absent wire: series term is 0 regardless of the subtree
                returned = 0.0;
                returned_boundary = false;
                continue;
            }
            if (tree.depth(c) >= level) {
                returned = 0.0;
                returned_boundary = true;
                continue;
            }
            if (!tree.expanded(c))
                throw std::invalid_argument("tree not realized to the requested level");
            stack.push_back({c, 0, 0.0});
            continue;
        }
        returned = f.acc;
        returned_boundary = false;
        stack.pop_back();
    }
    return series(tree.edge_conductance(v), returned, false);
}

} // namespace detail

// C(rho, G_n): bottom-up series/parallel recursion with the level-n
// generation shorted to ground.
inline double conductance_to_level(const WeightedTree& tree, std::int32_t n) {
    if (n < 1) throw std::invalid_argument("level must be >= 1");
    if (!tree.expanded(tree.root()))
        throw std::invalid_argument("tree not realized to the requested level");
    double total = 0.0;
    for (std::int32_t i = 0; i < tree.child_count(tree.root()); ++i)
        total += detail::subtree_series_conductance(tree, tree.child(tree.root(), i), n);
    return total;
}

// Evaluates C(rho, G_n) for n = n0, 2 n0, 3 n0, ... until the relative
// successive difference drops below rel_tol. The returned value is an upper
// bound on C(rho, infinity); the monotone trace is kept for auditing.
// Additive depth steps: each extra level multiplies the vertex count, so
// doubling the depth would square the cost.
inline ConductanceResult conductance_to_infinity(const WeightedTree& tree,
                                                 double rel_tol,
                                                 std::int32_t n0 = 4) {
    ConductanceResult result;
    double prev = -1.0;
    for (std::int32_t n = n0;; n += n0) {
        try {
            tree.extend_to_depth(n);
        } catch (const ResourceError& e) {
            std::ostringstream msg;
            msg << e.what() << "; bracketing trace:";
            for (double c : result.trace) msg << ' ' << c;
            throw ResourceError(msg.str());
        }
        const double c = conductance_to_level(tree, n);
        result.trace.push_back(c);
        result.truncation_depth = n;
        result.value = c;
        if (prev >= 0.0 && prev - c <= rel_tol * (c > 0.0 ? c : 1.0) && c <= prev)
            return result;
        prev = c;
    }
}

struct RatioPair {
    double c_star = 0.0; // conductance of the v0 branch, extra edge in series
    double c_full = 0.0; // parallel sum over all root edges
};

// Both values share the truncation level n so their errors partially cancel
// in the ratio. Always 0 <= c_star <= c_full.
inline RatioPair conductance_ratio_pair(const WeightedTree& tree, std::int32_t n) {
    if (!tree.augmented())
        throw std::invalid_argument("conductance_ratio_pair requires an augmented tree");
    RatioPair pair;
    const std::int64_t v0 = tree.v0();
    for (std::int32_t i = 0; i < tree.child_count(tree.root()); ++i) {
        const std::int64_t c = tree.child(tree.root(), i);
        const double contribution = detail::subtree_series_conductance(tree, c, n);
        pair.c_full += contribution;
        if (c == v0) pair.c_star = contribution;
    }
    return pair;
}

// Exact oracle: harmonic voltage problem with unit voltage at the root and
// zero on the boundary, solved as a sparse linear system. Independent of the
// series/parallel recursion. Returns the net current out of the root, or 0
// when the root is disconnected from the boundary.
inline double brute_force_conductance(const WeightedTree& tree,
                                      const std::vector<std::int64_t>& boundary) {
    if (boundary.empty()) throw std::invalid_argument("boundary set must be nonempty");
    std::unordered_set<std::int64_t> boundary_set(boundary.begin(), boundary.end());
    if (boundary_set.count(tree.root()))
        throw std::invalid_argument("boundary set must exclude the root");
    if (tree.size() > 10'000)
        throw std::invalid_argument("brute-force oracle is limited to 1e4 vertices");

    // Component of the root through positive edges, cut at boundary vertices.
    std::vector<std::int64_t> component;
    std::unordered_map<std::int64_t, int> index; // interior unknowns only
    bool touches_boundary = false;
    std::deque<std::int64_t> queue{tree.root()};
    std::unordered_set<std::int64_t> seen{tree.root()};
    while (!queue.empty()) {
        const std::int64_t v = queue.front();
        queue.pop_front();
        component.push_back(v);
        if (boundary_set.count(v)) {
            touches_boundary = true;
            continue; // grounded; do not cross
        }
        if (v != tree.root())
            index.emplace(v, static_cast<int>(index.size()));
        auto visit = [&](std::int64_t w, double xi) {
            if (xi > 0.0 && seen.insert(w).second) queue.push_back(w);
        };
        if (tree.parent(v) != kNoVertex) visit(tree.parent(v), tree.edge_conductance(v));
        for (std::int32_t i = 0; i < tree.child_count(v); ++i) {
            const std::int64_t c = tree.child(v, i);
            visit(c, tree.edge_conductance(c));
        }
    }
    if (!touches_boundary) return 0.0;

    const int n = static_cast<int>(index.size());
    Eigen::SparseMatrix<double> laplacian(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& [v, row] : index) {
        double diag = 0.0;
        auto couple = [&](std::int64_t w, double xi) {
            if (xi <= 0.0) return;
            diag += xi;
            if (w == tree.root()) {
                rhs[row] += xi; // unit voltage source
            } else if (auto it = index.find(w); it != index.end()) {
                triplets.emplace_back(row, it->second, -xi);
            } // grounded boundary contributes only to the diagonal
        };
        couple(tree.parent(v), tree.edge_conductance(v));
        for (std::int32_t i = 0; i < tree.child_count(v); ++i) {
            const std::int64_t c = tree.child(v, i);
            couple(c, tree.edge_conductance(c));
        }
        triplets.emplace_back(row, row, diag);
    }
    laplacian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(laplacian);
    Eigen::VectorXd voltage;
    if (n > 0) {
        voltage = solver.solve(rhs);
        if (solver.info() != Eigen::Success) return 0.0;
    }
    double current = 0.0;
    for (std::int32_t i = 0; i < tree.child_count(tree.root()); ++i) {
        const std::int64_t c = tree.child(tree.root(), i);
        const double xi = tree.edge_conductance(c);
        if (xi <= 0.0) continue;
        double vc = 0.0;
        if (!boundary_set.count(c)) {
            auto it = index.find(c);
            vc = (it != index.end()) ? voltage[it->second] : 1.0;
        }
        current += xi * (1.0 - vc);
    }
    return current;
}

inline std::vector<std::int64_t> generation(const WeightedTree& tree, std::int32_t n) {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < tree.size(); ++i)
        if (tree.depth(static_cast<std::int64_t>(i)) == n)
            out.push_back(static_cast<std::int64_t>(i));
    return out;
}

// Conductance from v to the sphere of radius r around v, in the whole tree
// seen as an undirected network (re-rooted at v). Lazily realizes the ball.
inline double conductance_to_sphere(const WeightedTree& tree, std::int64_t v,
                                    std::int32_t radius) {
    if (radius < 1) throw std::invalid_argument("radius must be >= 1");
    struct Link {
        std::int64_t vertex;
        std::int64_t from;
        double xi;
        std::int32_t dist;
    };
    // Recursive lambda over the re-rooted view; radius is small by intent.
    auto branch = [&](auto&& self, const Link& link) -> double {
        if (link.xi == 0.0) return 0.0;
        if (link.dist >= radius) return link.xi; // shorted sphere
        double c = 0.0;
        tree.ensure_children(link.vertex);
        const std::int64_t p = tree.parent(link.vertex);
        if (p != kNoVertex && p != link.from)
            c += self(self, {p, link.vertex, tree.edge_conductance(link.vertex),
                             link.dist + 1});
        for (std::int32_t i = 0; i < tree.child_count(link.vertex); ++i) {
            const std::int64_t ch = tree.child(link.vertex, i);
            if (ch == link.from) continue;
            c += self(self, {ch, link.vertex, tree.edge_conductance(ch), link.dist + 1});
        }
        if (c == 0.0) return 0.0;
        return 1.0 / (1.0 / link.xi + 1.0 / c);
    };
    double total = 0.0;
    tree.ensure_children(v);
    const std::int64_t p = tree.parent(v);
    if (p != kNoVertex)
        total += branch(branch, {p, v, tree.edge_conductance(v), 1});
    for (std::int32_t i = 0; i < tree.child_count(v); ++i) {
        const std::int64_t ch = tree.child(v, i);
        total += branch(branch, {ch, v, tree.edge_conductance(ch), 1});
    }
    return total;
}

// Upper bound B_m on E[R_infinity^m] for a leafless supercritical tree with
// conductances >= delta:
//   B_0 = 1,
//   B_m = sum_{k<m} C(m,k) delta^{k-m} E[N^-m] B_k / (1 - E[N^-m]).
inline double resistance_moment_bound(const OffspringLaw& offspring, double delta,
                                      int order) {
    if (offspring.has_leaves())
        throw std::invalid_argument("resistance moment bound requires p0 = 0");
    if (offspring.mean() <= 1.0)
        throw std::invalid_argument("resistance moment bound requires a supercritical law");
    if (delta <= 0.0) throw std::invalid_argument("delta must be > 0");
    if (order < 1) throw std::invalid_argument("moment order must be >= 1");
    std::vector<double> bounds{1.0};
    for (int m = 1; m <= order; ++m) {
        double inv_moment = 0.0; // E[N^-m]
        for (const auto& [k, p] : offspring.pmf())
            inv_moment += p / std::pow(static_cast<double>(k), m);
        if (inv_moment >= 1.0)
            throw std::invalid_argument("E[N^-m] >= 1: law must not be a point mass at 1");
        double acc = 0.0;
        for (int k = 0; k < m; ++k)
            acc += detail::binomial_coefficient(m, k) * std::pow(delta, k - m) *
                   inv_moment * bounds[static_cast<std::size_t>(k)];
        bounds.push_back(acc / (1.0 - inv_moment));
    }
    return bounds.back();
}

} // namespace gwspeed

#endif
