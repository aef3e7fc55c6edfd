#ifndef GWSPEED_TREE_HPP
#define GWSPEED_TREE_HPP

#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gwspeed/laws.hpp"
#include "gwspeed/rng.hpp"

namespace gwspeed {

class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::int64_t kNoVertex = -1;
inline constexpr std::size_t kDefaultVertexBudget = 10'000'000;

struct TreeNode {
    std::int64_t parent = kNoVertex;
    std::int64_t first_child = kNoVertex;
    std::int32_t child_count = 0;
    std::int32_t depth = 0;
    std::uint64_t code = 0; // deterministic per-vertex stream id
    double conductance = 0.0; // edge to parent; 0 for the root
    bool eps_mark = false;
    bool expanded = false;
    bool survivor = true; // only meaningful in conditioned mode
};

// Rooted weighted tree arena, lazily extensible by depth. Every vertex draws
// its offspring count and child-edge conductances from a stream seeded by
// (tree seed, vertex code), so the realized tree does not depend on the
// order or granularity of extensions. Confine one tree to one worker.
class WeightedTree {
public:
    struct PlainGen {
        OffspringLaw offspring;
        EpsilonMixture conductances;
    };
    struct AugmentedGen {
        OffspringLaw offspring;
        OffspringLaw root_degree; // P(deg rho = k) = p_{k-1}
        EpsilonMixture conductances;
    };
    // Survival-conditioned pruned cluster via the Harris decomposition:
    // survivor vertices redraw thinned offspring until at least one child
    // survives; doomed vertices branch with the dual (subcritical) law.
    struct ConditionedGen {
        OffspringLaw thinned;
        OffspringLaw dual;
        double survival; // 1 - q
        ConductanceLaw conductances;
    };
    struct StaticGen {}; // deserialized tree; cannot be extended

    using Generator = std::variant<PlainGen, AugmentedGen, ConditionedGen, StaticGen>;

    WeightedTree(Generator gen, std::uint64_t seed,
                 std::size_t vertex_budget = kDefaultVertexBudget)
        : gen_(std::move(gen)), seed_(seed), budget_(vertex_budget) {
        TreeNode root;
        root.code = mix_seed(seed_, 0x526f6f74ULL);
        nodes_.push_back(root);
    }

    std::uint64_t seed() const { return seed_; }
    std::size_t size() const { return nodes_.size(); }
    const TreeNode& node(std::int64_t v) const { return nodes_[static_cast<std::size_t>(v)]; }
    std::int64_t root() const { return 0; }
    bool augmented() const { return std::holds_alternative<AugmentedGen>(gen_); }

    // The augmented neighbor v0 is the first root edge.
    std::int64_t v0() const {
        if (!augmented()) throw std::logic_error("v0 requires an augmented tree");
        ensure_children(0);
        return nodes_[0].first_child;
    }

    std::int64_t parent(std::int64_t v) const { return node(v).parent; }
    std::int32_t depth(std::int64_t v) const { return node(v).depth; }
    double edge_conductance(std::int64_t v) const { return node(v).conductance; }
    bool eps_mark(std::int64_t v) const { return node(v).eps_mark; }
    bool expanded(std::int64_t v) const { return node(v).expanded; }
    bool survivor(std::int64_t v) const { return node(v).survivor; }

    std::span<const std::int64_t> children(std::int64_t v) const {
        const TreeNode& n = node(v);
        if (n.child_count == 0) return {};
        child_ids_.resize(static_cast<std::size_t>(n.child_count));
        for (std::int32_t i = 0; i < n.child_count; ++i)
            child_ids_[static_cast<std::size_t>(i)] = n.first_child + i;
        return child_ids_;
    }

    std::int64_t child(std::int64_t v, std::int32_t i) const {
        return node(v).first_child + i;
    }
    std::int32_t child_count(std::int64_t v) const { return node(v).child_count; }

    // Realizes v's children (idempotent).
    void ensure_children(std::int64_t v) const {
        auto& n = nodes_[static_cast<std::size_t>(v)];
        if (n.expanded) return;
        if (std::holds_alternative<StaticGen>(gen_))
            throw std::logic_error("deserialized tree is not extensible");
        Rng stream(mix_seed(seed_, n.code));
        if (const auto* g = std::get_if<PlainGen>(&gen_)) {
            expand_iid(v, g->offspring.sample(stream), g->conductances, stream);
        } else if (const auto* g = std::get_if<AugmentedGen>(&gen_)) {
            const OffspringLaw& law = (v == 0) ? g->root_degree : g->offspring;
            expand_iid(v, law.sample(stream), g->conductances, stream);
        } else {
            const auto* cg = std::get_if<ConditionedGen>(&gen_);
            if (n.survivor) {
                int k = 0;
                std::vector<bool> flags;
                for (;;) {
                    k = cg->thinned.sample(stream);
                    flags.assign(static_cast<std::size_t>(k), false);
                    bool any = false;
                    for (int i = 0; i < k; ++i) {
                        flags[static_cast<std::size_t>(i)] = stream.bernoulli(cg->survival);
                        any = any || flags[static_cast<std::size_t>(i)];
                    }
                    if (any) break;
                }
                reserve_children(v, k);
                for (int i = 0; i < k; ++i)
                    add_child(v, {cg->conductances.sample(stream), false},
                              flags[static_cast<std::size_t>(i)]);
            } else {
                const int k = cg->dual.sample(stream);
                reserve_children(v, k);
                for (int i = 0; i < k; ++i)
                    add_child(v, {cg->conductances.sample(stream), false}, false);
            }
        }
        nodes_[static_cast<std::size_t>(v)].expanded = true;
    }

    // Realizes every vertex up to `target_depth` (their children exist; the
    // frontier sits at target_depth). Deterministic regardless of previous
    // partial extensions.
    void extend_to_depth(std::int32_t target_depth) const {
        std::deque<std::int64_t> queue{0};
        while (!queue.empty()) {
            const std::int64_t v = queue.front();
            queue.pop_front();
            if (depth(v) >= target_depth) continue;
            ensure_children(v);
            const TreeNode& n = node(v);
            for (std::int32_t i = 0; i < n.child_count; ++i)
                queue.push_back(n.first_child + i);
        }
    }

    std::int32_t realized_depth() const {
        std::int32_t d = 0;
        for (const auto& n : nodes_) d = std::max(d, n.depth);
        return d;
    }

    // Graph distance via the lowest common ancestor.
    std::int32_t distance(std::int64_t u, std::int64_t v) const {
        std::int32_t du = depth(u), dv = depth(v), steps = 0;
        while (du > dv) { u = parent(u); --du; ++steps; }
        while (dv > du) { v = parent(v); --dv; ++steps; }
        while (u != v) { u = parent(u); v = parent(v); steps += 2; }
        return steps;
    }

private:
    void reserve_children(std::int64_t v, int k) const {
        if (nodes_.size() + static_cast<std::size_t>(k) > budget_) {
            std::ostringstream msg;
            msg << "vertex budget " << budget_ << " exceeded (realized "
                << nodes_.size() << " vertices, frontier depth "
                << realized_depth() << ")";
            throw ResourceError(msg.str());
        }
        nodes_[static_cast<std::size_t>(v)].first_child =
            static_cast<std::int64_t>(nodes_.size());
        nodes_[static_cast<std::size_t>(v)].child_count = 0;
    }

    void add_child(std::int64_t v, EpsilonSample edge, bool survivor) const {
        auto& pn = nodes_[static_cast<std::size_t>(v)];
        TreeNode c;
        c.parent = v;
        c.depth = pn.depth + 1;
        c.code = mix_seed(pn.code, static_cast<std::uint64_t>(pn.child_count) + 1);
        c.conductance = edge.value;
        c.eps_mark = edge.is_epsilon;
        c.survivor = survivor;
        ++pn.child_count;
        nodes_.push_back(c);
    }

    void expand_iid(std::int64_t v, int k, const EpsilonMixture& mix, Rng& stream) const {
        reserve_children(v, k);
        for (int i = 0; i < k; ++i) add_child(v, mix.sample(stream), true);
    }

    friend WeightedTree read_tree(std::istream&);

    Generator gen_;
    std::uint64_t seed_;
    std::size_t budget_;
    mutable std::vector<TreeNode> nodes_;
    mutable std::vector<std::int64_t> child_ids_;
};

inline WeightedTree generate_tree(const OffspringLaw& offspring,
                                  const EpsilonMixture& conductances,
                                  std::int32_t depth, std::uint64_t seed,
                                  std::size_t budget = kDefaultVertexBudget) {
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    WeightedTree tree(WeightedTree::PlainGen{offspring, conductances}, seed, budget);
    tree.extend_to_depth(depth);
    return tree;
}

inline OffspringLaw size_biased_root_degree(const OffspringLaw& offspring) {
    std::vector<std::pair<int, double>> pmf;
    for (const auto& [k, p] : offspring.pmf()) pmf.emplace_back(k + 1, p);
    return OffspringLaw(std::move(pmf));
}

inline WeightedTree generate_augmented(const OffspringLaw& offspring,
                                       const EpsilonMixture& conductances,
                                       std::int32_t depth, std::uint64_t seed,
                                       std::size_t budget = kDefaultVertexBudget) {
    if (depth < 0) throw std::invalid_argument("depth must be >= 0");
    WeightedTree tree(
        WeightedTree::AugmentedGen{offspring, size_biased_root_degree(offspring),
                                   conductances},
        seed, budget);
    tree.extend_to_depth(depth);
    return tree;
}

inline WeightedTree sample_conditioned_cluster(const OffspringLaw& offspring,
                                               double alpha,
                                               const ConductanceLaw& conductances,
                                               std::int32_t depth, std::uint64_t seed,
                                               std::size_t budget = kDefaultVertexBudget) {
    const OffspringLaw thinned = thinned_law(offspring, alpha);
    const double q = extinction_probability(thinned);
    if (q >= 1.0)
        throw std::invalid_argument("cannot condition a subcritical cluster on survival");
    if (q == 0.0) {
        // Conditioning is vacuous; reduce to a plain tree of the thinned law.
        WeightedTree tree(
            WeightedTree::PlainGen{thinned, EpsilonMixture::pure(conductances)},
            seed, budget);
        tree.extend_to_depth(depth);
        return tree;
    }
    WeightedTree tree(
        WeightedTree::ConditionedGen{thinned, dual_law(thinned), 1.0 - q, conductances},
        seed, budget);
    tree.extend_to_depth(depth);
    return tree;
}

enum class ClusterState { Extinct, AliveAtFrontier };

// T0: the component of the root through unmarked edges.
struct PrunedCluster {
    std::vector<std::int64_t> vertices;
    std::size_t edge_count = 0;
    ClusterState state = ClusterState::Extinct;
    std::size_t frontier_vertices = 0; // unexpanded cluster vertices
};

// BFS from the root crossing only unmarked edges of the realized tree.
// A cluster is only reported extinct when it is fully enclosed: no cluster
// vertex sits on the (unexpanded) frontier.
inline PrunedCluster prune_cluster(const WeightedTree& tree) {
    PrunedCluster cluster;
    std::deque<std::int64_t> queue{tree.root()};
    while (!queue.empty()) {
        const std::int64_t v = queue.front();
        queue.pop_front();
        cluster.vertices.push_back(v);
        if (!tree.expanded(v)) {
            ++cluster.frontier_vertices;
            continue;
        }
        for (std::int32_t i = 0; i < tree.child_count(v); ++i) {
            const std::int64_t c = tree.child(v, i);
            if (!tree.eps_mark(c)) queue.push_back(c);
        }
    }
    cluster.edge_count = cluster.vertices.size() - 1;
    cluster.state = cluster.frontier_vertices == 0 ? ClusterState::Extinct
                                                   : ClusterState::AliveAtFrontier;
    return cluster;
}

// Line-oriented text format: `id parent_id conductance is_epsilon_edge depth`,
// one vertex per line, preceded by a `# gwspeed-tree v1` header carrying the
// seed. Used for oracle cross-checks and failure reproduction.
inline void write_tree(const WeightedTree& tree, std::ostream& out) {
    out << "# gwspeed-tree v1\n";
    out << "# seed " << tree.seed() << "\n";
    out << "# vertices " << tree.size() << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const TreeNode& n = tree.node(static_cast<std::int64_t>(i));
        out << i << ' ' << n.parent << ' ' << n.conductance << ' '
            << (n.eps_mark ? 1 : 0) << ' ' << n.depth << '\n';
    }
}

inline WeightedTree read_tree(std::istream& in) {
    std::uint64_t seed = 0;
    std::vector<TreeNode> nodes;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            hs >> key;
            if (key == "seed") hs >> seed;
            continue;
        }
        std::istringstream ls(line);
        std::int64_t id = 0;
        TreeNode n;
        int mark = 0;
        if (!(ls >> id >> n.parent >> n.conductance >> mark >> n.depth))
            throw std::runtime_error("malformed tree line: " + line);
        if (id != static_cast<std::int64_t>(nodes.size()))
            throw std::runtime_error("tree vertices must be listed in id order");
        n.eps_mark = mark != 0;
        n.expanded = true;
        nodes.push_back(n);
    }
    if (nodes.empty()) throw std::runtime_error("empty tree file");
    // Rebuild child links; children are contiguous by construction.
    WeightedTree tree(WeightedTree::StaticGen{}, seed, nodes.size() + 1);
    tree.nodes_ = std::move(nodes);
    for (std::size_t i = 1; i < tree.nodes_.size(); ++i) {
        TreeNode& pn = tree.nodes_[static_cast<std::size_t>(tree.nodes_[i].parent)];
        if (pn.child_count == 0) pn.first_child = static_cast<std::int64_t>(i);
        ++pn.child_count;
    }
    return tree;
}

} // namespace gwspeed

#endif
