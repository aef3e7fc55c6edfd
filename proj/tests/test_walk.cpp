#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gwspeed/tree.hpp"
#include "gwspeed/walk.hpp"
#include "oracles.hpp"

using namespace gwspeed;

namespace {

OffspringLaw example_law() { return OffspringLaw({{1, 0.5}, {2, 0.5}}); }

WeightedTree static_tree(const char* text) {
    std::stringstream buffer(text);
    return read_tree(buffer);
}

} // namespace

TEST_CASE("paths are tree-adjacent and start at the given vertex") {
    const EpsilonMixture mix(ConductanceLaw({{0.5, 0.5}, {2.0, 0.5}}, 0.5), 0.2, 0.1);
    WeightedTree tree(WeightedTree::PlainGen{example_law(), mix}, 909);
    Rng rng(1);
    const WalkPath path = run_walk(tree, tree.root(), 2000, rng);
    CHECK(path.position(0) == tree.root());
    CHECK(path.future_window() == 2000);
    for (std::int64_t t = 0; t < 2000; ++t)
        CHECK(tree.distance(path.position(t), path.position(t + 1)) == 1);
}

TEST_CASE("quenched transition frequencies follow the conductances") {
    // root with two leaf children of conductance 0.5 and 2.0
    const WeightedTree tree = static_tree(
        "0 -1 0 0 0\n"
        "1 0 0.5 0 1\n"
        "2 0 2.0 0 1\n");
    Rng rng(7);
    const int departures = 50'000;
    int to_light = 0;
    std::int64_t v = tree.root();
    for (int i = 0; i < departures; ++i) {
        v = step(tree, v, rng);
        if (v == 1) ++to_light;
        v = step(tree, v, rng); // leaf: forced back to the root
        CHECK(v == tree.root());
    }
    const double p = 0.5 / 2.5;
    const double freq = static_cast<double>(to_light) / departures;
    CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1.0 - p) / departures));
}

TEST_CASE("pi = 0 falls back to the uniform neighbor choice") {
    const WeightedTree tree = static_tree(
        "0 -1 0 0 0\n"
        "1 0 0.0 1 1\n"
        "2 0 0.0 1 1\n");
    Rng rng(3);
    const int departures = 40'000;
    int left = 0;
    std::int64_t v = tree.root();
    for (int i = 0; i < departures; ++i) {
        v = step(tree, v, rng);
        if (v == 1) ++left;
        v = step(tree, v, rng); // child has pi = 0 too; unique neighbor
        CHECK(v == tree.root());
    }
    const double freq = static_cast<double>(left) / departures;
    CHECK(std::abs(freq - 0.5) <= 3.0 * std::sqrt(0.25 / departures));
}

TEST_CASE("bi-infinite walk: windows, determinism, independence") {
    const EpsilonMixture mix(ConductanceLaw::unit(), 0.2, 0.1);
    WeightedTree tree(
        WeightedTree::AugmentedGen{example_law(), size_biased_root_degree(example_law()), mix},
        4711);
    const WalkPath a = bi_infinite_walk(tree, 32, 8, 99);
    CHECK(a.past_window() == 32);
    CHECK(a.future_window() == 8);
    CHECK(a.position(0) == tree.root());
    for (std::int64_t t = -32; t < 8; ++t)
        CHECK(tree.distance(a.position(t), a.position(t + 1)) == 1);
    const WalkPath b = bi_infinite_walk(tree, 32, 8, 99);
    for (std::int64_t t = -32; t <= 8; ++t) CHECK(a.position(t) == b.position(t));
    // different seed changes the future stream
    const WalkPath c = bi_infinite_walk(tree, 32, 8, 100);
    bool any_diff = false;
    for (std::int64_t t = -32; t <= 8; ++t) any_diff |= (a.position(t) != c.position(t));
    CHECK(any_diff);
}

TEST_CASE("horodistance increment is always +-1") {
    const EpsilonMixture mix(ConductanceLaw::unit(), 0.2, 0.05);
    Rng scan(55);
    for (int i = 0; i < 200; ++i) {
        WeightedTree tree(
            WeightedTree::AugmentedGen{example_law(), size_biased_root_degree(example_law()),
                                       mix},
            scan.next_u64());
        const WalkPath path = bi_infinite_walk(tree, 16, 1, scan.next_u64());
        const std::int32_t d = d_m_increment(path, tree, 16);
        CHECK((d == 1 || d == -1));
        CHECK_THROWS_AS(d_m_increment(path, tree, 17), std::invalid_argument);
    }
}

TEST_CASE("trap statistics on a hand-built environment") {
    // cluster A = {root, a}; singleton clusters {b} and {c} behind eps edges
    const WeightedTree tree = static_tree(
        "0 -1 0 0 0\n"
        "1 0 1.0 0 1\n"  // a
        "2 1 0.0 1 2\n"  // b, behind an eps edge from a
        "3 0 0.0 1 1\n"); // c, behind an eps edge from the root
    WalkPath path(0, 6, tree.root());
    for (std::int64_t v : {1, 2, 1, 0, 3, 0}) path.append_future(v);
    const TrapStats stats = trap_statistics(path, tree);
    CHECK(stats.first_exit == 2);
    CHECK(stats.indeterminate == 0);
    REQUIRE(stats.entries.size() == 3);
    CHECK(stats.entries == std::vector<std::int64_t>{2, 3, 5});
    CHECK(stats.exits == std::vector<std::int64_t>{3, 5, 6});
    CHECK(stats.sojourns == std::vector<std::int64_t>{1, 2, 1});
    CHECK(stats.cluster_sizes == std::vector<std::size_t>{1, 2, 1});
}

TEST_CASE("trap interleaving on simulated walks") {
    const EpsilonMixture mix(ConductanceLaw::unit(), 0.25, 0.02);
    Rng scan(321);
    for (int i = 0; i < 20; ++i) {
        WeightedTree tree(WeightedTree::PlainGen{example_law(), mix}, scan.next_u64());
        Rng rng(scan.next_u64());
        const WalkPath path = run_walk(tree, tree.root(), 5000, rng);
        const TrapStats stats = trap_statistics(path, tree);
        for (std::size_t k = 0; k < stats.entries.size(); ++k) {
            CHECK(stats.entries[k] < stats.exits[k]);
            CHECK(stats.sojourns[k] >= 1);
            if (k + 1 < stats.entries.size())
                CHECK(stats.exits[k] <= stats.entries[k + 1]);
        }
        if (stats.first_exit >= 0 && !stats.entries.empty())
            CHECK(stats.first_exit <= stats.entries.front());
    }
}

TEST_CASE("return probability respects the conductance bound") {
    WeightedTree tree(WeightedTree::PlainGen{OffspringLaw::point_mass(2),
                                             EpsilonMixture::pure(ConductanceLaw::unit())},
                      64);
    tree.extend_to_depth(2);
    const std::int64_t v = tree.child(tree.child(tree.root(), 0), 0);
    Rng rng(8);
    const ReturnBound result = return_bound_check(tree, v, 8, 4000, rng);
    CHECK(result.bound > 0.0);
    CHECK(result.empirical <= result.bound + 3.0 * result.stderr_value);
    CHECK_THROWS_AS(return_bound_check(tree, tree.root(), 8, 10, rng),
                    std::invalid_argument);
}
