#include <random>

#include "doctest.h"
#include "fd_util.hpp"
#include "recsm/dom.hpp"

using namespace recsm;
using namespace recsm::testutil;

TEST_CASE("freshly initialized dom is the clamped identity") {
    ParamStore store;
    std::mt19937_64 rng(31);
    DomHandles h = init_dom(store, DomConfig{16}, rng, "dom");
    std::mt19937_64 irng(32);
    Tensor img = random_tensor({3, 8, 16}, irng, 0.0, 1.0);
    Tensor disp = random_tensor({8, 16}, irng, -2.0, 6.0);
    Graph g;
    Binder b(g, store);
    Graph::Var out = dom_forward(b, g.input(disp), g.input(img), h);
    for (std::int64_t i = 0; i < disp.size(); ++i) CHECK(g.val(out)[i] == std::max(0.0, disp[i]));
}

TEST_CASE("dom output is non-negative") {
    ParamStore store;
    std::mt19937_64 rng(33);
    DomHandles h = init_dom(store, DomConfig{8}, rng, "dom");
    // force a non-trivial correction layer
    ParamEntry& last = store.entry(h.d6.w);
    std::mt19937_64 wrng(34);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (std::int64_t i = 0; i < last.value.size(); ++i) last.value[i] = dist(wrng);
    std::mt19937_64 irng(35);
    for (int trial = 0; trial < 4; ++trial) {
        Tensor img = random_tensor({3, 8, 16}, irng, 0.0, 1.0);
        Tensor disp = random_tensor({8, 16}, irng, 0.0, 3.0);
        Graph g;
        Binder b(g, store);
        Graph::Var out = dom_forward(b, g.input(disp), g.input(img), h);
        for (std::int64_t i = 0; i < disp.size(); ++i) CHECK(g.val(out)[i] >= 0.0);
    }
}

TEST_CASE("dom gradient w.r.t. the input disparity matches finite differences") {
    ParamStore store;
    std::mt19937_64 rng(36);
    DomHandles h = init_dom(store, DomConfig{8}, rng, "dom");
    ParamEntry& last = store.entry(h.d6.w);
    std::mt19937_64 wrng(37);
    std::uniform_real_distribution<double> dist(-0.3, 0.3);
    for (std::int64_t i = 0; i < last.value.size(); ++i) last.value[i] = dist(wrng);
    std::mt19937_64 irng(38);
    Tensor img = random_tensor({3, 8, 16}, irng, 0.0, 1.0);
    std::vector<Tensor> in = {random_tensor({8, 16}, irng, 1.0, 4.0)};
    double err = fd_check_subset(
        in,
        [&](Graph& g, const std::vector<Graph::Var>& v) {
            Binder b(g, store);
            return weighted_sum(g, dom_forward(b, v[0], g.input(img), h));
        },
        80, /*seed=*/39);
    CHECK(err < 1e-4);
}
