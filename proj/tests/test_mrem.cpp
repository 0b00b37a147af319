#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_util.hpp"
#include "recsm/mrem.hpp"

using namespace recsm;
using namespace recsm::testutil;

namespace {

void zero_matching_params(ParamStore& store, const std::string& needle) {
    for (int i = 0; i < store.count(); ++i)
        if (store.entry(i).name.find(needle) != std::string::npos) store.entry(i).value.fill(0.0);
}

struct MremFixture {
    ParamStore store;
    BackboneHandles backbone;
    MremHandles mrem;

    explicit MremFixture(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        backbone = init_backbone(store, backbone_tiny(), rng, "backbone");
        mrem = init_mrem(store, backbone_tiny().pyramid_channels, rng, "scs0.mrem");
    }
};

Tensor warp_ref(const Tensor& feat, const Tensor& disp, double offset) {
    const int C = feat.dim(0), H = feat.dim(1), W = feat.dim(2);
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double sx = x - (disp.at2(y, x) + offset);
                const int x0 = static_cast<int>(std::floor(sx));
                const double f = sx - x0;
                double v = 0.0;
                if (x0 >= 0 && x0 < W) v += (1 - f) * feat.at3(c, y, x0);
                if (x0 + 1 >= 0 && x0 + 1 < W) v += f * feat.at3(c, y, x0 + 1);
                out.at3(c, y, x) = v;
            }
    return out;
}

Tensor conv3d_ref(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0);
    Tensor y({O, D, H, W});
    for (int o = 0; o < O; ++o)
        for (int d = 0; d < D; ++d)
            for (int yy = 0; yy < H; ++yy)
                for (int xx = 0; xx < W; ++xx) {
                    double acc = b[o];
                    for (int c = 0; c < C; ++c)
                        for (int kz = 0; kz < 3; ++kz)
                            for (int ky = 0; ky < 3; ++ky)
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int iz = d + kz - 1, iy = yy + ky - 1, ix = xx + kx - 1;
                                    if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                    acc += x.at4(c, iz, iy, ix) *
                                           w.data()[(((static_cast<int64_t>(o) * C + c) * 3 + kz) * 3 + ky) * 3 + kx];
                                }
                    y.at4(o, d, yy, xx) = acc;
                }
    return y;
}

void relu_inplace(Tensor& t) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = std::max(0.0, t[i]);
}

}  // namespace

TEST_CASE("single branch equals a straightforward per-pixel loop implementation") {
    const int C = 1, H = 4, W = 6, R = 2;
    ParamStore store;
    std::mt19937_64 rng(101);
    AggStackHandle agg;
    {
        // use the mrem initializer to get the same stack layout
        MremHandles h = init_mrem(store, C, rng, "m");
        agg = h.small;
    }
    std::mt19937_64 irng(102);
    Tensor left = random_tensor({C, H, W}, irng);
    Tensor right = random_tensor({C, H, W}, irng);
    Tensor prior = random_tensor({H, W}, irng, 0.0, 1.5);

    // implementation under test
    Graph g;
    Binder b(g, store);
    Graph::Var vol = g.residual_cost_volume(g.input(left), g.input(right), g.input(prior), R);
    Graph::Var scores = aggregate_costs(b, vol, agg);
    Graph::Var eps = g.soft_argmin(scores, R);
    Graph::Var out = g.add(g.input(prior), eps);

    // independent loop reference
    const int D = 2 * R + 1;
    Tensor volr({2 * C, D, H, W});
    for (int ri = 0; ri < D; ++ri) {
        Tensor warped = warp_ref(right, prior, ri - R);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    volr.at4(c, ri, y, x) = left.at3(c, y, x);
                    volr.at4(C + c, ri, y, x) = warped.at3(c, y, x);
                }
    }
    auto wt = [&](const Conv3dHandle& h) { return store.entry(h.w).value; };
    auto bt = [&](const Conv3dHandle& h) { return store.entry(h.b).value; };
    Tensor a1 = conv3d_ref(volr, wt(agg.c1), bt(agg.c1));
    relu_inplace(a1);
    Tensor a2 = conv3d_ref(a1, wt(agg.c2), bt(agg.c2));
    relu_inplace(a2);
    Tensor a3 = conv3d_ref(a2, wt(agg.c3), bt(agg.c3));
    relu_inplace(a3);
    Tensor a4 = conv3d_ref(a3, wt(agg.c4), bt(agg.c4));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double denom = 0.0, e = 0.0;
            double zmax = -1e300;
            for (int d = 0; d < D; ++d) zmax = std::max(zmax, -a4.at4(0, d, y, x));
            for (int d = 0; d < D; ++d) denom += std::exp(-a4.at4(0, d, y, x) - zmax);
            for (int d = 0; d < D; ++d) e += (d - R) * std::exp(-a4.at4(0, d, y, x) - zmax) / denom;
            CHECK(g.val(out).at2(y, x) == doctest::Approx(prior.at2(y, x) + e).epsilon(1e-6));
        }
}

TEST_CASE("zero aggregation parameters give the exact constant prior back") {
    MremFixture f(7);
    zero_matching_params(f.store, ".agg_");
    const int H = 32, W = 64;
    std::mt19937_64 irng(8);
    Tensor img_l = random_tensor({3, H, W}, irng, 0.0, 1.0);
    Tensor img_r = random_tensor({3, H, W}, irng, 0.0, 1.0);
    Graph g;
    Binder b(g, f.store);
    PyramidVars pl = backbone_forward(b, g.input(img_l), f.backbone);
    PyramidVars pr = backbone_forward(b, g.input(img_r), f.backbone);
    Graph::Var prior = g.input(Tensor::full({H, W}, 3.0));
    MremResult r = mrem_forward(b, pl, pr, prior, prior, {16, 8, 4}, f.mrem, true);
    for (std::int64_t i = 0; i < g.val(r.disparity).size(); ++i) CHECK(g.val(r.disparity)[i] == 3.0);
    for (std::int64_t i = 0; i < g.val(r.branch_small).size(); ++i) CHECK(g.val(r.branch_small)[i] == 3.0);
    for (std::int64_t i = 0; i < g.val(r.branch_medium).size(); ++i) CHECK(g.val(r.branch_medium)[i] == 3.0);
}

TEST_CASE("per-branch residuals stay within the SCS1 ranges") {
    MremFixture f(9);
    const int H = 32, W = 64;
    std::mt19937_64 irng(10);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor img_l = random_tensor({3, H, W}, irng, 0.0, 1.0);
        Tensor img_r = random_tensor({3, H, W}, irng, 0.0, 1.0);
        Tensor prior_t = random_tensor({H, W}, irng, 0.0, 24.0);
        Graph g;
        Binder b(g, f.store);
        PyramidVars pl = backbone_forward(b, g.input(img_l), f.backbone);
        PyramidVars pr = backbone_forward(b, g.input(img_r), f.backbone);
        Graph::Var prior = g.input(prior_t);
        MremResult r = mrem_forward(b, pl, pr, prior, prior, {16, 8, 4}, f.mrem, true);
        CHECK_NOTHROW(ResidualMap{g.val(r.residual_small), 4}.check_bound());
        CHECK_NOTHROW(ResidualMap{g.val(r.residual_medium), 8}.check_bound());
        CHECK_NOTHROW(ResidualMap{g.val(r.residual_large), 16}.check_bound());
    }
}

TEST_CASE("temporal attention only touches the large branch") {
    MremFixture f(11);
    const int H = 32, W = 64;
    std::mt19937_64 irng(12);
    // non-zero attention conv so toggling the flag matters
    for (int i = 0; i < f.store.count(); ++i)
        if (f.store.entry(i).name.find(".attention") != std::string::npos)
            for (std::int64_t j = 0; j < f.store.entry(i).value.size(); ++j)
                f.store.entry(i).value[j] = 0.2 * (j % 3) + 0.1;
    Tensor img_l = random_tensor({3, H, W}, irng, 0.0, 1.0);
    Tensor img_r = random_tensor({3, H, W}, irng, 0.0, 1.0);
    Tensor prior_t = random_tensor({H, W}, irng, 0.0, 10.0);

    auto run = [&](bool use_ta) {
        Graph g;
        Binder b(g, f.store);
        PyramidVars pl = backbone_forward(b, g.input(img_l), f.backbone);
        PyramidVars pr = backbone_forward(b, g.input(img_r), f.backbone);
        Graph::Var prior = g.input(prior_t);
        MremResult r = mrem_forward(b, pl, pr, prior, prior, {16, 8, 4}, f.mrem, use_ta);
        return std::array<Tensor, 3>{g.val(r.branch_small), g.val(r.branch_medium), g.val(r.branch_large)};
    };
    auto on = run(true);
    auto off = run(false);
    for (std::int64_t i = 0; i < on[0].size(); ++i) CHECK(on[0][i] == off[0][i]);
    for (std::int64_t i = 0; i < on[1].size(); ++i) CHECK(on[1][i] == off[1][i]);
    bool large_changed = false;
    for (std::int64_t i = 0; i < on[2].size(); ++i)
        if (on[2][i] != off[2][i]) large_changed = true;
    CHECK(large_changed);
}

TEST_CASE("constant disparity yields spatially constant attention in (0,1)") {
    MremFixture f(13);
    Graph g;
    Binder b(g, f.store);
    Graph::Var att = compute_temporal_attention(b, g.input(Tensor::full({8, 10}, 7.0)), f.mrem.attention);
    const Tensor& a = g.val(att);
    for (std::int64_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] > 0.0);
        CHECK(a[i] < 1.0);
        CHECK(a[i] == doctest::Approx(a[0]).epsilon(1e-9));
    }
}

TEST_CASE("a disparity step edge drives the attention maximum (positive weights)") {
    ParamStore store;
    // small positive weights keep the sigmoid out of saturation
    int w = store.add("att.w", Tensor::full({1, 1, 3, 3}, 0.01));
    int bias = store.add("att.b", Tensor::zeros({1}));
    Conv2dHandle h{w, bias, 1, 1, 1};
    Tensor disp({6, 8});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x) disp.at2(y, x) = (x >= 4) ? 5.0 : 0.0;
    Graph g;
    Binder b(g, store);
    Graph::Var att = compute_temporal_attention(b, g.input(disp), h);
    const Tensor& a = g.val(att);
    for (int y = 0; y < 6; ++y) {
        int best = 0;
        for (int x = 1; x < 8; ++x)
            if (a.at2(y, x) > a.at2(y, best)) best = x;
        CHECK((best == 3 || best == 4));
    }
}

TEST_CASE("forced attention scales the cost volume element-wise") {
    std::mt19937_64 rng(17);
    Tensor volt = random_tensor({3, 5, 4, 6}, rng);
    Tensor att = random_tensor({4, 6}, rng, 0.05, 0.95);
    Graph g;
    Graph::Var scaled = g.mul_hw(g.input(volt), g.input(att));
    for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 5; ++d)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 6; ++x)
                    CHECK(g.val(scaled).at4(c, d, y, x) == doctest::Approx(volt.at4(c, d, y, x) * att.at2(y, x)));
    Graph g1;
    Graph::Var same = g1.mul_hw(g1.input(volt), g1.input(Tensor::full({4, 6}, 1.0)));
    for (std::int64_t i = 0; i < volt.size(); ++i) CHECK(g1.val(same)[i] == volt[i]);
    Graph g2;
    Graph::Var half = g2.mul_hw(g2.input(volt), g2.input(Tensor::full({4, 6}, 0.5)));
    for (std::int64_t i = 0; i < volt.size(); ++i) CHECK(g2.val(half)[i] == doctest::Approx(0.5 * volt[i]));
}

TEST_CASE("mrem gradient w.r.t. the prior matches finite differences") {
    MremFixture f(19);
    std::mt19937_64 irng(20);
    Tensor img_l = random_tensor({3, 16, 32}, irng, 0.0, 1.0);
    Tensor img_r = random_tensor({3, 16, 32}, irng, 0.0, 1.0);
    std::vector<Tensor> in = {random_tensor({16, 32}, irng, 1.0, 6.0)};
    double err = fd_check_subset(
        in,
        [&](Graph& g, const std::vector<Graph::Var>& v) {
            Binder b(g, f.store);
            PyramidVars pl = backbone_forward(b, g.input(img_l), f.backbone);
            PyramidVars pr = backbone_forward(b, g.input(img_r), f.backbone);
            MremResult r = mrem_forward(b, pl, pr, v[0], v[0], {4, 2, 1}, f.mrem, true);
            return weighted_sum(g, r.disparity);
        },
        60, /*seed=*/77);
    CHECK(err < 1e-4);
}
