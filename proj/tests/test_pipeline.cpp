#include <random>

#include "doctest.h"
#include "fd_util.hpp"
#include "recsm/pipeline.hpp"

using namespace recsm;
using namespace recsm::testutil;

namespace {

StereoFrame random_frame(int h, int w, std::mt19937_64& rng, int index = 0) {
    StereoFrame f;
    f.left = random_tensor({3, h, w}, rng, 0.0, 1.0);
    f.right = random_tensor({3, h, w}, rng, 0.0, 1.0);
    f.frame_index = index;
    return f;
}

}  // namespace

TEST_CASE("default R schedule halves per stack with floor 1") {
    RSchedule s3 = default_r_schedule(3);
    REQUIRE(s3.per_scs.size() == 3);
    CHECK(s3.per_scs[0].large == 16);
    CHECK(s3.per_scs[0].medium == 8);
    CHECK(s3.per_scs[0].small == 4);
    CHECK(s3.per_scs[1].large == 8);
    CHECK(s3.per_scs[1].medium == 4);
    CHECK(s3.per_scs[1].small == 2);
    CHECK(s3.per_scs[2].large == 4);
    CHECK(s3.per_scs[2].medium == 2);
    CHECK(s3.per_scs[2].small == 1);
    RSchedule s5 = default_r_schedule(5);
    CHECK(s5.per_scs[3].large == 2);
    CHECK(s5.per_scs[3].medium == 1);
    CHECK(s5.per_scs[3].small == 1);
    CHECK(s5.per_scs[4].large == 1);
    CHECK(s5.per_scs[4].medium == 1);
    CHECK(s5.per_scs[4].small == 1);
    CHECK_THROWS_AS(default_r_schedule(0), ConfigError);
}

TEST_CASE("run_frame is structurally sound and deterministic") {
    ModelState state = build_model(desk_model_config(2), 41);
    std::mt19937_64 irng(42);
    StereoFrame f = random_frame(32, 64, irng);
    DisparityMap prev = DisparityMap::constant(32, 64, 2.0);
    FrameResult a = run_frame(f, prev, state);
    REQUIRE(a.per_scs_disparities.size() == 2);
    REQUIRE(a.per_scs_branch_disparities.size() == 2);
    CHECK(a.final_disparity.values.shape() == std::vector<int>{32, 64});
    CHECK(a.per_scs_branch_disparities[0].small.shape() == std::vector<int>{32, 64});
    for (std::int64_t i = 0; i < a.final_disparity.values.size(); ++i)
        CHECK(a.final_disparity.values[i] == a.per_scs_disparities.back().values[i]);
    FrameResult b = run_frame(f, prev, state);
    for (std::int64_t i = 0; i < a.final_disparity.values.size(); ++i)
        CHECK(a.final_disparity.values[i] == b.final_disparity.values[i]);
}

TEST_CASE("same seed builds identical parameters") {
    ModelState a = build_model(desk_model_config(2), 7);
    ModelState b = build_model(desk_model_config(2), 7);
    REQUIRE(a.params.count() == b.params.count());
    for (int i = 0; i < a.params.count(); ++i) {
        CHECK(a.params.entry(i).name == b.params.entry(i).name);
        for (std::int64_t j = 0; j < a.params.entry(i).value.size(); ++j)
            CHECK(a.params.entry(i).value[j] == b.params.entry(i).value[j]);
    }
}

TEST_CASE("the stack decomposes into the explicit SCS chain") {
    ModelState state = build_model(desk_model_config(2), 43);
    std::mt19937_64 irng(44);
    StereoFrame f = random_frame(32, 64, irng);
    DisparityMap prev = DisparityMap::constant(32, 64, 3.0);
    FrameResult whole = run_frame(f, prev, state);

    Graph g;
    Binder b(g, state.params);
    Graph::Var left = g.input(f.left), right = g.input(f.right), d0 = g.input(prev.values);
    PyramidVars pl = backbone_forward(b, left, state.backbone);
    PyramidVars pr = backbone_forward(b, right, state.backbone);
    Graph::Var context = d0;
    for (int i = 0; i < 2; ++i) {
        auto [refined, branches] = scs_forward(b, pl, pr, context, d0, left, i, state);
        const Tensor& step = g.val(refined);
        for (std::int64_t j = 0; j < step.size(); ++j)
            CHECK(step[j] == whole.per_scs_disparities[static_cast<size_t>(i)].values[j]);
        context = refined;
    }
}

TEST_CASE("recursion feeds each frame's output into the next frame") {
    ModelState state = build_model(desk_model_config(1), 45);
    std::mt19937_64 irng(46);
    std::vector<StereoFrame> frames;
    for (int n = 0; n < 3; ++n) frames.push_back(random_frame(32, 64, irng, n));
    DisparityMap d0 = DisparityMap::constant(32, 64, 1.0);
    std::vector<FrameResult> seq = run_sequence(frames, d0, state);
    REQUIRE(seq.size() == 3);
    DisparityMap prev = d0;
    for (int n = 0; n < 3; ++n) {
        FrameResult manual = run_frame(frames[static_cast<size_t>(n)], prev, state);
        for (std::int64_t i = 0; i < manual.final_disparity.values.size(); ++i)
            CHECK(manual.final_disparity.values[i] == seq[static_cast<size_t>(n)].final_disparity.values[i]);
        prev = manual.final_disparity;
    }
    std::vector<FrameResult> one = run_sequence({frames[0]}, d0, state);
    FrameResult direct = run_frame(frames[0], d0, state);
    for (std::int64_t i = 0; i < direct.final_disparity.values.size(); ++i)
        CHECK(one[0].final_disparity.values[i] == direct.final_disparity.values[i]);
}

TEST_CASE("zero residuals and a fresh dom return the prior exactly") {
    ModelState state = build_model(desk_model_config(2), 47);
    // zero every aggregation stack: all soft-argmin scores become uniform
    for (int i = 0; i < state.params.count(); ++i)
        if (state.params.entry(i).name.find(".agg_") != std::string::npos)
            state.params.entry(i).value.fill(0.0);
    std::mt19937_64 irng(48);
    StereoFrame f = random_frame(32, 64, irng);
    DisparityMap prev = DisparityMap::constant(32, 64, 3.0);
    FrameResult r = run_frame(f, prev, state);
    for (std::int64_t i = 0; i < r.final_disparity.values.size(); ++i) CHECK(r.final_disparity.values[i] == 3.0);
    for (std::int64_t i = 0; i < r.residual_sum.size(); ++i) CHECK(r.residual_sum[i] == 0.0);
}

TEST_CASE("adding a stack adds exactly one MREM parameter set") {
    ModelState k2 = build_model(desk_model_config(2), 49);
    ModelState k3 = build_model(desk_model_config(3), 49);
    ParamStore lone;
    std::mt19937_64 rng(50);
    init_mrem(lone, backbone_tiny().pyramid_channels, rng, "x");
    CHECK(k3.params.scalar_count() - k2.params.scalar_count() == lone.scalar_count());
}

TEST_CASE("dom weight sharing holds for the default config only") {
    ModelState shared = build_model(desk_model_config(3), 51);
    CHECK(shared.doms.size() == 1);
    CHECK(verify_weight_sharing(shared));
    ModelConfig cfg = desk_model_config(3);
    cfg.scs.shared_dom = false;
    ModelState separate = build_model(cfg, 51);
    CHECK(separate.doms.size() == 3);
    CHECK_FALSE(verify_weight_sharing(separate));
    CHECK(separate.params.scalar_count() > shared.params.scalar_count());
}

TEST_CASE("run_frame rejects malformed previous disparities") {
    ModelState state = build_model(desk_model_config(1), 53);
    std::mt19937_64 irng(54);
    StereoFrame f = random_frame(32, 64, irng);
    CHECK_THROWS_AS(run_frame(f, DisparityMap::constant(16, 64, 1.0), state), ShapeError);
    CHECK_THROWS_AS(run_frame(f, DisparityMap{Tensor::zeros({32, 64}), 4}, state), ShapeError);
}
