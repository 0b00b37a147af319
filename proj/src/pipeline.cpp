#include "recsm/pipeline.hpp"

#include <array>

namespace recsm {

void ModelConfig::validate() const {
    backbone.validate();
    dom.validate();
    scs.validate();
}

RSchedule default_r_schedule(int stack_count) {
    if (stack_count < 1) throw ConfigError("R schedule: K must be >= 1");
    RSchedule s;
    RScheduleEntry e{16, 8, 4};
    for (int i = 0; i < stack_count; ++i) {
        s.per_scs.push_back(e);
        e.large = std::max(1, e.large / 2);
        e.medium = std::max(1, e.medium / 2);
        e.small = std::max(1, e.small / 2);
    }
    return s;
}

ModelConfig desk_model_config(int stack_count) {
    ModelConfig cfg;
    cfg.backbone = backbone_tiny();
    cfg.dom.width = 16;
    cfg.scs.stack_count = stack_count;
    cfg.scs.r_schedule = default_r_schedule(stack_count);
    return cfg;
}

ModelState build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState state;
    state.config = cfg;
    state.seed = seed;
    std::mt19937_64 rng(seed);
    state.backbone = init_backbone(state.params, cfg.backbone, rng, "backbone");
    for (int i = 0; i < cfg.scs.stack_count; ++i)
        state.mrems.push_back(init_mrem(state.params, cfg.backbone.pyramid_channels, rng,
                                        "scs" + std::to_string(i) + ".mrem"));
    if (cfg.scs.shared_dom) {
        state.doms.push_back(init_dom(state.params, cfg.dom, rng, "dom"));
    } else {
        for (int i = 0; i < cfg.scs.stack_count; ++i)
            state.doms.push_back(init_dom(state.params, cfg.dom, rng, "scs" + std::to_string(i) + ".dom"));
    }
    return state;
}

bool verify_weight_sharing(const ModelState& state) {
    if (!state.config.scs.shared_dom) return state.config.scs.stack_count <= 1;
    const DomHandles& first = state.doms.front();
    for (int i = 0; i < state.config.scs.stack_count; ++i) {
        const DomHandles& h = state.dom_for_scs(i);
        // identity of the parameter set, not merely equal values
        if (h.d1.w != first.d1.w || h.d6.w != first.d6.w || h.img1.w != first.img1.w) return false;
    }
    return true;
}

std::pair<Graph::Var, std::array<Graph::Var, 3>> scs_forward(Binder& b, const PyramidVars& left,
                                                             const PyramidVars& right, Graph::Var temporal_context,
                                                             Graph::Var prev_frame_disparity, Graph::Var left_image,
                                                             int scs_index, const ModelState& state) {
    const ScsConfig& scs = state.config.scs;
    if (scs_index < 0 || scs_index >= scs.stack_count) throw ConfigError("scs index out of range");
    const RScheduleEntry& ranges = scs.r_schedule.per_scs[static_cast<size_t>(scs_index)];
    MremResult m = mrem_forward(b, left, right, temporal_context, prev_frame_disparity, ranges,
                                state.mrems[static_cast<size_t>(scs_index)], scs.use_temporal_attention);
    Graph::Var refined = m.disparity;
    if (scs.use_dom) refined = dom_forward(b, refined, left_image, state.dom_for_scs(scs_index));
    return {refined, {m.branch_small, m.branch_medium, m.branch_large}};
}

FrameGraphResult run_frame_graph(Binder& b, Graph::Var left_image, Graph::Var right_image,
                                 Graph::Var prev_disparity, const ModelState& state) {
    Graph& g = b.graph();
    PyramidVars pl = backbone_forward(b, left_image, state.backbone);
    PyramidVars pr = backbone_forward(b, right_image, state.backbone);
    FrameGraphResult out;
    Graph::Var context = prev_disparity;
    for (int i = 0; i < state.config.scs.stack_count; ++i) {
        auto [refined, branches] = scs_forward(b, pl, pr, context, prev_disparity, left_image, i, state);
        out.per_scs_disparities.push_back(refined);
        out.per_scs_branches.push_back(branches);
        context = refined;
    }
    out.final_disparity = out.per_scs_disparities.back();
    (void)g;
    return out;
}

FrameResult run_frame(const StereoFrame& frame, const DisparityMap& prev_disparity, ModelState& state) {
    frame.validate();
    if (prev_disparity.scale_stride != 1) throw ShapeError("run_frame: prev disparity must be at stride 1");
    if (prev_disparity.values.dim(0) != frame.height() || prev_disparity.values.dim(1) != frame.width())
        throw ShapeError("run_frame: prev disparity size mismatch");
    Graph g;
    Binder b(g, state.params);
    FrameGraphResult r =
        run_frame_graph(b, g.input(frame.left), g.input(frame.right), g.input(prev_disparity.values), state);
    FrameResult out;
    out.final_disparity = DisparityMap{g.val(r.final_disparity), 1};
    if (!out.final_disparity.values.all_finite()) throw NumericError("run_frame: non-finite disparity");
    for (size_t i = 0; i < r.per_scs_disparities.size(); ++i) {
        out.per_scs_disparities.push_back(DisparityMap{g.val(r.per_scs_disparities[i]), 1});
        out.per_scs_branch_disparities.push_back(BranchTriple{g.val(r.per_scs_branches[i][0]),
                                                              g.val(r.per_scs_branches[i][1]),
                                                              g.val(r.per_scs_branches[i][2])});
    }
    out.residual_sum = Tensor(out.final_disparity.values.shape());
    for (std::int64_t i = 0; i < out.residual_sum.size(); ++i)
        out.residual_sum[i] = out.final_disparity.values[i] - prev_disparity.values[i];
    return out;
}

std::vector<FrameResult> run_sequence(const std::vector<StereoFrame>& frames, const DisparityMap& d0,
                                      ModelState& state) {
    if (frames.empty()) throw ConfigError("run_sequence: empty sequence");
    std::vector<FrameResult> results;
    DisparityMap prev = d0;
    for (const auto& frame : frames) {
        results.push_back(run_frame(frame, prev, state));
        prev = results.back().final_disparity;
    }
    return results;
}

}  // namespace recsm
