#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recsm/dom.hpp"
#include "recsm/mrem.hpp"

namespace recsm {

struct ModelConfig {
    BackboneConfig backbone;
    DomConfig dom;
    ScsConfig scs;

    void validate() const;
};

// Backbone + per-SCS MREM parameters + DOM parameters (one set when
// shared). All parameters live in one store; handles carry ids.
struct ModelState {
    ModelConfig config;
    ParamStore params;
    BackboneHandles backbone;
    std::vector<MremHandles> mrems;
    std::vector<DomHandles> doms;  // size 1 when shared_dom, else K
    std::uint64_t seed = 0;

    const DomHandles& dom_for_scs(int i) const {
        return config.scs.shared_dom ? doms.front() : doms[static_cast<size_t>(i)];
    }
};

struct BranchTriple {
    Tensor small, medium, large;  // stride 1
};

struct FrameResult {
    DisparityMap final_disparity;
    std::vector<DisparityMap> per_scs_disparities;
    std::vector<BranchTriple> per_scs_branch_disparities;
    Tensor residual_sum;  // final - prev, diagnostics
};

// Graph-side result used by the training loss.
struct FrameGraphResult {
    Graph::Var final_disparity = -1;
    std::vector<Graph::Var> per_scs_disparities;
    std::vector<std::array<Graph::Var, 3>> per_scs_branches;  // s, m, l
};

// SCS1 = (16,8,4); each later SCS halves every range with floor 1.
RSchedule default_r_schedule(int stack_count);

ModelConfig desk_model_config(int stack_count = 3);
ModelState build_model(const ModelConfig& cfg, std::uint64_t seed);

// true iff every SCS resolves to the identical DOM parameter set.
bool verify_weight_sharing(const ModelState& state);

// One SCS: MREM with the given temporal context, then DOM when enabled.
// Attention always derives from the previous frame's disparity.
std::pair<Graph::Var, std::array<Graph::Var, 3>> scs_forward(Binder& b, const PyramidVars& left,
                                                             const PyramidVars& right, Graph::Var temporal_context,
                                                             Graph::Var prev_frame_disparity, Graph::Var left_image,
                                                             int scs_index, const ModelState& state);

FrameGraphResult run_frame_graph(Binder& b, Graph::Var left_image, Graph::Var right_image,
                                 Graph::Var prev_disparity, const ModelState& state);

FrameResult run_frame(const StereoFrame& frame, const DisparityMap& prev_disparity, ModelState& state);

std::vector<FrameResult> run_sequence(const std::vector<StereoFrame>& frames, const DisparityMap& d0,
                                      ModelState& state);

}  // namespace recsm
