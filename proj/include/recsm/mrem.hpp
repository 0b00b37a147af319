#pragma once

#include <random>

#include "recsm/backbone.hpp"

namespace recsm {

struct Conv3dHandle {
    int w = -1;
    int b = -1;
    int pad = 1;
};

// Aggregation: four 3x3x3 convolutions, channels 2C -> C -> C -> C/2 -> 1,
// ReLU between, reducing the concatenation volume to one score per offset.
struct AggStackHandle {
    Conv3dHandle c1, c2, c3, c4;
};

struct MremHandles {
    AggStackHandle small, medium, large;
    Conv2dHandle attention;  // learned 3x3 conv after the fixed Sobel edges
};

struct MremResult {
    Graph::Var disparity = -1;  // stride 1
    Graph::Var branch_small = -1, branch_medium = -1, branch_large = -1;  // stride 1
    Graph::Var residual_small = -1, residual_medium = -1, residual_large = -1;  // own scales
};

MremHandles init_mrem(ParamStore& store, int pyramid_channels, std::mt19937_64& rng, const std::string& prefix);

// Temporal attention weights at stride 4 from the previous frame's
// disparity edges; values strictly in (0,1).
Graph::Var compute_temporal_attention(Binder& b, Graph::Var prev_disparity_s4, const Conv2dHandle& attention);

// One MREM pass: coarse-to-fine residual estimation over the three pyramid
// scales, attention fused into the large-scale cost volume.
MremResult mrem_forward(Binder& b, const PyramidVars& left, const PyramidVars& right, Graph::Var prior_s1,
                        Graph::Var prev_disparity_s1, const RScheduleEntry& ranges, const MremHandles& h,
                        bool use_temporal_attention);

// Aggregates a [C_v, 2R+1, H, W] cost volume to per-offset scores.
Graph::Var aggregate_costs(Binder& b, Graph::Var volume, const AggStackHandle& h);

}  // namespace recsm
