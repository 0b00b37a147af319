#pragma once

#include <array>
#include <vector>

#include "recsm/graph.hpp"
#include "recsm/tensor.hpp"

namespace recsm {

// One rectified frame pair. Intensities in [0,1]; standardization happens
// inside the backbone.
struct StereoFrame {
    Tensor left;   // [3,H,W]
    Tensor right;  // [3,H,W]
    int frame_index = 0;

    void validate(int coarsest_stride = 16) const;
    int height() const { return left.dim(1); }
    int width() const { return left.dim(2); }
};

// Per-pixel horizontal offset field in the left-image frame, expressed in
// the pixel units of its own scale (stride 1 = full resolution).
struct DisparityMap {
    Tensor values;  // [H,W]
    int scale_stride = 1;

    static DisparityMap constant(int h, int w, double v, int stride = 1);
};

struct ResidualMap {
    Tensor values;  // [H_s,W_s]
    int range_r = 1;

    void check_bound(double tol = 1e-9) const;
};

struct FeaturePyramid {
    Tensor small;   // [C_s, H/16, W/16]
    Tensor medium;  // [C_m, H/8,  W/8]
    Tensor large;   // [C_l, H/4,  W/4]
};

// Per-SCS residual search ranges, one (large, medium, small) triple per SCS.
struct RScheduleEntry {
    int large = 0;
    int medium = 0;
    int small = 0;
};

struct RSchedule {
    std::vector<RScheduleEntry> per_scs;

    void validate() const;
};

struct ScsConfig {
    int stack_count = 3;  // K
    RSchedule r_schedule;
    bool use_temporal_attention = true;
    bool use_dom = true;
    bool shared_dom = true;

    void validate() const;
};

struct LossWeights {
    double w_small = 0.5;
    double w_medium = 0.7;
    double w_large = 0.9;
    std::vector<double> scs_lambdas;  // defaults to all 1.0 of length K

    void validate() const;
};

// Resamples a disparity map to a new stride and rescales its values by
// old_stride/new_stride so they stay in the target scale's pixel units.
// Bilinear when upsampling, area average when downsampling.
DisparityMap convert_disparity_stride(const DisparityMap& d, int new_stride);

// Differentiable counterpart used inside the network graph.
Graph::Var convert_disparity_var(Graph& g, Graph::Var d, int from_stride, int to_stride);

}  // namespace recsm
