#pragma once

#include <cstdint>
#include <vector>

#include "recsm/pipeline.hpp"

namespace recsm {

// KITTI-style validity: gt strictly inside (0, max_disparity).
Tensor valid_mask_from_gt(const Tensor& gt, double max_disparity = 192.0);

// Mean |pred - gt| over mask > 0. Throws NumericError on an empty mask.
double epe(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Percentage of valid pixels with |e| > 3 px and |e| > 5% of gt.
double d1_all(const Tensor& pred, const Tensor& gt, const Tensor& mask);

std::int64_t count_params(const ModelState& state);

// MACs of one k x k convolution producing out_c x out_h x out_w from in_c.
std::int64_t conv2d_macs(int in_c, int out_c, int k, int out_h, int out_w);

// Multiply-accumulate estimate of one frame pass at H x W: both backbone
// passes, every SCS's aggregation stacks, attention and DOM. Resampling and
// warping are not counted.
std::int64_t estimate_macs(const ModelState& state, int H, int W);

struct FrameMetrics {
    int frame_index = 0;
    double epe = 0.0;
    double d1_all = 0.0;
    double seconds = 0.0;
};

struct EvalReport {
    std::vector<FrameMetrics> frames;
    double mean_epe = 0.0;
    double mean_d1_all = 0.0;
    double median_seconds = 0.0;
    int stack_count = 0;
    RSchedule r_schedule;
    std::int64_t param_count = 0;
    std::int64_t mac_estimate = 0;
};

// Runs the sequence with d0 as the bootstrap prior and scores every frame
// against its ground truth (invalid gt pixels excluded).
EvalReport evaluate_sequence(const std::vector<StereoFrame>& frames, const std::vector<Tensor>& gts,
                             const DisparityMap& d0, ModelState& state);

}  // namespace recsm
