#include "recsm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace recsm {

Tensor valid_mask_from_gt(const Tensor& gt, double max_disparity) {
    Tensor mask(gt.shape());
    for (std::int64_t i = 0; i < gt.size(); ++i) mask[i] = (gt[i] > 0.0 && gt[i] < max_disparity) ? 1.0 : 0.0;
    return mask;
}

namespace {

void check_metric_inputs(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        throw ShapeError("metrics: pred, gt and mask shapes must agree");
}

}  // namespace

double epe(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_metric_inputs(pred, gt, mask);
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        if (mask[i] <= 0.0) continue;
        sum += std::fabs(pred[i] - gt[i]);
        ++n;
    }
    if (n == 0) throw NumericError("epe: undefined on an empty mask");
    return sum / static_cast<double>(n);
}

double d1_all(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_metric_inputs(pred, gt, mask);
    std::int64_t n = 0, bad = 0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        if (mask[i] <= 0.0) continue;
        const double e = std::fabs(pred[i] - gt[i]);
        if (e > 3.0 && e > 0.05 * gt[i]) ++bad;
        ++n;
    }
    if (n == 0) throw NumericError("d1_all: undefined on an empty mask");
    return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

std::int64_t count_params(const ModelState& state) { return state.params.scalar_count(); }

std::int64_t conv2d_macs(int in_c, int out_c, int k, int out_h, int out_w) {
    return static_cast<std::int64_t>(k) * k * in_c * out_c * out_h * out_w;
}

namespace {

std::int64_t conv3d_macs(int in_c, int out_c, int d, int h, int w) {
    return static_cast<std::int64_t>(27) * in_c * out_c * d * h * w;
}

std::int64_t agg_stack_macs(int cv, int range_r, int h, int w) {
    const int c1 = std::max(1, cv / 2);
    const int c2 = std::max(1, cv / 4);
    const int d = 2 * range_r + 1;
    return conv3d_macs(cv, c1, d, h, w) + conv3d_macs(c1, c1, d, h, w) + conv3d_macs(c1, c2, d, h, w) +
           conv3d_macs(c2, 1, d, h, w);
}

}  // namespace

std::int64_t estimate_macs(const ModelState& state, int H, int W) {
    const ModelConfig& cfg = state.config;
    const int c = cfg.backbone.base_channels;
    const int p = cfg.backbone.pyramid_channels;
    const int widths[5] = {3, c, 2 * c, 4 * c, 8 * c};

    std::int64_t backbone = 0;
    for (int s = 0; s < 4; ++s) {
        const int h = H >> (s + 1), w = W >> (s + 1);
        backbone += conv2d_macs(widths[s], widths[s + 1], 3, h, w);       // down
        backbone += 4 * conv2d_macs(widths[s + 1], widths[s + 1], 3, h, w);  // two res blocks
    }
    const int h4 = H / 4, w4 = W / 4, h8 = H / 8, w8 = W / 8, h16 = H / 16, w16 = W / 16;
    backbone += conv2d_macs(widths[2], p, 1, h4, w4) + conv2d_macs(widths[3], p, 1, h8, w8) +
                conv2d_macs(widths[4], p, 1, h16, w16);
    backbone += conv2d_macs(p, p, 3, h4, w4) + conv2d_macs(p, p, 3, h8, w8) + conv2d_macs(p, p, 3, h16, w16);
    std::int64_t total = 2 * backbone;  // left and right pass

    const int cv = 2 * p;
    for (const RScheduleEntry& r : cfg.scs.r_schedule.per_scs) {
        total += agg_stack_macs(cv, r.small, h16, w16);
        total += agg_stack_macs(cv, r.medium, h8, w8);
        total += agg_stack_macs(cv, r.large, h4, w4);
        if (cfg.scs.use_temporal_attention) {
            total += 2 * conv2d_macs(1, 1, 3, h4, w4);  // fixed Sobel pair
            total += conv2d_macs(1, 1, 3, h4, w4);
        }
        if (cfg.scs.use_dom) {
            const int dw = cfg.dom.width;
            total += conv2d_macs(3, dw, 3, H, W) + conv2d_macs(dw, dw, 3, H, W);
            total += conv2d_macs(dw + 1, dw, 3, H, W) + 4 * conv2d_macs(dw, dw, 3, H, W);
            total += conv2d_macs(dw, 1, 3, H, W);
        }
    }
    return total;
}

EvalReport evaluate_sequence(const std::vector<StereoFrame>& frames, const std::vector<Tensor>& gts,
                             const DisparityMap& d0, ModelState& state) {
    if (frames.size() != gts.size()) throw ConfigError("evaluate_sequence: frame/gt count mismatch");
    if (frames.empty()) throw ConfigError("evaluate_sequence: empty sequence");
    EvalReport report;
    DisparityMap prev = d0;
    std::vector<double> seconds;
    for (size_t n = 0; n < frames.size(); ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        FrameResult r = run_frame(frames[n], prev, state);
        const auto t1 = std::chrono::steady_clock::now();
        prev = r.final_disparity;
        const Tensor mask = valid_mask_from_gt(gts[n]);
        FrameMetrics m;
        m.frame_index = frames[n].frame_index;
        m.epe = epe(r.final_disparity.values, gts[n], mask);
        m.d1_all = d1_all(r.final_disparity.values, gts[n], mask);
        m.seconds = std::chrono::duration<double>(t1 - t0).count();
        seconds.push_back(m.seconds);
        report.frames.push_back(m);
    }
    for (const FrameMetrics& m : report.frames) {
        report.mean_epe += m.epe;
        report.mean_d1_all += m.d1_all;
    }
    report.mean_epe /= static_cast<double>(report.frames.size());
    report.mean_d1_all /= static_cast<double>(report.frames.size());
    std::sort(seconds.begin(), seconds.end());
    report.median_seconds = seconds[seconds.size() / 2];
    report.stack_count = state.config.scs.stack_count;
    report.r_schedule = state.config.scs.r_schedule;
    report.param_count = count_params(state);
    report.mac_estimate = estimate_macs(state, frames.front().height(), frames.front().width());
    return report;
}

}  // namespace recsm
