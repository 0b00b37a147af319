#include "recsm/datamodel.hpp"

#include <cmath>

namespace recsm {

void StereoFrame::validate(int coarsest_stride) const {
    if (left.rank() != 3 || left.dim(0) != 3) throw ShapeError("frame: left must be [3,H,W]");
    if (!left.same_shape(right)) throw ShapeError("frame: left/right shape mismatch");
    if (frame_index < 0) throw ConfigError("frame: negative frame index");
    if (left.dim(1) % coarsest_stride != 0 || left.dim(2) % coarsest_stride != 0)
        throw ShapeError("frame: H and W must be divisible by the coarsest stride");
}

DisparityMap DisparityMap::constant(int h, int w, double v, int stride) {
    return DisparityMap{Tensor::full({h, w}, v), stride};
}

void ResidualMap::check_bound(double tol) const {
    for (std::int64_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (!std::isfinite(v) || v < -range_r - tol || v > range_r + tol)
            throw NumericError("residual map value outside [-R, R]");
    }
}

void RSchedule::validate() const {
    const RScheduleEntry* prev = nullptr;
    for (const auto& e : per_scs) {
        if (e.large < 1 || e.medium < 1 || e.small < 1) throw ConfigError("R schedule entries must be positive");
        if (!(e.large >= e.medium && e.medium >= e.small))
            throw ConfigError("R schedule must satisfy R_large >= R_medium >= R_small");
        if (prev && (e.large > prev->large || e.medium > prev->medium || e.small > prev->small))
            throw ConfigError("R schedule must be non-increasing across SCS index");
        prev = &e;
    }
}

void ScsConfig::validate() const {
    if (stack_count < 1) throw ConfigError("K must be >= 1");
    if (static_cast<int>(r_schedule.per_scs.size()) != stack_count)
        throw ConfigError("R schedule length must equal K");
    r_schedule.validate();
}

void LossWeights::validate() const {
    for (double l : scs_lambdas)
        if (l <= 0.0) throw ConfigError("SCS loss weights must be positive");
}

Graph::Var convert_disparity_var(Graph& g, Graph::Var d, int from_stride, int to_stride) {
    if (from_stride < 1 || to_stride < 1) throw ConfigError("strides must be positive");
    if (from_stride == to_stride) return d;
    const Tensor& v = g.val(d);
    if (v.rank() != 2) throw ShapeError("disparity must be [H,W]");
    if (from_stride % to_stride == 0) {
        const int f = from_stride / to_stride;
        Graph::Var up = g.upsample_bilinear(d, v.dim(0) * f, v.dim(1) * f);
        return g.scale(up, static_cast<double>(f));
    }
    if (to_stride % from_stride == 0) {
        const int f = to_stride / from_stride;
        if (v.dim(0) % f != 0 || v.dim(1) % f != 0)
            throw ShapeError("stride conversion target size is not integral");
        Graph::Var dn = g.downsample_area(d, f);
        return g.scale(dn, 1.0 / f);
    }
    throw ShapeError("strides must be integer multiples of each other");
}

DisparityMap convert_disparity_stride(const DisparityMap& d, int new_stride) {
    Graph g;
    Graph::Var v = g.input(d.values);
    Graph::Var out = convert_disparity_var(g, v, d.scale_stride, new_stride);
    return DisparityMap{g.val(out), new_stride};
}

}  // namespace recsm
