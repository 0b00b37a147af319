#include "recsm/mrem.hpp"

namespace recsm {

namespace {

Conv3dHandle init_conv3d(ParamStore& store, std::mt19937_64& rng, const std::string& name, int out_c, int in_c) {
    Conv3dHandle h;
    h.w = store.add(name + ".w", he_normal(rng, {out_c, in_c, 3, 3, 3}, in_c * 27));
    h.b = store.add(name + ".b", Tensor::zeros({out_c}));
    return h;
}

Graph::Var apply_conv3d(Binder& b, Graph::Var x, const Conv3dHandle& h) {
    return b.graph().conv3d(x, b(h.w), b(h.b), h.pad);
}

AggStackHandle init_agg(ParamStore& store, std::mt19937_64& rng, const std::string& name, int cv) {
    AggStackHandle h;
    const int c1 = std::max(1, cv / 2);
    const int c2 = std::max(1, cv / 4);
    h.c1 = init_conv3d(store, rng, name + ".c1", c1, cv);
    h.c2 = init_conv3d(store, rng, name + ".c2", c1, c1);
    h.c3 = init_conv3d(store, rng, name + ".c3", c2, c1);
    h.c4 = init_conv3d(store, rng, name + ".c4", 1, c2);
    return h;
}

struct BranchOut {
    Graph::Var disparity;  // at the branch's own stride
    Graph::Var residual;
};

// Residual estimation at one scale: cost volume around the prior,
// aggregation, soft-argmin, add.
BranchOut branch_forward(Binder& b, Graph::Var left, Graph::Var right, Graph::Var prior, int range_r,
                         const AggStackHandle& agg, Graph::Var attention /* -1 when unused */) {
    Graph& g = b.graph();
    Graph::Var vol = g.residual_cost_volume(left, right, prior, range_r);
    if (attention >= 0) vol = g.mul_hw(vol, attention);
    Graph::Var scores = aggregate_costs(b, vol, agg);
    Graph::Var eps = g.soft_argmin(scores, range_r);
    ResidualMap{g.val(eps), range_r}.check_bound();
    return BranchOut{g.add(prior, eps), eps};
}

}  // namespace

MremHandles init_mrem(ParamStore& store, int pyramid_channels, std::mt19937_64& rng, const std::string& prefix) {
    MremHandles h;
    const int cv = 2 * pyramid_channels;
    h.small = init_agg(store, rng, prefix + ".agg_s", cv);
    h.medium = init_agg(store, rng, prefix + ".agg_m", cv);
    h.large = init_agg(store, rng, prefix + ".agg_l", cv);
    // zero init: attention starts flat at sigmoid(0) = 0.5
    h.attention = init_conv2d(store, rng, prefix + ".attention", 1, 1, 3, 1, 1, 1, /*zero_init=*/true);
    return h;
}

Graph::Var aggregate_costs(Binder& b, Graph::Var volume, const AggStackHandle& h) {
    Graph& g = b.graph();
    Graph::Var x = g.relu(apply_conv3d(b, volume, h.c1));
    x = g.relu(apply_conv3d(b, x, h.c2));
    x = g.relu(apply_conv3d(b, x, h.c3));
    x = apply_conv3d(b, x, h.c4);
    const Tensor& t = g.val(x);
    return g.reshape(x, {t.dim(1), t.dim(2), t.dim(3)});
}

Graph::Var compute_temporal_attention(Binder& b, Graph::Var prev_disparity_s4, const Conv2dHandle& attention) {
    Graph& g = b.graph();
    Graph::Var edges = g.sobel_magnitude(prev_disparity_s4);
    // copy the dims: val() references are invalidated by later node pushes
    const int H = g.val(edges).dim(0), W = g.val(edges).dim(1);
    Graph::Var x = g.reshape(edges, {1, H, W});
    x = apply_conv2d(b, x, attention);
    x = g.sigmoid(x);
    return g.reshape(x, {H, W});
}

MremResult mrem_forward(Binder& b, const PyramidVars& left, const PyramidVars& right, Graph::Var prior_s1,
                        Graph::Var prev_disparity_s1, const RScheduleEntry& ranges, const MremHandles& h,
                        bool use_temporal_attention) {
    Graph& g = b.graph();
    if (ranges.large < 1 || ranges.medium < 1 || ranges.small < 1)
        throw ConfigError("mrem: residual ranges must be positive");
    const Tensor& prior_t = g.val(prior_s1);
    if (prior_t.rank() != 2) throw ShapeError("mrem: prior disparity must be [H,W] at stride 1");
    const int H = prior_t.dim(0), W = prior_t.dim(1);

    // small branch (stride 16)
    Graph::Var prior16 = convert_disparity_var(g, prior_s1, 1, 16);
    BranchOut small = branch_forward(b, left.small, right.small, prior16, ranges.small, h.small, -1);

    // medium branch (stride 8), prior from the small result
    Graph::Var prior8 = convert_disparity_var(g, small.disparity, 16, 8);
    BranchOut medium = branch_forward(b, left.medium, right.medium, prior8, ranges.medium, h.medium, -1);

    // large branch (stride 4) with temporal attention from the previous
    // frame's disparity edges
    Graph::Var prior4 = convert_disparity_var(g, medium.disparity, 8, 4);
    Graph::Var attention = -1;
    if (use_temporal_attention) {
        Graph::Var prev4 = convert_disparity_var(g, prev_disparity_s1, 1, 4);
        attention = compute_temporal_attention(b, prev4, h.attention);
    }
    BranchOut large = branch_forward(b, left.large, right.large, prior4, ranges.large, h.large, attention);

    MremResult out;
    out.residual_small = small.residual;
    out.residual_medium = medium.residual;
    out.residual_large = large.residual;
    out.branch_small = g.upsample_bilinear(g.scale(small.disparity, 16.0), H, W);
    out.branch_medium = g.upsample_bilinear(g.scale(medium.disparity, 8.0), H, W);
    out.branch_large = g.upsample_bilinear(g.scale(large.disparity, 4.0), H, W);
    out.disparity = out.branch_large;
    return out;
}

}  // namespace recsm
