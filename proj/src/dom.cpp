#include "recsm/dom.hpp"

namespace recsm {

DomHandles init_dom(ParamStore& store, const DomConfig& cfg, std::mt19937_64& rng, const std::string& prefix) {
    cfg.validate();
    const int w = cfg.width;
    DomHandles h;
    h.img1 = init_conv2d(store, rng, prefix + ".img1", w, 3, 3, 1, 1);
    h.img2 = init_conv2d(store, rng, prefix + ".img2", w, w, 3, 1, 1);
    h.d1 = init_conv2d(store, rng, prefix + ".d1", w, w + 1, 3, 1, 1, 1);
    h.d2 = init_conv2d(store, rng, prefix + ".d2", w, w, 3, 1, 2, 2);
    h.d3 = init_conv2d(store, rng, prefix + ".d3", w, w, 3, 1, 4, 4);
    h.d4 = init_conv2d(store, rng, prefix + ".d4", w, w, 3, 1, 8, 8);
    h.d5 = init_conv2d(store, rng, prefix + ".d5", w, w, 3, 1, 1, 1);
    h.d6 = init_conv2d(store, rng, prefix + ".d6", 1, w, 3, 1, 1, 1, /*zero_init=*/true);
    return h;
}

Graph::Var dom_forward(Binder& b, Graph::Var disparity_s1, Graph::Var left_image, const DomHandles& h) {
    Graph& g = b.graph();
    // copy the dims: val() references are invalidated by later node pushes
    const Tensor& d = g.val(disparity_s1);
    const Tensor& img = g.val(left_image);
    if (d.rank() != 2) throw ShapeError("dom: disparity must be [H,W]");
    if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) != d.dim(0) || img.dim(2) != d.dim(1))
        throw ShapeError("dom: image must be [3,H,W] matching the disparity");
    const int H = d.dim(0), W = d.dim(1);

    Graph::Var feats = g.relu(apply_conv2d(b, left_image, h.img1));
    feats = g.relu(apply_conv2d(b, feats, h.img2));
    Graph::Var x = g.concat_c(g.reshape(disparity_s1, {1, H, W}), feats);
    x = g.relu(apply_conv2d(b, x, h.d1));
    x = g.relu(apply_conv2d(b, x, h.d2));
    x = g.relu(apply_conv2d(b, x, h.d3));
    x = g.relu(apply_conv2d(b, x, h.d4));
    x = g.relu(apply_conv2d(b, x, h.d5));
    Graph::Var correction = g.reshape(apply_conv2d(b, x, h.d6), {H, W});
    return g.clamp_min0(g.add(disparity_s1, correction));
}

}  // namespace recsm
