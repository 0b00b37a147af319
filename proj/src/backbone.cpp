#include "recsm/backbone.hpp"

namespace recsm {

void BackboneConfig::validate() const {
    if (base_channels < 1 || pyramid_channels < 1) throw ConfigError("backbone channels must be positive");
}

BackboneConfig backbone_paper_width() { return BackboneConfig{64, 256}; }
BackboneConfig backbone_tiny() { return BackboneConfig{8, 16}; }

Conv2dHandle init_conv2d(ParamStore& store, std::mt19937_64& rng, const std::string& name, int out_c, int in_c,
                         int k, int stride, int pad, int dilation, bool zero_init) {
    Conv2dHandle h;
    h.stride = stride;
    h.pad = pad;
    h.dilation = dilation;
    Tensor w = zero_init ? Tensor::zeros({out_c, in_c, k, k})
                         : he_normal(rng, {out_c, in_c, k, k}, in_c * k * k);
    h.w = store.add(name + ".w", std::move(w));
    h.b = store.add(name + ".b", Tensor::zeros({out_c}));
    return h;
}

Graph::Var apply_conv2d(Binder& b, Graph::Var x, const Conv2dHandle& h) {
    return b.graph().conv2d(x, b(h.w), b(h.b), h.stride, h.pad, h.dilation);
}

namespace {

ResBlockHandle init_res_block(ParamStore& store, std::mt19937_64& rng, const std::string& name, int c) {
    ResBlockHandle h;
    h.c1 = init_conv2d(store, rng, name + ".c1", c, c, 3, 1, 1);
    h.c2 = init_conv2d(store, rng, name + ".c2", c, c, 3, 1, 1);
    return h;
}

Graph::Var apply_res_block(Binder& b, Graph::Var x, const ResBlockHandle& h) {
    Graph& g = b.graph();
    Graph::Var y = g.relu(apply_conv2d(b, x, h.c1));
    y = apply_conv2d(b, y, h.c2);
    return g.relu(g.add(x, y));
}

}  // namespace

BackboneHandles init_backbone(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng,
                              const std::string& prefix) {
    cfg.validate();
    BackboneHandles h;
    const int c = cfg.base_channels;
    const int widths[4] = {c, 2 * c, 4 * c, 8 * c};
    int in_c = 3;
    for (int s = 0; s < 4; ++s) {
        const std::string sname = prefix + ".stage" + std::to_string(s);
        h.stage[s].down = init_conv2d(store, rng, sname + ".down", widths[s], in_c, 3, 2, 1);
        h.stage[s].b1 = init_res_block(store, rng, sname + ".b1", widths[s]);
        h.stage[s].b2 = init_res_block(store, rng, sname + ".b2", widths[s]);
        in_c = widths[s];
    }
    const int p = cfg.pyramid_channels;
    h.lat4 = init_conv2d(store, rng, prefix + ".lat4", p, widths[1], 1, 1, 0);
    h.lat8 = init_conv2d(store, rng, prefix + ".lat8", p, widths[2], 1, 1, 0);
    h.lat16 = init_conv2d(store, rng, prefix + ".lat16", p, widths[3], 1, 1, 0);
    h.smooth4 = init_conv2d(store, rng, prefix + ".smooth4", p, p, 3, 1, 1);
    h.smooth8 = init_conv2d(store, rng, prefix + ".smooth8", p, p, 3, 1, 1);
    h.smooth16 = init_conv2d(store, rng, prefix + ".smooth16", p, p, 3, 1, 1);
    return h;
}

PyramidVars backbone_forward(Binder& b, Graph::Var image, const BackboneHandles& h) {
    Graph& g = b.graph();
    const Tensor& img = g.val(image);
    if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("backbone: image must be [3,H,W]");
    if (img.dim(1) % 16 != 0 || img.dim(2) % 16 != 0)
        throw ShapeError("backbone: H and W must be divisible by 16");
    // fixed per-channel standardization: mean 0.5, std 0.5
    Graph::Var x = g.affine(image, 2.0, -1.0);
    Graph::Var feats[4];
    for (int s = 0; s < 4; ++s) {
        x = g.relu(apply_conv2d(b, x, h.stage[s].down));
        x = apply_res_block(b, x, h.stage[s].b1);
        x = apply_res_block(b, x, h.stage[s].b2);
        feats[s] = x;
    }
    Graph::Var p16 = apply_conv2d(b, feats[3], h.lat16);
    const Tensor& t8 = g.val(feats[2]);
    Graph::Var p8 = g.add(apply_conv2d(b, feats[2], h.lat8), g.upsample_bilinear(p16, t8.dim(1), t8.dim(2)));
    const Tensor& t4 = g.val(feats[1]);
    Graph::Var p4 = g.add(apply_conv2d(b, feats[1], h.lat4), g.upsample_bilinear(p8, t4.dim(1), t4.dim(2)));
    PyramidVars out;
    out.small = apply_conv2d(b, p16, h.smooth16);
    out.medium = apply_conv2d(b, p8, h.smooth8);
    out.large = apply_conv2d(b, p4, h.smooth4);
    return out;
}

FeaturePyramid extract_pyramid(const Tensor& image, ParamStore& store, const BackboneHandles& h) {
    Graph g;
    Binder b(g, store);
    PyramidVars v = backbone_forward(b, g.input(image), h);
    return FeaturePyramid{g.val(v.small), g.val(v.medium), g.val(v.large)};
}

}  // namespace recsm
