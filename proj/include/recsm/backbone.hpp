#pragma once

#include <random>

#include "recsm/datamodel.hpp"
#include "recsm/params.hpp"

namespace recsm {

struct BackboneConfig {
    int base_channels = 16;
    int pyramid_channels = 32;  // C_s = C_m = C_l

    void validate() const;
};

// "paper-width" preset: ResNet50-like channel counts; only a config point.
BackboneConfig backbone_paper_width();
// desk-scale preset used by tests and the acceptance suite
BackboneConfig backbone_tiny();

struct Conv2dHandle {
    int w = -1;
    int b = -1;
    int stride = 1;
    int pad = 1;
    int dilation = 1;
};

struct ResBlockHandle {
    Conv2dHandle c1, c2;
};

struct StageHandle {
    Conv2dHandle down;  // stride-2 entry convolution
    ResBlockHandle b1, b2;
};

// Narrow residual encoder (strides 2/4/8/16) with an additive top-down FPN
// producing the three pyramid levels at strides 16/8/4.
struct BackboneHandles {
    StageHandle stage[4];
    Conv2dHandle lat4, lat8, lat16;        // 1x1 lateral projections
    Conv2dHandle smooth4, smooth8, smooth16;
};

struct PyramidVars {
    Graph::Var small = -1;   // stride 16
    Graph::Var medium = -1;  // stride 8
    Graph::Var large = -1;   // stride 4
};

BackboneHandles init_backbone(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng,
                              const std::string& prefix);

// Graph-building forward; image is a [3,H,W] leaf with H, W divisible by 16.
PyramidVars backbone_forward(Binder& b, Graph::Var image, const BackboneHandles& h);

// Convenience wrapper for inference and tests.
FeaturePyramid extract_pyramid(const Tensor& image, ParamStore& store, const BackboneHandles& h);

// Helpers shared by the other network modules.
Conv2dHandle init_conv2d(ParamStore& store, std::mt19937_64& rng, const std::string& name, int out_c, int in_c,
                         int k, int stride, int pad, int dilation = 1, bool zero_init = false);
Graph::Var apply_conv2d(Binder& b, Graph::Var x, const Conv2dHandle& h);

}  // namespace recsm
