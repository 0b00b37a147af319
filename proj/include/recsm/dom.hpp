#pragma once

#include <random>

#include "recsm/backbone.hpp"

namespace recsm {

struct DomConfig {
    int width = 32;

    void validate() const {
        if (width < 1) throw ConfigError("dom: width must be positive");
    }
};

// Dilated-convolution refinement head. The final layer is zero-initialized
// so a fresh DOM is the identity refinement (up to the >= 0 clamp).
struct DomHandles {
    Conv2dHandle img1, img2;                  // image feature branch, stride 1
    Conv2dHandle d1, d2, d3, d4, d5, d6;      // dilations 1,2,4,8,1,1
};

DomHandles init_dom(ParamStore& store, const DomConfig& cfg, std::mt19937_64& rng, const std::string& prefix);

// disparity and image at stride 1; returns max(disparity + correction, 0).
Graph::Var dom_forward(Binder& b, Graph::Var disparity_s1, Graph::Var left_image, const DomHandles& h);

}  // namespace recsm
