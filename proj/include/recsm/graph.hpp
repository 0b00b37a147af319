#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "recsm/tensor.hpp"

namespace recsm {

// Reverse-mode tape over dense double tensors. One Graph is built per
// forward pass and discarded afterwards; parameters enter as leaves whose
// gradients accumulate into external sink tensors, so binding the same
// parameter several times (weight sharing) sums all contribution paths.
class Graph {
public:
    using Var = int;

    Var input(Tensor v);
    Var param(const Tensor& v, Tensor* grad_sink);

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v)].value; }
    const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v)].grad; }

    // Seeds d(loss)/d(loss) = 1 and propagates to every parameter leaf.
    void backward(Var scalar_loss);

    // ---- elementwise ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_scaled(Var a, double ca, Var b, double cb);  // ca*a + cb*b
    Var scale(Var a, double c);
    Var affine(Var a, double mul, double shift);  // mul*a + shift
    Var relu(Var a);
    Var clamp_min0(Var a) { return relu(a); }
    Var sigmoid(Var a);

    // ---- shape ----
    Var reshape(Var a, std::vector<int> shape);
    Var concat_c(Var a, Var b);  // along dim 0 ([C,H,W] or [C,D,H,W])

    // ---- convolutions ----
    // x [C,H,W], w [O,C,kh,kw], b [O]
    Var conv2d(Var x, Var w, Var b, int stride, int pad, int dilation = 1);
    // x [C,D,H,W], w [O,C,kd,kh,kw], b [O]; stride 1, zero padding `pad`
    Var conv3d(Var x, Var w, Var b, int pad);

    // ---- resampling (align-corners bilinear up, area down) ----
    Var upsample_bilinear(Var x, int out_h, int out_w);  // [H,W] or [C,H,W]
    Var downsample_area(Var x, int factor);              // [H,W] or [C,H,W]

    // ---- stereo-specific ----
    // out(c,y,x) = bilinear sample of feat(c, y, x - disp(y,x)); zero outside.
    Var warp_horizontal(Var feat, Var disp);
    // [2C, 2R+1, H, W]: left features concatenated with right features
    // warped by disp + r for each offset r in -R..+R.
    Var residual_cost_volume(Var left, Var right, Var disp, int range_r);
    // scores [2R+1,H,W] -> expected offset under softmax(-scores), in [-R,R].
    Var soft_argmin(Var scores, int range_r);
    // Sobel gradient magnitude with replicate padding; [H,W] -> [H,W].
    Var sobel_magnitude(Var x);
    // x [*,H,W] or [*,*,H,W] multiplied by map [H,W] broadcast over leading dims.
    Var mul_hw(Var x, Var map);

    // ---- reductions ----
    Var sum(Var a);  // -> scalar [1]

    // ---- losses ----
    // mean over mask>0 of smooth-L1(pred - target); 0 if the mask is empty.
    Var smooth_l1_masked_mean(Var pred, const Tensor& target, const Tensor& mask);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Var> parents;
        std::function<void(Graph&)> back;
        Tensor* sink = nullptr;
        bool needs_grad = false;
    };
    // deque: val()/grad() references stay valid while nodes are appended
    std::deque<Node> nodes_;

    Var make(Tensor value, std::vector<Var> parents, std::function<void(Graph&)> back);
    Node& node(Var v) { return nodes_[static_cast<size_t>(v)]; }
    Tensor& gref(Var v) { return nodes_[static_cast<size_t>(v)].grad; }
    bool needs(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }
};

}  // namespace recsm
