#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_util.hpp"
#include "recsm/eval.hpp"

using namespace recsm;
using namespace recsm::testutil;

TEST_CASE("epe matches its definition on hand cases") {
    Tensor ones = Tensor::full({2, 2}, 1.0);
    CHECK(epe(Tensor::full({2, 2}, 10.0), Tensor::full({2, 2}, 10.0), ones) == 0.0);
    CHECK(epe(Tensor::full({2, 2}, 12.0), Tensor::full({2, 2}, 10.0), ones) == 2.0);
    CHECK_THROWS_AS(epe(ones, ones, Tensor::zeros({2, 2})), NumericError);
    CHECK_THROWS_AS(epe(ones, ones, Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("d1_all applies both outlier clauses") {
    Tensor ones = Tensor::full({1, 1}, 1.0);
    CHECK(d1_all(Tensor::full({1, 1}, 14.0), Tensor::full({1, 1}, 10.0), ones) == 100.0);
    // error 4 > 3 px but below 5% of a gt of 200
    CHECK(d1_all(Tensor::full({1, 1}, 204.0), Tensor::full({1, 1}, 200.0), ones) == 0.0);
    Tensor gt({1, 4}), pred({1, 4}), mask({1, 4});
    double gv[4] = {10.0, 50.0, 100.0, 30.0};
    double pv[4] = {14.0, 52.0, 104.9, 26.0};  // outlier, inlier, inlier(5%), outlier
    for (int i = 0; i < 4; ++i) {
        gt[i] = gv[i];
        pred[i] = pv[i];
        mask[i] = 1.0;
    }
    CHECK(d1_all(pred, gt, mask) == 50.0);
    CHECK_THROWS_AS(d1_all(pred, gt, Tensor::zeros({1, 4})), NumericError);
}

TEST_CASE("metrics equal per-pixel brute-force loops on random instances") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor gt = random_tensor({8, 8}, rng, 0.0, 80.0);
        Tensor pred = random_tensor({8, 8}, rng, 0.0, 80.0);
        Tensor mask = random_tensor({8, 8}, rng, 0.0, 1.0);
        for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] > 0.3 ? 1.0 : 0.0;
        mask[0] = 1.0;  // never empty
        double sum = 0.0;
        std::int64_t n = 0, bad = 0;
        for (std::int64_t i = 0; i < gt.size(); ++i) {
            if (mask[i] <= 0.0) continue;
            const double e = std::fabs(pred[i] - gt[i]);
            sum += e;
            if (e > 3.0 && e > 0.05 * gt[i]) ++bad;
            ++n;
        }
        CHECK(std::fabs(epe(pred, gt, mask) - sum / n) <= 1e-9);
        CHECK(std::fabs(d1_all(pred, gt, mask) - 100.0 * bad / n) <= 1e-9);
    }
}

TEST_CASE("the KITTI validity rule excludes zero and out-of-range gt") {
    Tensor gt({1, 4});
    gt[0] = 0.0;
    gt[1] = 191.9;
    gt[2] = 192.0;
    gt[3] = -1.0;
    Tensor mask = valid_mask_from_gt(gt);
    CHECK(mask[0] == 0.0);
    CHECK(mask[1] == 1.0);
    CHECK(mask[2] == 0.0);
    CHECK(mask[3] == 0.0);
}

TEST_CASE("conv mac count matches the closed form") {
    CHECK(conv2d_macs(4, 8, 3, 16, 16) == 73728);
}

TEST_CASE("mac estimate is linear in the image width") {
    ModelState state = build_model(desk_model_config(3), 1);
    const std::int64_t base = estimate_macs(state, 64, 64);
    CHECK(estimate_macs(state, 64, 128) == 2 * base);
    CHECK(base > 0);
}

TEST_CASE("adding a stack strictly increases params and macs") {
    ModelState k1 = build_model(desk_model_config(1), 1);
    ModelState k3 = build_model(desk_model_config(3), 1);
    CHECK(count_params(k3) > count_params(k1));
    CHECK(estimate_macs(k3, 64, 64) > estimate_macs(k1, 64, 64));
}
