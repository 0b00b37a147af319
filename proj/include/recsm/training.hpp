#pragma once

#include <array>
#include <string>
#include <vector>

#include "recsm/pipeline.hpp"

namespace recsm {

struct TrainConfig {
    int crop_h = 256;
    int crop_w = 512;
    int batch_size = 4;  // desk runs use 2
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int warmup_epochs = 10;
    int plateau_end_epoch = 300;
    int final_epoch = 700;
    double lr_start = 5.8e-5;
    double lr_peak = 4e-4;
    double lr_final = 2e-6;
    std::uint64_t seed = 0;
    LossWeights loss_weights;
    // desk-scale overrides
    int steps_per_epoch = 1;
    int total_steps = 0;    // 0: run final_epoch * steps_per_epoch steps
    double fixed_lr = 0.0;  // > 0 replaces the schedule
    bool supervise_dom_output = false;

    void validate() const;
};

double lr_at_epoch(int e, const TrainConfig& cfg);

// One supervised sample: a frame pair, the recursion prior and ground truth
// (0 marks invalid pixels).
struct TrainingTuple {
    StereoFrame frame;
    Tensor prev_disparity;  // [H,W], stride 1
    Tensor gt;              // [H,W]
};

// Eq. 3 for one SCS: branch disparities (small, medium, large) at stride 1.
// empty_mask (optional) is set when no valid pixel exists; the loss is 0.
Graph::Var branch_loss(Graph& g, const std::array<Graph::Var, 3>& branches, const Tensor& gt, const Tensor& mask,
                       const LossWeights& w, bool* empty_mask = nullptr);

// Eq. 2: sum of lambda_i * loss_i over the K stacks.
Graph::Var total_loss(Graph& g, const std::vector<Graph::Var>& per_scs_losses, const std::vector<double>& lambdas);
double total_loss(const std::vector<double>& per_scs_losses, const std::vector<double>& lambdas);

// Builds the full supervised loss of one sample (all SCSs, all branches;
// the refined output too when supervise_dom_output is set). frame_out, when
// given, receives the forward results for metric reuse.
Graph::Var sample_loss(Binder& b, const TrainingTuple& sample, const ModelState& state, const TrainConfig& cfg,
                       FrameGraphResult* frame_out = nullptr);

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps, int t);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double epe = 0.0;
    double d1_all = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> log;
    double final_loss = 0.0;
};

// Deterministic in (cfg.seed, data order). Writes the metrics CSV
// (epoch,loss,epe,d1_all,lr) and a final checkpoint when paths are given.
TrainResult train(const std::vector<TrainingTuple>& data, ModelState& state, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "", const std::string& metrics_csv_path = "");

// Central finite differences (step 1e-5) on >= `probes` random parameter
// coordinates of the sample loss; returns the max relative error.
double gradient_check(ModelState& state, const TrainingTuple& sample, const TrainConfig& cfg, int probes = 50,
                      std::uint64_t probe_seed = 0);

std::string train_manifest_json(const ModelState& state, const TrainConfig& cfg, int epoch);

}  // namespace recsm
