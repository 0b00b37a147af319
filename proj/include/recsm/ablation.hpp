#pragma once

#include <string>
#include <vector>

#include "recsm/dataio.hpp"
#include "recsm/eval.hpp"
#include "recsm/training.hpp"

namespace recsm {

enum class AblationSuite { scales, temporal_attention, dynamic_r, dom, shared_weights, stack_count };

AblationSuite parse_suite(const std::string& name);
std::string suite_name(AblationSuite suite);

struct AblationConfig {
    ModelConfig base_model;                    // variant toggles start here
    SyntheticSceneConfig train_scene;          // per-seed scene seed = run seed
    SyntheticSceneConfig eval_scene;           // fixed held-out scene
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int train_steps = 150;
    int scales_train_steps = 500;  // scales trains to convergence, full frames
    int batch_size = 1;
    double fixed_lr = 1e-3;
    int crop_h = 32;
    int crop_w = 64;

    static AblationConfig desk_default();
};

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    double epe = 0.0;
    double d1_all = 0.0;
    double median_seconds = 0.0;
    std::int64_t param_count = 0;
};

struct AblationResult {
    AblationSuite suite = AblationSuite::scales;
    std::vector<AblationRow> rows;       // per (variant, seed)
    std::vector<AblationRow> aggregate;  // per variant, mean over seeds
    std::string csv_path;
};

// Trains every variant under identical seeds and scores it on the shared
// held-out scene. Writes <out_dir>/<suite>.csv; per-variant checkpoints in
// out_dir are reused on rerun, so interrupted suites resume where they
// stopped. Variant configs are asserted to differ from the base only in the
// suite's toggled keys.
AblationResult run_ablation(AblationSuite suite, const AblationConfig& cfg, const std::string& out_dir);

// Trains one model (or loads its checkpoint) and returns the eval report
// on the held-out scene. Shared by suites and the acceptance checks.
EvalReport train_and_evaluate(const ModelConfig& model_cfg, const AblationConfig& cfg, std::uint64_t seed,
                              const std::string& checkpoint_path, bool supervise_dom = false);

}  // namespace recsm
