#include "recsm/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "recsm/eval.hpp"

namespace recsm {

void TrainConfig::validate() const {
    if (crop_h < 16 || crop_w < 16) throw ConfigError("train: crop too small");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (!(lr_start > 0.0 && lr_start < lr_peak)) throw ConfigError("train: need 0 < lr_start < lr_peak");
    if (!(lr_final < lr_peak)) throw ConfigError("train: need lr_final < lr_peak");
    if (!(warmup_epochs < plateau_end_epoch && plateau_end_epoch < final_epoch))
        throw ConfigError("train: need warmup < plateau_end < final_epoch");
    if (steps_per_epoch < 1) throw ConfigError("train: steps_per_epoch must be positive");
    loss_weights.validate();
}

double lr_at_epoch(int e, const TrainConfig& cfg) {
    if (e < 0) throw ConfigError("lr_at_epoch: epoch must be non-negative");
    if (e >= cfg.final_epoch) return cfg.lr_final;
    if (e <= cfg.warmup_epochs) {
        const double t = static_cast<double>(e) / cfg.warmup_epochs;
        return cfg.lr_start + t * (cfg.lr_peak - cfg.lr_start);
    }
    if (e <= cfg.plateau_end_epoch) return cfg.lr_peak;
    const double t = static_cast<double>(e - cfg.plateau_end_epoch) / (cfg.final_epoch - cfg.plateau_end_epoch);
    return cfg.lr_peak + t * (cfg.lr_final - cfg.lr_peak);
}

Graph::Var branch_loss(Graph& g, const std::array<Graph::Var, 3>& branches, const Tensor& gt, const Tensor& mask,
                       const LossWeights& w, bool* empty_mask) {
    bool empty = true;
    for (std::int64_t i = 0; i < mask.size() && empty; ++i)
        if (mask[i] > 0.0) empty = false;
    if (empty_mask) *empty_mask = empty;
    Graph::Var ls = g.smooth_l1_masked_mean(branches[0], gt, mask);
    Graph::Var lm = g.smooth_l1_masked_mean(branches[1], gt, mask);
    Graph::Var ll = g.smooth_l1_masked_mean(branches[2], gt, mask);
    return g.add(g.add_scaled(ls, w.w_small, lm, w.w_medium), g.scale(ll, w.w_large));
}

Graph::Var total_loss(Graph& g, const std::vector<Graph::Var>& per_scs_losses, const std::vector<double>& lambdas) {
    if (per_scs_losses.empty()) throw ConfigError("total_loss: no losses");
    if (per_scs_losses.size() != lambdas.size()) throw ConfigError("total_loss: lambda count mismatch");
    Graph::Var acc = g.scale(per_scs_losses[0], lambdas[0]);
    for (size_t i = 1; i < per_scs_losses.size(); ++i)
        acc = g.add(acc, g.scale(per_scs_losses[i], lambdas[i]));
    return acc;
}

double total_loss(const std::vector<double>& per_scs_losses, const std::vector<double>& lambdas) {
    if (per_scs_losses.empty()) throw ConfigError("total_loss: no losses");
    if (per_scs_losses.size() != lambdas.size()) throw ConfigError("total_loss: lambda count mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < per_scs_losses.size(); ++i) acc += lambdas[i] * per_scs_losses[i];
    return acc;
}

namespace {

std::vector<double> effective_lambdas(const TrainConfig& cfg, int stack_count) {
    std::vector<double> lambdas = cfg.loss_weights.scs_lambdas;
    if (lambdas.empty()) lambdas.assign(static_cast<size_t>(stack_count), 1.0);
    if (lambdas.size() != static_cast<size_t>(stack_count))
        throw ConfigError("train: scs_lambdas length must equal the stack count");
    return lambdas;
}

}  // namespace

Graph::Var sample_loss(Binder& b, const TrainingTuple& sample, const ModelState& state, const TrainConfig& cfg,
                       FrameGraphResult* frame_out) {
    Graph& g = b.graph();
    const std::vector<double> lambdas = effective_lambdas(cfg, state.config.scs.stack_count);
    const Tensor mask = valid_mask_from_gt(sample.gt);
    FrameGraphResult r = run_frame_graph(b, g.input(sample.frame.left), g.input(sample.frame.right),
                                         g.input(sample.prev_disparity), state);
    if (frame_out) *frame_out = r;
    std::vector<Graph::Var> losses;
    for (int i = 0; i < state.config.scs.stack_count; ++i) {
        Graph::Var li = branch_loss(g, r.per_scs_branches[static_cast<size_t>(i)], sample.gt, mask,
                                    cfg.loss_weights);
        if (cfg.supervise_dom_output)
            li = g.add(li, g.smooth_l1_masked_mean(r.per_scs_disparities[static_cast<size_t>(i)], sample.gt, mask));
        losses.push_back(li);
    }
    return total_loss(g, losses, lambdas);
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps, int t) {
    if (t < 1) throw ConfigError("adam: step counter starts at 1");
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (int i = 0; i < store.count(); ++i) {
        ParamEntry& e = store.entry(i);
        if (e.adam_m.size() != e.value.size()) e.adam_m = Tensor::zeros(e.value.shape());
        if (e.adam_v.size() != e.value.size()) e.adam_v = Tensor::zeros(e.value.shape());
        for (std::int64_t j = 0; j < e.value.size(); ++j) {
            const double gj = e.grad[j];
            e.adam_m[j] = beta1 * e.adam_m[j] + (1.0 - beta1) * gj;
            e.adam_v[j] = beta2 * e.adam_v[j] + (1.0 - beta2) * gj * gj;
            const double mhat = e.adam_m[j] / bc1;
            const double vhat = e.adam_v[j] / bc2;
            e.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::string train_manifest_json(const ModelState& state, const TrainConfig& cfg, int epoch) {
    nlohmann::json j;
    j["format"] = "recsm-checkpoint";
    j["epoch"] = epoch;
    j["seed"] = cfg.seed;
    j["model_seed"] = state.seed;
    j["stack_count"] = state.config.scs.stack_count;
    j["base_channels"] = state.config.backbone.base_channels;
    j["pyramid_channels"] = state.config.backbone.pyramid_channels;
    j["dom_width"] = state.config.dom.width;
    j["use_temporal_attention"] = state.config.scs.use_temporal_attention;
    j["use_dom"] = state.config.scs.use_dom;
    j["shared_dom"] = state.config.scs.shared_dom;
    nlohmann::json sched = nlohmann::json::array();
    for (const RScheduleEntry& e : state.config.scs.r_schedule.per_scs)
        sched.push_back({e.large, e.medium, e.small});
    j["r_schedule"] = sched;
    j["lambdas"] = effective_lambdas(cfg, state.config.scs.stack_count);
    j["branch_weights"] = {cfg.loss_weights.w_small, cfg.loss_weights.w_medium, cfg.loss_weights.w_large};
    return j.dump();
}

TrainResult train(const std::vector<TrainingTuple>& data, ModelState& state, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const std::string& metrics_csv_path) {
    cfg.validate();
    state.config.validate();
    if (data.empty()) throw ConfigError("train: empty dataset");
    effective_lambdas(cfg, state.config.scs.stack_count);  // validated up front

    const int steps = cfg.total_steps > 0 ? cfg.total_steps : cfg.final_epoch * cfg.steps_per_epoch;
    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    double epoch_loss = 0.0;
    int epoch_steps = 0;
    double last_epe = 0.0, last_d1 = 0.0;

    for (int step = 0; step < steps; ++step) {
        const int epoch = step / cfg.steps_per_epoch;
        const double lr = cfg.fixed_lr > 0.0 ? cfg.fixed_lr : lr_at_epoch(std::min(epoch, cfg.final_epoch), cfg);
        state.params.zero_grads();
        double batch_loss = 0.0;
        for (int k = 0; k < cfg.batch_size; ++k) {
            const size_t idx = static_cast<size_t>(rng() % data.size());
            const TrainingTuple& sample = data[idx];
            Graph g;
            Binder b(g, state.params);
            FrameGraphResult fr;
            Graph::Var loss = g.scale(sample_loss(b, sample, state, cfg, &fr), 1.0 / cfg.batch_size);
            const double lv = g.val(loss)[0];
            if (!std::isfinite(lv)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at step " << step << " (sample " << idx << ", frame "
                    << sample.frame.frame_index << ", lr " << lr << ")";
                throw NumericError(msg.str());
            }
            batch_loss += lv;
            if (k == cfg.batch_size - 1) {
                // final-disparity metrics on the last sample of the batch
                const Tensor mask = valid_mask_from_gt(sample.gt);
                bool any = false;
                for (std::int64_t i = 0; i < mask.size() && !any; ++i) any = mask[i] > 0.0;
                if (any) {
                    last_epe = epe(g.val(fr.final_disparity), sample.gt, mask);
                    last_d1 = d1_all(g.val(fr.final_disparity), sample.gt, mask);
                }
            }
            g.backward(loss);
        }
        adam_step(state.params, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, step + 1);
        epoch_loss += batch_loss;
        ++epoch_steps;
        result.final_loss = batch_loss;

        const bool epoch_done = (step + 1) % cfg.steps_per_epoch == 0 || step + 1 == steps;
        if (epoch_done) {
            EpochStats s;
            s.epoch = epoch;
            s.loss = epoch_loss / epoch_steps;
            s.epe = last_epe;
            s.d1_all = last_d1;
            s.lr = lr;
            result.log.push_back(s);
            epoch_loss = 0.0;
            epoch_steps = 0;
        }
    }

    if (!metrics_csv_path.empty()) {
        std::ofstream csv(metrics_csv_path);
        if (!csv) throw IoError("train: cannot write " + metrics_csv_path);
        csv << "epoch,loss,epe,d1_all,lr\n";
        for (const EpochStats& s : result.log)
            csv << s.epoch << "," << s.loss << "," << s.epe << "," << s.d1_all << "," << s.lr << "\n";
    }
    if (!checkpoint_path.empty()) {
        const int last_epoch = result.log.empty() ? 0 : result.log.back().epoch;
        save_params(checkpoint_path, state.params, train_manifest_json(state, cfg, last_epoch));
    }
    return result;
}

double gradient_check(ModelState& state, const TrainingTuple& sample, const TrainConfig& cfg, int probes,
                      std::uint64_t probe_seed) {
    state.params.zero_grads();
    {
        Graph g;
        Binder b(g, state.params);
        g.backward(sample_loss(b, sample, state, cfg));
    }
    std::vector<Tensor> analytic;
    for (int i = 0; i < state.params.count(); ++i) analytic.push_back(state.params.entry(i).grad);

    auto forward = [&]() {
        Graph g;
        Binder b(g, state.params);
        return g.val(sample_loss(b, sample, state, cfg))[0];
    };
    const double h = 1e-5;
    std::mt19937_64 rng(probe_seed);
    double max_rel = 0.0;
    for (int k = 0; k < probes; ++k) {
        const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(state.params.count()));
        ParamEntry& e = state.params.entry(i);
        const std::int64_t j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(e.value.size()));
        const double orig = e.value[j];
        e.value[j] = orig + h;
        const double fp = forward();
        e.value[j] = orig - h;
        const double fm = forward();
        e.value[j] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic[static_cast<size_t>(i)][j];
        // near-zero pairs agree in the absolute sense; the relative form is
        // meaningless there because central differences bottom out at the
        // rounding noise of the loss (~1e-15 / 2h)
        if (std::fabs(fd) < 1e-5 && std::fabs(an) < 1e-5) continue;
        const double denom = std::max(std::fabs(fd), std::fabs(an));
        max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
    }
    return max_rel;
}

}  // namespace recsm
