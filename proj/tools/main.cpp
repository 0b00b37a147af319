#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "recsm/ablation.hpp"
#include "recsm/config.hpp"
#include "recsm/dataio.hpp"
#include "recsm/eval.hpp"
#include "recsm/plots.hpp"
#include "recsm/training.hpp"

using namespace recsm;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir = "out";
};

std::string config_text_or_empty(const std::string& path) { return path.empty() ? "" : read_text_file(path); }

ModelConfig load_model_config(const std::string& path) {
    return path.empty() ? desk_model_config() : model_config_from_json(read_text_file(path));
}

// gt maps double as recursion priors when bootstrapping from files
std::vector<TrainingTuple> load_tuples(const std::string& manifest_path, int crop_h, int crop_w,
                                       std::uint64_t seed) {
    return iterate_training_tuples(load_manifest(manifest_path), crop_h, crop_w, seed);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"recursive stereo matching toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too
    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file for the subcommand");
    auto* seed_opt = app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--out-dir", g.out_dir, "output directory");

    // generate
    auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
    int gen_sequences = 1;
    generate->add_option("--sequences", gen_sequences, "number of sequences");

    // train
    auto* train_cmd = app.add_subcommand("train", "train on a dataset manifest");
    std::string train_data, model_config_path, train_config_path;
    train_cmd->add_option("--data", train_data, "path to manifest.json")->required();
    train_cmd->add_option("--model-config", model_config_path, "model config JSON");
    train_cmd->add_option("--train-config", train_config_path, "train config JSON");

    // infer
    auto* infer = app.add_subcommand("infer", "run a sequence and write disparity PNGs");
    std::string infer_data, infer_checkpoint, infer_model_config;
    int infer_sequence = 0;
    double infer_prior = 2.0;
    infer->add_option("--data", infer_data, "path to manifest.json")->required();
    infer->add_option("--checkpoint", infer_checkpoint, "checkpoint file");
    infer->add_option("--model-config", infer_model_config, "model config JSON");
    infer->add_option("--sequence", infer_sequence, "sequence id");
    infer->add_option("--prior", infer_prior, "constant bootstrap disparity");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a model against ground truth");
    std::string eval_data, eval_checkpoint, eval_model_config;
    int eval_sequence = 0;
    double eval_prior = 2.0;
    eval_cmd->add_option("--data", eval_data, "path to manifest.json")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
    eval_cmd->add_option("--model-config", eval_model_config, "model config JSON");
    eval_cmd->add_option("--sequence", eval_sequence, "sequence id");
    eval_cmd->add_option("--prior", eval_prior, "constant bootstrap disparity");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run an ablation suite");
    std::string suite_str;
    int ablate_steps = 150;
    ablate->add_option("--suite", suite_str, "scales|temporal_attention|dynamic_r|dom|shared_weights|stack_count")
        ->required();
    ablate->add_option("--steps", ablate_steps, "training steps per variant");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print model structure, params and MACs");
    std::string inspect_model_config;
    int inspect_h = 64, inspect_w = 128;
    inspect->add_option("--model-config", inspect_model_config, "model config JSON");
    inspect->add_option("--height", inspect_h, "MAC estimate height");
    inspect->add_option("--width", inspect_w, "MAC estimate width");

    // plot
    auto* plot = app.add_subcommand("plot", "render curves from a metrics CSV or an error heatmap");
    std::string plot_metrics, plot_pred, plot_gt;
    plot->add_option("--metrics", plot_metrics, "metrics CSV from train");
    plot->add_option("--pred", plot_pred, "predicted disparity PNG16");
    plot->add_option("--gt", plot_gt, "ground-truth disparity PNG16");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage errors
    }
    g.seed_given = seed_opt->count() > 0;
    std::filesystem::create_directories(g.out_dir);

    if (*generate) {
        SyntheticSceneConfig scene;
        if (!g.config_path.empty()) scene = scene_config_from_json(read_text_file(g.config_path));
        if (g.seed_given) scene.seed = g.seed;
        std::vector<StereoSequence> sequences;
        for (int s = 0; s < gen_sequences; ++s) {
            SyntheticSceneConfig sc = scene;
            sc.seed = scene.seed + static_cast<std::uint64_t>(s);
            sequences.push_back(generate_sequence(sc));
        }
        write_dataset(g.out_dir, sequences);
        std::cout << "wrote " << gen_sequences << " sequence(s) to " << g.out_dir << "\n";
        return 0;
    }

    if (*train_cmd) {
        ModelConfig mc = load_model_config(model_config_path);
        TrainConfig tc;
        if (!train_config_path.empty()) tc = train_config_from_json(read_text_file(train_config_path));
        if (g.seed_given) tc.seed = g.seed;
        std::vector<TrainingTuple> data = load_tuples(train_data, tc.crop_h, tc.crop_w, tc.seed);
        ModelState state = build_model(mc, tc.seed);
        TrainResult r = train(data, state, tc, g.out_dir + "/checkpoint.ckpt", g.out_dir + "/metrics.csv");
        std::cout << "trained " << r.log.size() << " epoch(s); final loss " << r.final_loss << "\n";
        std::cout << "checkpoint: " << g.out_dir << "/checkpoint.ckpt\n";
        return 0;
    }

    if (*infer || *eval_cmd) {
        const bool is_eval = static_cast<bool>(*eval_cmd);
        const std::string data = is_eval ? eval_data : infer_data;
        const std::string ckpt = is_eval ? eval_checkpoint : infer_checkpoint;
        const std::string mc_path = is_eval ? eval_model_config : infer_model_config;
        const int seq_id = is_eval ? eval_sequence : infer_sequence;
        const double prior = is_eval ? eval_prior : infer_prior;
        DatasetManifest manifest = load_manifest(data);
        const SequenceRecord* rec = nullptr;
        for (const SequenceRecord& r : manifest.sequences)
            if (r.id == seq_id) rec = &r;
        if (!rec) throw ConfigError("no sequence with id " + std::to_string(seq_id));
        ModelState state = build_model(load_model_config(mc_path), g.seed);
        if (!ckpt.empty()) load_params(ckpt, state.params);
        std::vector<StereoFrame> frames;
        std::vector<Tensor> gts;
        const std::string dir = manifest.root + "/" + rec->dir;
        for (int n = 0; n < rec->frame_count; ++n) {
            StereoFrame f;
            f.frame_index = n;
            f.left = read_image_png8(dir + "/left_" + std::to_string(n) + ".png");
            f.right = read_image_png8(dir + "/right_" + std::to_string(n) + ".png");
            frames.push_back(std::move(f));
            gts.push_back(read_disparity_png16(dir + "/disp_" + std::to_string(n) + ".png").values);
        }
        DisparityMap d0 = DisparityMap::constant(frames[0].height(), frames[0].width(), prior);
        if (is_eval) {
            EvalReport report = evaluate_sequence(frames, gts, d0, state);
            std::ofstream csv(g.out_dir + "/eval.csv");
            csv << "frame,epe,d1_all,seconds\n";
            for (const FrameMetrics& m : report.frames)
                csv << m.frame_index << "," << m.epe << "," << m.d1_all << "," << m.seconds << "\n";
            std::cout << "frames " << report.frames.size() << "  EPE " << report.mean_epe << " px  D1-all "
                      << report.mean_d1_all << " %  median " << report.median_seconds << " s/frame\n";
            std::cout << "report: " << g.out_dir << "/eval.csv\n";
        } else {
            std::vector<FrameResult> results = run_sequence(frames, d0, state);
            for (size_t n = 0; n < results.size(); ++n)
                write_disparity_png16(g.out_dir + "/disp_" + std::to_string(n) + ".png",
                                      results[n].final_disparity);
            std::cout << "wrote " << results.size() << " disparity map(s) to " << g.out_dir << "\n";
        }
        return 0;
    }

    if (*ablate) {
        AblationConfig cfg = AblationConfig::desk_default();
        cfg.train_steps = ablate_steps;
        if (g.seed_given) cfg.seeds = {g.seed, g.seed + 1, g.seed + 2};
        AblationResult r = run_ablation(parse_suite(suite_str), cfg, g.out_dir);
        std::cout << "variant        epe      d1_all   median_s\n";
        for (const AblationRow& row : r.aggregate)
            std::printf("%-12s %8.4f %8.3f %10.4f\n", row.variant.c_str(), row.epe, row.d1_all, row.median_seconds);
        std::cout << "table: " << r.csv_path << "\n";
        return 0;
    }

    if (*inspect) {
        ModelConfig mc = load_model_config(inspect_model_config);
        ModelState state = build_model(mc, g.seed);
        std::cout << "K = " << mc.scs.stack_count << "\nR schedule = (";
        for (size_t i = 0; i < mc.scs.r_schedule.per_scs.size(); ++i) {
            const RScheduleEntry& e = mc.scs.r_schedule.per_scs[i];
            std::cout << (i ? "," : "") << "(" << e.large << "," << e.medium << "," << e.small << ")";
        }
        std::cout << ")\nparams = " << count_params(state) << "\nmacs(" << inspect_h << "x" << inspect_w
                  << ") = " << estimate_macs(state, inspect_h, inspect_w) << "\n";
        return 0;
    }

    if (*plot) {
        if (!plot_metrics.empty()) {
            std::ifstream in(plot_metrics);
            if (!in) throw IoError("cannot open: " + plot_metrics);
            std::string line;
            std::getline(in, line);
            if (line != "epoch,loss,epe,d1_all,lr") throw FormatError("unexpected metrics CSV header");
            PlotSeries loss{"loss", {}, {}}, epe_s{"epe", {}, {}};
            while (std::getline(in, line)) {
                double e, l, p, d, lr;
                if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &e, &l, &p, &d, &lr) != 5)
                    throw FormatError("bad metrics CSV row: " + line);
                loss.xs.push_back(e);
                loss.ys.push_back(l);
                epe_s.xs.push_back(e);
                epe_s.ys.push_back(p);
            }
            write_svg_curves(g.out_dir + "/training_curves.svg", {loss, epe_s}, "training metrics", "epoch", "value");
            std::cout << "wrote " << g.out_dir << "/training_curves.svg\n";
        }
        if (!plot_pred.empty() || !plot_gt.empty()) {
            if (plot_pred.empty() || plot_gt.empty()) throw ConfigError("heatmap needs both --pred and --gt");
            DisparityMap pred = read_disparity_png16(plot_pred);
            DisparityMap gt = read_disparity_png16(plot_gt);
            write_error_heatmap_png(g.out_dir + "/error_heatmap.png", pred.values, gt.values,
                                    valid_mask_from_gt(gt.values));
            std::cout << "wrote " << g.out_dir << "/error_heatmap.png\n";
        }
        if (plot_metrics.empty() && plot_pred.empty() && plot_gt.empty())
            throw ConfigError("plot needs --metrics or --pred/--gt");
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error:config: " << e.what() << "\n";
    } catch (const ShapeError& e) {
        std::cerr << "error:shape: " << e.what() << "\n";
    } catch (const FormatError& e) {
        std::cerr << "error:format: " << e.what() << "\n";
    } catch (const IoError& e) {
        std::cerr << "error:io: " << e.what() << "\n";
    } catch (const NumericError& e) {
        std::cerr << "error:numeric: " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << "\n";
    }
    return 1;
}
