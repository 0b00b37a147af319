#include "recsm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace recsm {

namespace {

using nlohmann::json;

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + ": bad JSON: " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json r_schedule_to_json(const RSchedule& s) {
    json a = json::array();
    for (const RScheduleEntry& e : s.per_scs) a.push_back({e.large, e.medium, e.small});
    return a;
}

RSchedule r_schedule_from_json(const json& a) {
    RSchedule s;
    for (const auto& e : a) {
        if (!e.is_array() || e.size() != 3) throw ConfigError("r_schedule entries must be [large, medium, small]");
        s.per_scs.push_back(RScheduleEntry{e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
    }
    return s;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["base_channels"] = cfg.backbone.base_channels;
    j["pyramid_channels"] = cfg.backbone.pyramid_channels;
    j["dom_width"] = cfg.dom.width;
    j["stack_count"] = cfg.scs.stack_count;
    j["r_schedule"] = r_schedule_to_json(cfg.scs.r_schedule);
    j["use_temporal_attention"] = cfg.scs.use_temporal_attention;
    j["use_dom"] = cfg.scs.use_dom;
    j["shared_dom"] = cfg.scs.shared_dom;
    return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
    json j = parse(json_text, "model config");
    reject_unknown(j,
                   {"base_channels", "pyramid_channels", "dom_width", "stack_count", "r_schedule",
                    "use_temporal_attention", "use_dom", "shared_dom"},
                   "model config");
    ModelConfig cfg = desk_model_config();
    get_if(j, "base_channels", cfg.backbone.base_channels);
    get_if(j, "pyramid_channels", cfg.backbone.pyramid_channels);
    get_if(j, "dom_width", cfg.dom.width);
    get_if(j, "stack_count", cfg.scs.stack_count);
    cfg.scs.r_schedule = j.contains("r_schedule") ? r_schedule_from_json(j.at("r_schedule"))
                                                  : default_r_schedule(cfg.scs.stack_count);
    get_if(j, "use_temporal_attention", cfg.scs.use_temporal_attention);
    get_if(j, "use_dom", cfg.scs.use_dom);
    get_if(j, "shared_dom", cfg.scs.shared_dom);
    cfg.validate();
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["crop_h"] = cfg.crop_h;
    j["crop_w"] = cfg.crop_w;
    j["batch_size"] = cfg.batch_size;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["plateau_end_epoch"] = cfg.plateau_end_epoch;
    j["final_epoch"] = cfg.final_epoch;
    j["lr_start"] = cfg.lr_start;
    j["lr_peak"] = cfg.lr_peak;
    j["lr_final"] = cfg.lr_final;
    j["seed"] = cfg.seed;
    j["steps_per_epoch"] = cfg.steps_per_epoch;
    j["total_steps"] = cfg.total_steps;
    j["fixed_lr"] = cfg.fixed_lr;
    j["supervise_dom_output"] = cfg.supervise_dom_output;
    j["scs_lambdas"] = cfg.loss_weights.scs_lambdas;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& json_text) {
    json j = parse(json_text, "train config");
    reject_unknown(j,
                   {"crop_h", "crop_w", "batch_size", "warmup_epochs", "plateau_end_epoch", "final_epoch", "lr_start",
                    "lr_peak", "lr_final", "seed", "steps_per_epoch", "total_steps", "fixed_lr",
                    "supervise_dom_output", "scs_lambdas"},
                   "train config");
    TrainConfig cfg;
    get_if(j, "crop_h", cfg.crop_h);
    get_if(j, "crop_w", cfg.crop_w);
    get_if(j, "batch_size", cfg.batch_size);
    get_if(j, "warmup_epochs", cfg.warmup_epochs);
    get_if(j, "plateau_end_epoch", cfg.plateau_end_epoch);
    get_if(j, "final_epoch", cfg.final_epoch);
    get_if(j, "lr_start", cfg.lr_start);
    get_if(j, "lr_peak", cfg.lr_peak);
    get_if(j, "lr_final", cfg.lr_final);
    get_if(j, "seed", cfg.seed);
    get_if(j, "steps_per_epoch", cfg.steps_per_epoch);
    get_if(j, "total_steps", cfg.total_steps);
    get_if(j, "fixed_lr", cfg.fixed_lr);
    get_if(j, "supervise_dom_output", cfg.supervise_dom_output);
    get_if(j, "scs_lambdas", cfg.loss_weights.scs_lambdas);
    cfg.validate();
    return cfg;
}

std::string scene_config_to_json(const SyntheticSceneConfig& cfg) {
    json j;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["object_count"] = cfg.object_count;
    j["frame_count"] = cfg.frame_count;
    j["background_disparity"] = cfg.background_disparity;
    j["max_disparity"] = cfg.max_disparity;
    j["object_speed"] = cfg.object_speed;
    j["integer_disparities"] = cfg.integer_disparities;
    j["bin_3_10"] = cfg.bin_3_10;
    j["bin_10_20"] = cfg.bin_10_20;
    j["bin_20_30"] = cfg.bin_20_30;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

SyntheticSceneConfig scene_config_from_json(const std::string& json_text) {
    json j = parse(json_text, "scene config");
    reject_unknown(j,
                   {"height", "width", "object_count", "frame_count", "background_disparity", "max_disparity",
                    "object_speed", "integer_disparities", "bin_3_10", "bin_10_20", "bin_20_30", "seed"},
                   "scene config");
    SyntheticSceneConfig cfg;
    get_if(j, "height", cfg.height);
    get_if(j, "width", cfg.width);
    get_if(j, "object_count", cfg.object_count);
    get_if(j, "frame_count", cfg.frame_count);
    get_if(j, "background_disparity", cfg.background_disparity);
    get_if(j, "max_disparity", cfg.max_disparity);
    get_if(j, "object_speed", cfg.object_speed);
    get_if(j, "integer_disparities", cfg.integer_disparities);
    get_if(j, "bin_3_10", cfg.bin_3_10);
    get_if(j, "bin_10_20", cfg.bin_10_20);
    get_if(j, "bin_20_30", cfg.bin_20_30);
    get_if(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

std::vector<std::string> config_diff_keys(const std::string& json_a, const std::string& json_b) {
    json a = parse(json_a, "config diff");
    json b = parse(json_b, "config diff");
    std::vector<std::string> keys;
    for (const auto& [key, value] : a.items())
        if (!b.contains(key) || b.at(key) != value) keys.push_back(key);
    for (const auto& [key, value] : b.items())
        if (!a.contains(key)) keys.push_back(key);
    return keys;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write: " + path);
    out << text;
}

}  // namespace recsm
