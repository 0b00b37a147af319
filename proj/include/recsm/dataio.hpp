#pragma once

#include <string>
#include <vector>

#include "recsm/training.hpp"

namespace recsm {

// ---- KITTI-style PNG codecs ----

// 8-bit RGB; tensor values in [0,1].
void write_image_png8(const std::string& path, const Tensor& image);
Tensor read_image_png8(const std::string& path);

// 16-bit grayscale, disparity = stored / 256, 0 marks invalid.
void write_disparity_png16(const std::string& path, const DisparityMap& d);
DisparityMap read_disparity_png16(const std::string& path);

// ---- synthetic stereo video ----

struct SyntheticObject {
    int x = 0, y = 0, w = 0, h = 0;  // left-image rectangle
    double disparity = 0.0;
    int dx = 0, dy = 0;  // per-frame translation
};

struct SyntheticSceneConfig {
    int height = 64;
    int width = 128;
    int object_count = 6;
    int frame_count = 5;
    double background_disparity = 2.0;
    double max_disparity = 64.0;
    int object_speed = 0;            // max |dx|,|dy| per frame
    bool integer_disparities = true;  // exact warp consistency
    // per-frame |disparity change| bin targets over (3,10], (10,20], (20,30];
    // the remainder falls in (0,3]
    double bin_3_10 = 0.5937;
    double bin_10_20 = 0.2562;
    double bin_20_30 = 0.081;
    std::uint64_t seed = 0;

    void validate() const;
};

struct StereoSequence {
    std::vector<StereoFrame> frames;
    std::vector<Tensor> gt;  // [H,W] per frame; 0 marks occluded/invalid
};

StereoSequence generate_sequence(const SyntheticSceneConfig& cfg);

struct ChangeBinStats {
    double frac_3_10 = 0.0;
    double frac_10_20 = 0.0;
    double frac_20_30 = 0.0;
    std::int64_t change_count = 0;  // nonzero changes on jointly valid pixels
};

// Histogram of per-pixel |disparity change| between consecutive gt maps.
ChangeBinStats measure_change_bins(const std::vector<Tensor>& gts);

// ---- dataset directory + manifest ----

struct SequenceRecord {
    int id = 0;
    int frame_count = 0;
    std::string dir;  // relative to the manifest's directory
};

struct DatasetManifest {
    int format_version = 1;
    std::string root;  // directory holding manifest.json
    std::vector<SequenceRecord> sequences;
};

// Writes seq_<id>/left_<n>.png, right_<n>.png, disp_<n>.png and
// manifest.json under root_dir.
DatasetManifest write_dataset(const std::string& root_dir, const std::vector<StereoSequence>& sequences);

DatasetManifest load_manifest(const std::string& manifest_path);

// One tuple per frame n >= 1: (frame n crop, gt disparity of frame n-1 as
// the prior, gt of frame n). Crop positions are reproducible given seed.
std::vector<TrainingTuple> iterate_training_tuples(const DatasetManifest& manifest, int crop_h, int crop_w,
                                                   std::uint64_t seed);

// In-memory counterpart used by tests and the ablation harness.
std::vector<TrainingTuple> tuples_from_sequence(const StereoSequence& seq, int crop_h, int crop_w,
                                                std::uint64_t seed);

}  // namespace recsm
