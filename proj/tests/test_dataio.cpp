#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "fd_util.hpp"
#include "recsm/dataio.hpp"

using namespace recsm;
using namespace recsm::testutil;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

SyntheticSceneConfig small_scene(std::uint64_t seed, int frames = 3) {
    SyntheticSceneConfig cfg;
    cfg.height = 48;
    cfg.width = 96;
    cfg.object_count = 3;
    cfg.frame_count = frames;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("disparity png16 uses the /256 encoding") {
    TempDir dir("recsm_png16");
    Tensor v({2, 2});
    v[0] = 100.0;  // stored 25600
    v[1] = 0.0;
    v[2] = 1.0 / 256.0;
    v[3] = 191.5;
    const std::string p = dir.str() + "/d.png";
    write_disparity_png16(p, DisparityMap{v, 1});
    DisparityMap r = read_disparity_png16(p);
    CHECK(r.values[0] == 100.0);
    CHECK(r.values[1] == 0.0);
    CHECK(r.values[2] == 1.0 / 256.0);
    CHECK(r.values[3] == 191.5);
}

TEST_CASE("random disparities round trip within 1/256 and rewrite to the bit") {
    TempDir dir("recsm_png16_rt");
    std::mt19937_64 rng(81);
    Tensor v = random_tensor({16, 24}, rng, 0.0, 192.0);
    const std::string p1 = dir.str() + "/a.png";
    const std::string p2 = dir.str() + "/b.png";
    write_disparity_png16(p1, DisparityMap{v, 1});
    DisparityMap once = read_disparity_png16(p1);
    for (std::int64_t i = 0; i < v.size(); ++i) CHECK(std::fabs(once.values[i] - v[i]) <= 1.0 / 256.0);
    write_disparity_png16(p2, once);
    DisparityMap twice = read_disparity_png16(p2);
    for (std::int64_t i = 0; i < v.size(); ++i) CHECK(twice.values[i] == once.values[i]);
}

TEST_CASE("png16 reader rejects 8-bit input") {
    TempDir dir("recsm_png_mix");
    const std::string p = dir.str() + "/rgb.png";
    write_image_png8(p, Tensor::full({3, 16, 16}, 0.5));
    CHECK_THROWS_AS(read_disparity_png16(p), FormatError);
    const std::string q = dir.str() + "/gray16.png";
    write_disparity_png16(q, DisparityMap{Tensor::full({16, 16}, 3.0), 1});
    CHECK_THROWS_AS(read_image_png8(q), FormatError);
    CHECK_THROWS_AS(read_image_png8(dir.str() + "/missing.png"), IoError);
}

TEST_CASE("image png8 round trips at 1/255 quantization") {
    TempDir dir("recsm_png8");
    std::mt19937_64 rng(82);
    Tensor img = random_tensor({3, 16, 32}, rng, 0.0, 1.0);
    const std::string p = dir.str() + "/i.png";
    write_image_png8(p, img);
    Tensor r = read_image_png8(p);
    REQUIRE(r.shape() == img.shape());
    for (std::int64_t i = 0; i < img.size(); ++i) CHECK(std::fabs(r[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("synthetic right image equals the gt-warped left on valid pixels") {
    StereoSequence seq = generate_sequence(small_scene(5));
    for (size_t n = 0; n < seq.frames.size(); ++n) {
        const Tensor& gt = seq.gt[n];
        const StereoFrame& f = seq.frames[n];
        std::int64_t valid = 0;
        for (int y = 0; y < gt.dim(0); ++y)
            for (int x = 0; x < gt.dim(1); ++x) {
                const double d = gt.at2(y, x);
                if (d <= 0.0) continue;
                ++valid;
                const int xr = x - static_cast<int>(d);
                CHECK(std::lround(d) == static_cast<long>(d));  // integer config
                for (int c = 0; c < 3; ++c) CHECK(f.right.at3(c, y, xr) == f.left.at3(c, y, x));
            }
        CHECK(valid > gt.size() / 2);
    }
}

TEST_CASE("generator is deterministic and occlusions are marked invalid") {
    StereoSequence a = generate_sequence(small_scene(6));
    StereoSequence b = generate_sequence(small_scene(6));
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t n = 0; n < a.frames.size(); ++n) {
        for (std::int64_t i = 0; i < a.frames[n].left.size(); ++i) {
            CHECK(a.frames[n].left[i] == b.frames[n].left[i]);
            CHECK(a.frames[n].right[i] == b.frames[n].right[i]);
        }
        for (std::int64_t i = 0; i < a.gt[n].size(); ++i) CHECK(a.gt[n][i] == b.gt[n][i]);
    }
    bool any_invalid = false;
    for (std::int64_t i = 0; i < a.gt[0].size(); ++i) any_invalid = any_invalid || a.gt[0][i] == 0.0;
    CHECK(any_invalid);  // objects over background always occlude something
}

TEST_CASE("a zero-motion config repeats the first frame") {
    SyntheticSceneConfig cfg = small_scene(7);
    cfg.object_speed = 0;
    cfg.bin_3_10 = cfg.bin_10_20 = cfg.bin_20_30 = 0.0;
    StereoSequence seq = generate_sequence(cfg);
    for (size_t n = 1; n < seq.frames.size(); ++n) {
        for (std::int64_t i = 0; i < seq.gt[0].size(); ++i) CHECK(seq.gt[n][i] == seq.gt[0][i]);
        for (std::int64_t i = 0; i < seq.frames[0].left.size(); ++i)
            CHECK(seq.frames[n].left[i] == seq.frames[0].left[i]);
    }
    ChangeBinStats s = measure_change_bins(seq.gt);
    CHECK(s.change_count == 0);
}

TEST_CASE("disparity change bins approach the configured targets") {
    SyntheticSceneConfig cfg = small_scene(8, 50);
    cfg.height = 64;
    cfg.width = 128;
    cfg.object_count = 6;
    StereoSequence seq = generate_sequence(cfg);
    ChangeBinStats s = measure_change_bins(seq.gt);
    CHECK(s.change_count > 100);
    CHECK(std::fabs(s.frac_3_10 - 0.5937) <= 0.10);
    CHECK(std::fabs(s.frac_10_20 - 0.2562) <= 0.10);
    CHECK(std::fabs(s.frac_20_30 - 0.081) <= 0.10);
}

TEST_CASE("invalid generator configs are rejected") {
    SyntheticSceneConfig cfg = small_scene(9);
    cfg.bin_3_10 = 0.9;
    cfg.bin_10_20 = 0.2;  // sums over 1
    CHECK_THROWS_AS(generate_sequence(cfg), ConfigError);
    cfg = small_scene(9);
    cfg.height = 30;  // not divisible by 16
    CHECK_THROWS_AS(generate_sequence(cfg), ConfigError);
    cfg = small_scene(9);
    cfg.max_disparity = 20.0;  // cannot host (20,30] changes
    CHECK_THROWS_AS(generate_sequence(cfg), ConfigError);
}

TEST_CASE("dataset round trips through the manifest") {
    TempDir dir("recsm_dataset");
    StereoSequence seq = generate_sequence(small_scene(10, 2));
    write_dataset(dir.str(), {seq});
    DatasetManifest m = load_manifest(dir.str() + "/manifest.json");
    REQUIRE(m.sequences.size() == 1);
    CHECK(m.sequences[0].frame_count == 2);
    // 1 sequence of 2 frames yields exactly 1 tuple (frame 1, prior frame 0)
    std::vector<TrainingTuple> tuples = iterate_training_tuples(m, 48, 96, 3);
    REQUIRE(tuples.size() == 1);
    CHECK(tuples[0].frame.frame_index == 1);
    for (std::int64_t i = 0; i < tuples[0].gt.size(); ++i) {
        const double a = tuples[0].gt[i];
        const double b = seq.gt[1][i];  // full-size crop: window is the frame
        CHECK(std::fabs(a - b) <= 1.0 / 256.0);
    }
    for (std::int64_t i = 0; i < tuples[0].prev_disparity.size(); ++i)
        CHECK(std::fabs(tuples[0].prev_disparity[i] - seq.gt[0][i]) <= 1.0 / 256.0);
}

TEST_CASE("manifest loading reports missing files") {
    TempDir dir("recsm_dataset_missing");
    StereoSequence seq = generate_sequence(small_scene(11, 2));
    write_dataset(dir.str(), {seq});
    std::filesystem::remove(dir.path / "seq_0" / "right_1.png");
    CHECK_THROWS_AS(load_manifest(dir.str() + "/manifest.json"), IoError);
}

TEST_CASE("crops are reproducible and always inside bounds") {
    StereoSequence seq = generate_sequence(small_scene(12, 3));
    std::vector<TrainingTuple> a = tuples_from_sequence(seq, 32, 64, 17);
    std::vector<TrainingTuple> b = tuples_from_sequence(seq, 32, 64, 17);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (std::int64_t j = 0; j < a[i].gt.size(); ++j) CHECK(a[i].gt[j] == b[i].gt[j]);
    // all tensors are fully populated from in-bounds source pixels, so any
    // out-of-bounds window would have thrown in Tensor::at2; sweep seeds
    for (std::uint64_t s = 0; s < 1000; ++s) {
        std::vector<TrainingTuple> t = tuples_from_sequence(seq, 32, 64, s);
        CHECK(t.size() == 2);
        CHECK(t[0].gt.all_finite());
    }
    CHECK_THROWS_AS(tuples_from_sequence(seq, 30, 64, 0), ConfigError);
    CHECK_THROWS_AS(tuples_from_sequence(seq, 32, 128, 0), ConfigError);
}
