#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "recsm/dataio.hpp"
#include "recsm/plots.hpp"

using namespace recsm;

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

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(static_cast<bool>(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("svg curves contain every series and are deterministic") {
    TempDir dir("recsm_svg");
    std::vector<PlotSeries> series = {
        {"loss", {0, 1, 2, 3}, {4.0, 2.0, 1.5, 1.2}},
        {"epe", {0, 1, 2, 3}, {9.0, 5.0, 3.0, 2.5}},
    };
    const std::string a = dir.str() + "/a.svg", b = dir.str() + "/b.svg";
    write_svg_curves(a, series, "training", "epoch", "value");
    write_svg_curves(b, series, "training", "epoch", "value");
    const std::string text = slurp(a);
    CHECK(text == slurp(b));
    CHECK(text.find("<svg") != std::string::npos);
    CHECK(text.find("loss") != std::string::npos);
    CHECK(text.find("epe") != std::string::npos);
    CHECK(text.find("training") != std::string::npos);
    // one polyline per series
    size_t count = 0;
    for (size_t pos = 0; (pos = text.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
    CHECK(count == 2);
}

TEST_CASE("svg rejects empty or ragged series") {
    TempDir dir("recsm_svg_bad");
    CHECK_THROWS_AS(write_svg_curves(dir.str() + "/x.svg", {}, "t", "x", "y"), ConfigError);
    CHECK_THROWS_AS(write_svg_curves(dir.str() + "/x.svg", {{"s", {0, 1}, {1.0}}}, "t", "x", "y"), ConfigError);
}

TEST_CASE("heatmap png uses the fixed endpoints of the colormap") {
    TempDir dir("recsm_heatmap");
    Tensor v({1, 3});
    v[0] = -1.0;  // blue
    v[1] = 0.0;   // white
    v[2] = 1.0;   // red
    const std::string p = dir.str() + "/h.png";
    write_heatmap_png(p, v, -1.0, 1.0);
    Tensor rgb = read_image_png8(p);
    REQUIRE(rgb.dim(0) == 3);
    CHECK(rgb.at3(0, 0, 0) == doctest::Approx(0.0).epsilon(0.01));
    CHECK(rgb.at3(2, 0, 0) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(0, 0, 1) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(1, 0, 1) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(2, 0, 1) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(0, 0, 2) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(2, 0, 2) == doctest::Approx(0.0).epsilon(0.01));
}

TEST_CASE("heatmap rejects bad inputs") {
    TempDir dir("recsm_heatmap_bad");
    Tensor flat({4});
    CHECK_THROWS_AS(write_heatmap_png(dir.str() + "/x.png", flat, 0.0, 1.0), ShapeError);
    Tensor v({2, 2});
    CHECK_THROWS_AS(write_heatmap_png(dir.str() + "/x.png", v, 1.0, 1.0), ConfigError);
}

TEST_CASE("error heatmap marks invalid pixels as the darkest blue") {
    TempDir dir("recsm_errmap");
    Tensor pred({1, 2}), gt({1, 2}), mask({1, 2});
    pred[0] = 5.0;
    gt[0] = 5.0;
    mask[0] = 1.0;  // zero error: white
    pred[1] = 9.0;
    gt[1] = 1.0;
    mask[1] = 0.0;  // invalid: blue
    const std::string p = dir.str() + "/e.png";
    write_error_heatmap_png(p, pred, gt, mask, 5.0);
    Tensor rgb = read_image_png8(p);
    CHECK(rgb.at3(0, 0, 0) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(1, 0, 0) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(2, 0, 0) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rgb.at3(0, 0, 1) == doctest::Approx(0.0).epsilon(0.01));
    CHECK(rgb.at3(2, 0, 1) == doctest::Approx(1.0).epsilon(0.01));
    Tensor bad({2, 2});
    CHECK_THROWS_AS(write_error_heatmap_png(dir.str() + "/x.png", pred, bad, mask), ShapeError);
}
