#include "recsm/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace recsm {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void io_fail(const std::string& what, const std::string& path) { throw IoError(what + ": " + path); }

}  // namespace

void write_image_png8(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("png8: image must be [3,H,W]");
    const int H = image.dim(1), W = image.dim(2);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) io_fail("png8: cannot open for writing", path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        io_fail("png8: write failed", path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor read_image_png8(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) io_fail("png8: cannot open", path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        io_fail("png8: read failed", path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png8: expected 8-bit RGB: " + path);
    }
    const int H = static_cast<int>(png_get_image_height(png, info));
    const int W = static_cast<int>(png_get_image_width(png, info));
    Tensor image({3, H, W});
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                image.at3(c, y, x) = row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_disparity_png16(const std::string& path, const DisparityMap& d) {
    if (d.values.rank() != 2) throw ShapeError("png16: disparity must be [H,W]");
    const int H = d.values.dim(0), W = d.values.dim(1);
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) io_fail("png16: cannot open for writing", path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        io_fail("png16: write failed", path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(W) * 2);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double v = std::clamp(d.values.at2(y, x), 0.0, 255.996);
            const auto stored = static_cast<std::uint16_t>(std::lround(v * 256.0));
            row[static_cast<size_t>(x) * 2] = static_cast<png_byte>(stored >> 8);  // big-endian
            row[static_cast<size_t>(x) * 2 + 1] = static_cast<png_byte>(stored & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

DisparityMap read_disparity_png16(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) io_fail("png16: cannot open", path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        io_fail("png16: read failed", path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png16: expected 16-bit grayscale: " + path);
    }
    const int H = static_cast<int>(png_get_image_height(png, info));
    const int W = static_cast<int>(png_get_image_width(png, info));
    DisparityMap d{Tensor({H, W}), 1};
    std::vector<png_byte> row(static_cast<size_t>(W) * 2);
    for (int y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < W; ++x) {
            const std::uint16_t stored = static_cast<std::uint16_t>(
                (row[static_cast<size_t>(x) * 2] << 8) | row[static_cast<size_t>(x) * 2 + 1]);
            d.values.at2(y, x) = stored / 256.0;
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

// ---- synthetic generator ----

void SyntheticSceneConfig::validate() const {
    if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0)
        throw ConfigError("synthetic: size must be >= 16 and divisible by 16");
    if (object_count < 0 || frame_count < 1) throw ConfigError("synthetic: bad object/frame count");
    if (background_disparity < 0.0 || background_disparity >= max_disparity)
        throw ConfigError("synthetic: background disparity out of range");
    if (max_disparity <= 0.0 || max_disparity > 64.0) throw ConfigError("synthetic: max disparity out of [0,64]");
    if (bin_3_10 < 0.0 || bin_10_20 < 0.0 || bin_20_30 < 0.0 || bin_3_10 + bin_10_20 + bin_20_30 > 1.0)
        throw ConfigError("synthetic: infeasible change-bin targets");
    if (object_speed < 0) throw ConfigError("synthetic: object speed must be non-negative");
}

namespace {

// splitmix64-based value noise in [0.1, 0.9]
double hash_noise(std::uint64_t id, int c, std::int64_t y, std::int64_t x) {
    std::uint64_t z = id * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(c) * 0xbf58476d1ce4e5b9ull +
                      static_cast<std::uint64_t>(y + 1000000) * 0x94d049bb133111ebull +
                      static_cast<std::uint64_t>(x + 1000000) * 0xd6e8feb86659fd93ull;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return 0.1 + 0.8 * (static_cast<double>(z >> 11) / 9007199254740992.0);
}

// bilinear value noise, exact at integer coordinates
double tex(std::uint64_t id, int c, double y, double x) {
    const double fy = std::floor(y), fx = std::floor(x);
    const auto y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
    const double ay = y - fy, ax = x - fx;
    if (ay == 0.0 && ax == 0.0) return hash_noise(id, c, y0, x0);
    const double v00 = hash_noise(id, c, y0, x0), v01 = hash_noise(id, c, y0, x0 + 1);
    const double v10 = hash_noise(id, c, y0 + 1, x0), v11 = hash_noise(id, c, y0 + 1, x0 + 1);
    const double top = v00 + ax * (v01 - v00);
    const double bot = v10 + ax * (v11 - v10);
    return top + ay * (bot - top);
}

struct SceneObject {
    double x0 = 0.0, y0 = 0.0;  // top-left in left-image coordinates
    int w = 0, h = 0;
    double disparity = 0.0;
    int dx = 0, dy = 0;
    std::uint64_t texture_id = 0;
};

bool covers_left(const SceneObject& o, int y, int x) {
    return y >= o.y0 && y < o.y0 + o.h && x >= o.x0 && x < o.x0 + o.w;
}

bool covers_right(const SceneObject& o, int y, double xr) {
    return y >= o.y0 && y < o.y0 + o.h && xr >= o.x0 - o.disparity && xr < o.x0 + o.w - o.disparity;
}

// index of the frontmost (largest-disparity) object, -1 for background
int visible_left(const std::vector<SceneObject>& objs, int y, int x) {
    int best = -1;
    for (size_t i = 0; i < objs.size(); ++i)
        if (covers_left(objs[i], y, x) && (best < 0 || objs[i].disparity > objs[static_cast<size_t>(best)].disparity))
            best = static_cast<int>(i);
    return best;
}

int visible_right(const std::vector<SceneObject>& objs, int y, double xr) {
    int best = -1;
    for (size_t i = 0; i < objs.size(); ++i)
        if (covers_right(objs[i], y, xr) && (best < 0 || objs[i].disparity > objs[static_cast<size_t>(best)].disparity))
            best = static_cast<int>(i);
    return best;
}

// picks a new disparity whose |change| lies in [lo, hi], staying in bounds
double step_disparity(double d, double lo, double hi, double d_min, double d_max, bool integer, std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        double mag;
        if (integer) {
            const int ilo = static_cast<int>(std::floor(lo)) + 1;
            const int ihi = static_cast<int>(std::floor(hi));
            mag = static_cast<double>(ilo + static_cast<int>(rng() % static_cast<std::uint64_t>(ihi - ilo + 1)));
        } else {
            std::uniform_real_distribution<double> u(std::nextafter(lo, hi), hi);
            mag = u(rng);
        }
        const bool up_ok = d + mag <= d_max;
        const bool down_ok = d - mag >= d_min;
        if (!up_ok && !down_ok) continue;
        bool up = up_ok && down_ok ? (rng() & 1) != 0 : up_ok;
        return up ? d + mag : d - mag;
    }
    throw ConfigError("synthetic: cannot satisfy the change-bin targets within the disparity bounds");
}

}  // namespace

StereoSequence generate_sequence(const SyntheticSceneConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const int H = cfg.height, W = cfg.width;
    const double d_min = 4.0;
    const double d_max = std::min(cfg.max_disparity, 60.0);
    if (d_max - d_min < 30.0) throw ConfigError("synthetic: disparity span too narrow for the change bins");

    std::vector<SceneObject> objs;
    for (int i = 0; i < cfg.object_count; ++i) {
        SceneObject o;
        o.w = W / 8 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, W / 8)));
        o.h = H / 8 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, H / 4)));
        o.x0 = static_cast<double>(rng() % static_cast<std::uint64_t>(std::max(1, W - o.w)));
        o.y0 = static_cast<double>(rng() % static_cast<std::uint64_t>(std::max(1, H - o.h)));
        o.disparity = d_min + static_cast<double>(rng() % static_cast<std::uint64_t>(static_cast<int>(d_max - d_min)));
        if (!cfg.integer_disparities) o.disparity += 0.5;
        if (cfg.object_speed > 0) {
            o.dx = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * cfg.object_speed + 1)) - cfg.object_speed;
            o.dy = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * cfg.object_speed + 1)) - cfg.object_speed;
        }
        o.texture_id = 100 + static_cast<std::uint64_t>(i);
        objs.push_back(o);
    }
    const double change_bins = cfg.bin_3_10 + cfg.bin_10_20 + cfg.bin_20_30;

    StereoSequence seq;
    for (int n = 0; n < cfg.frame_count; ++n) {
        if (n > 0) {
            for (SceneObject& o : objs) {
                o.x0 += o.dx;
                o.y0 += o.dy;
                if (o.x0 < 0 || o.x0 + o.w > W) {
                    o.dx = -o.dx;
                    o.x0 += 2 * o.dx;
                }
                if (o.y0 < 0 || o.y0 + o.h > H) {
                    o.dy = -o.dy;
                    o.y0 += 2 * o.dy;
                }
                if (change_bins > 0.0) {
                    std::uniform_real_distribution<double> u(0.0, 1.0);
                    const double r = u(rng);
                    double lo = 0.0, hi = 3.0;  // remainder bin
                    if (r < cfg.bin_3_10) {
                        lo = 3.0;
                        hi = 10.0;
                    } else if (r < cfg.bin_3_10 + cfg.bin_10_20) {
                        lo = 10.0;
                        hi = 20.0;
                    } else if (r < change_bins) {
                        lo = 20.0;
                        hi = 30.0;
                    }
                    o.disparity = step_disparity(o.disparity, lo, hi, d_min, d_max, cfg.integer_disparities, rng);
                }
            }
        }
        StereoFrame frame;
        frame.frame_index = n;
        frame.left = Tensor({3, H, W});
        frame.right = Tensor({3, H, W});
        Tensor gt({H, W});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int e = visible_left(objs, y, x);
                const double d = e < 0 ? cfg.background_disparity : objs[static_cast<size_t>(e)].disparity;
                for (int c = 0; c < 3; ++c)
                    frame.left.at3(c, y, x) =
                        e < 0 ? tex(7, c, y, x)
                              : tex(objs[static_cast<size_t>(e)].texture_id, c, y - objs[static_cast<size_t>(e)].y0,
                                    x - objs[static_cast<size_t>(e)].x0);
                const double xr = x - d;
                const bool in_view = xr >= 0.0 && xr <= W - 1;
                const bool unoccluded = in_view && visible_right(objs, y, xr) == e;
                gt.at2(y, x) = unoccluded ? d : 0.0;

                const int er = visible_right(objs, y, static_cast<double>(x));
                const double dr = er < 0 ? cfg.background_disparity : objs[static_cast<size_t>(er)].disparity;
                for (int c = 0; c < 3; ++c)
                    frame.right.at3(c, y, x) =
                        er < 0 ? tex(7, c, y, x + dr)
                               : tex(objs[static_cast<size_t>(er)].texture_id, c,
                                     y - objs[static_cast<size_t>(er)].y0,
                                     x + dr - objs[static_cast<size_t>(er)].x0);
            }
        seq.frames.push_back(std::move(frame));
        seq.gt.push_back(std::move(gt));
    }
    return seq;
}

ChangeBinStats measure_change_bins(const std::vector<Tensor>& gts) {
    ChangeBinStats s;
    std::int64_t b1 = 0, b2 = 0, b3 = 0;
    for (size_t n = 1; n < gts.size(); ++n) {
        const Tensor& a = gts[n - 1];
        const Tensor& b = gts[n];
        if (a.shape() != b.shape()) throw ShapeError("change bins: gt shape mismatch");
        for (std::int64_t i = 0; i < a.size(); ++i) {
            if (a[i] <= 0.0 || b[i] <= 0.0) continue;
            const double c = std::fabs(b[i] - a[i]);
            if (c <= 1e-12) continue;
            ++s.change_count;
            if (c > 3.0 && c <= 10.0)
                ++b1;
            else if (c > 10.0 && c <= 20.0)
                ++b2;
            else if (c > 20.0 && c <= 30.0)
                ++b3;
        }
    }
    if (s.change_count > 0) {
        s.frac_3_10 = static_cast<double>(b1) / static_cast<double>(s.change_count);
        s.frac_10_20 = static_cast<double>(b2) / static_cast<double>(s.change_count);
        s.frac_20_30 = static_cast<double>(b3) / static_cast<double>(s.change_count);
    }
    return s;
}

// ---- dataset directory + manifest ----

namespace {

std::string frame_path(const std::string& dir, const char* stem, int n) {
    return dir + "/" + stem + "_" + std::to_string(n) + ".png";
}

}  // namespace

DatasetManifest write_dataset(const std::string& root_dir, const std::vector<StereoSequence>& sequences) {
    namespace fs = std::filesystem;
    fs::create_directories(root_dir);
    DatasetManifest m;
    m.root = root_dir;
    nlohmann::json j;
    j["format_version"] = 1;
    j["sequences"] = nlohmann::json::array();
    for (size_t s = 0; s < sequences.size(); ++s) {
        SequenceRecord rec;
        rec.id = static_cast<int>(s);
        rec.frame_count = static_cast<int>(sequences[s].frames.size());
        rec.dir = "seq_" + std::to_string(s);
        const std::string dir = root_dir + "/" + rec.dir;
        fs::create_directories(dir);
        for (int n = 0; n < rec.frame_count; ++n) {
            write_image_png8(frame_path(dir, "left", n), sequences[s].frames[static_cast<size_t>(n)].left);
            write_image_png8(frame_path(dir, "right", n), sequences[s].frames[static_cast<size_t>(n)].right);
            write_disparity_png16(frame_path(dir, "disp", n), DisparityMap{sequences[s].gt[static_cast<size_t>(n)], 1});
        }
        j["sequences"].push_back({{"id", rec.id}, {"frames", rec.frame_count}, {"dir", rec.dir}});
        m.sequences.push_back(rec);
    }
    std::ofstream out(root_dir + "/manifest.json");
    if (!out) io_fail("manifest: cannot write", root_dir + "/manifest.json");
    out << j.dump(2) << "\n";
    return m;
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) io_fail("manifest: cannot open", manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest: bad JSON in " + manifest_path + ": " + e.what());
    }
    DatasetManifest m;
    m.format_version = j.value("format_version", 0);
    if (m.format_version != 1) throw FormatError("manifest: unsupported format_version");
    m.root = fs::path(manifest_path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    for (const auto& js : j.at("sequences")) {
        SequenceRecord rec;
        rec.id = js.at("id").get<int>();
        rec.frame_count = js.at("frames").get<int>();
        rec.dir = js.at("dir").get<std::string>();
        const std::string dir = m.root + "/" + rec.dir;
        for (int n = 0; n < rec.frame_count; ++n)
            for (const char* stem : {"left", "right", "disp"})
                if (!fs::exists(frame_path(dir, stem, n))) io_fail("manifest: missing file", frame_path(dir, stem, n));
        m.sequences.push_back(rec);
    }
    return m;
}

namespace {

TrainingTuple crop_tuple(const StereoFrame& frame, const Tensor& prev_gt, const Tensor& gt, int crop_h, int crop_w,
                         std::mt19937_64& rng) {
    const int H = frame.height(), W = frame.width();
    if (crop_h % 16 != 0 || crop_w % 16 != 0) throw ConfigError("crop size must be divisible by 16");
    if (crop_h > H || crop_w > W) throw ConfigError("crop larger than the frame");
    const int yo = static_cast<int>(rng() % static_cast<std::uint64_t>(H - crop_h + 1));
    const int xo = static_cast<int>(rng() % static_cast<std::uint64_t>(W - crop_w + 1));
    TrainingTuple t;
    t.frame.frame_index = frame.frame_index;
    t.frame.left = Tensor({3, crop_h, crop_w});
    t.frame.right = Tensor({3, crop_h, crop_w});
    t.prev_disparity = Tensor({crop_h, crop_w});
    t.gt = Tensor({crop_h, crop_w});
    for (int y = 0; y < crop_h; ++y)
        for (int x = 0; x < crop_w; ++x) {
            for (int c = 0; c < 3; ++c) {
                t.frame.left.at3(c, y, x) = frame.left.at3(c, yo + y, xo + x);
                t.frame.right.at3(c, y, x) = frame.right.at3(c, yo + y, xo + x);
            }
            t.prev_disparity.at2(y, x) = prev_gt.at2(yo + y, xo + x);
            t.gt.at2(y, x) = gt.at2(yo + y, xo + x);
        }
    return t;
}

}  // namespace

std::vector<TrainingTuple> iterate_training_tuples(const DatasetManifest& manifest, int crop_h, int crop_w,
                                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrainingTuple> tuples;
    for (const SequenceRecord& rec : manifest.sequences) {
        const std::string dir = manifest.root + "/" + rec.dir;
        Tensor prev_gt;
        for (int n = 0; n < rec.frame_count; ++n) {
            Tensor gt = read_disparity_png16(frame_path(dir, "disp", n)).values;
            if (n > 0) {
                StereoFrame frame;
                frame.frame_index = n;
                frame.left = read_image_png8(frame_path(dir, "left", n));
                frame.right = read_image_png8(frame_path(dir, "right", n));
                tuples.push_back(crop_tuple(frame, prev_gt, gt, crop_h, crop_w, rng));
            }
            prev_gt = std::move(gt);
        }
    }
    return tuples;
}

std::vector<TrainingTuple> tuples_from_sequence(const StereoSequence& seq, int crop_h, int crop_w,
                                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrainingTuple> tuples;
    for (size_t n = 1; n < seq.frames.size(); ++n)
        tuples.push_back(crop_tuple(seq.frames[n], seq.gt[n - 1], seq.gt[n], crop_h, crop_w, rng));
    return tuples;
}

}  // namespace recsm
