#include "recsm/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "recsm/dataio.hpp"

namespace recsm {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kMarginLeft = 60, kMarginRight = 20, kMarginTop = 40, kMarginBottom = 50;
const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void write_svg_curves(const std::string& path, const std::vector<PlotSeries>& series, const std::string& title,
                      const std::string& x_label, const std::string& y_label) {
    if (series.empty()) throw ConfigError("svg: no series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const PlotSeries& s : series) {
        if (s.xs.size() != s.ys.size() || s.xs.empty()) throw ConfigError("svg: bad series " + s.label);
        for (double v : s.xs) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.ys) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto px = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return kMarginTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft << "\" y2=\""
        << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << x_label << "</text>\n";
    svg << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
        << 16 << " " << kHeight / 2 << ")\">" << y_label << "</text>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g / %.4g", ymin, ymax);
    svg << "<text x=\"" << kMarginLeft + 4 << "\" y=\"" << kMarginTop - 6 << "\" font-size=\"10\">y: " << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.4g / %.4g", xmin, xmax);
    svg << "<text x=\"" << kWidth - kMarginRight - 120 << "\" y=\"" << kHeight - kMarginBottom + 16
        << "\" font-size=\"10\">x: " << buf << "</text>\n";
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kSeriesColors[i % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t k = 0; k < series[i].xs.size(); ++k)
            svg << px(series[i].xs[k]) << "," << py(series[i].ys[k]) << " ";
        svg << "\"/>\n";
        svg << "<text x=\"" << kWidth - kMarginRight - 110 << "\" y=\"" << kMarginTop + 16 + 14 * static_cast<int>(i)
            << "\" font-size=\"11\" fill=\"" << color << "\">" << series[i].label << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    if (!out) throw IoError("svg: cannot write " + path);
    out << svg.str();
}

void write_heatmap_png(const std::string& path, const Tensor& values, double vmin, double vmax) {
    if (values.rank() != 2) throw ShapeError("heatmap: values must be [H,W]");
    if (!(vmax > vmin)) throw ConfigError("heatmap: need vmax > vmin");
    const int H = values.dim(0), W = values.dim(1);
    Tensor rgb({3, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double t = std::clamp((values.at2(y, x) - vmin) / (vmax - vmin), 0.0, 1.0);
            // fixed blue (t=0) -> white (t=0.5) -> red (t=1) map
            double r, g, b;
            if (t < 0.5) {
                const double u = t * 2.0;
                r = u;
                g = u;
                b = 1.0;
            } else {
                const double u = (t - 0.5) * 2.0;
                r = 1.0;
                g = 1.0 - u;
                b = 1.0 - u;
            }
            rgb.at3(0, y, x) = r;
            rgb.at3(1, y, x) = g;
            rgb.at3(2, y, x) = b;
        }
    write_image_png8(path, rgb);
}

void write_error_heatmap_png(const std::string& path, const Tensor& pred, const Tensor& gt, const Tensor& mask,
                             double vmax) {
    if (pred.shape() != gt.shape() || pred.shape() != mask.shape())
        throw ShapeError("heatmap: pred, gt and mask shapes must agree");
    Tensor err(pred.shape());
    for (std::int64_t i = 0; i < err.size(); ++i)
        err[i] = mask[i] > 0.0 ? std::fabs(pred[i] - gt[i]) : -vmax;  // invalid renders as the darkest blue
    write_heatmap_png(path, err, -vmax, vmax);
}

}  // namespace recsm
