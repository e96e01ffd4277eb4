#include "lssltc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lssltc {

namespace {

void expect_same_dims(const char* op, const SegMask& a, const SegMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw std::invalid_argument(std::string(op) + ": mask sizes differ (" + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                    std::to_string(b.width) + ")");
    }
}

std::size_t overlap(const SegMask& a, const SegMask& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] & b.bits[i]);
    return n;
}

constexpr double kFar = 1e20;

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void dt1d(const double* f, double* d, std::size_t n, std::vector<int>& v, std::vector<double>& z) {
    const double inf = std::numeric_limits<double>::infinity();
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    std::size_t k = 0;
    z[0] = -inf;
    z[1] = inf;
    auto meet = [&](int q, int p) {
        return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    for (int q = 1; q < static_cast<int>(n); ++q) {
        double s = meet(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = meet(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < static_cast<int>(n); ++q) {
        while (z[k + 1] < q) ++k;
        const int p = v[k];
        d[q] = double(q - p) * (q - p) + f[p];
    }
}

// Squared Euclidean distance from every pixel to the nearest listed point.
std::vector<double> squared_edt(const std::vector<std::pair<int, int>>& points, std::size_t h, std::size_t w) {
    std::vector<double> grid(h * w, kFar);
    for (auto [y, x] : points) grid[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 0.0;
    std::vector<double> f(std::max(h, w)), d(std::max(h, w));
    std::vector<int> v;
    std::vector<double> z;
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
        dt1d(f.data(), d.data(), h, v, z);
        for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = d[y];
    }
    for (std::size_t y = 0; y < h; ++y) {
        dt1d(grid.data() + y * w, d.data(), w, v, z);
        std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return grid;
}

template <typename DirectedFn>
std::optional<double> symmetric_p95(const SegMask& pred, const SegMask& gt, DirectedFn directed) {
    expect_same_dims("hd95", pred, gt);
    const bool pe = pred.count() == 0, ge = gt.count() == 0;
    if (pe && ge) return 0.0;
    if (pe || ge) return std::nullopt;
    const auto bp = boundary_points(pred);
    const auto bg = boundary_points(gt);
    auto d_pg = directed(bp, bg);
    auto d_gp = directed(bg, bp);
    return std::max(percentile(d_pg, 0.95), percentile(d_gp, 0.95));
}

}  // namespace

std::size_t SegMask::count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

SegMask SegMask::from_image(const Image& image, float threshold) {
    SegMask m(image.height, image.width);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x) m.at(y, x) = image.at(0, y, x) >= threshold ? 1 : 0;
    return m;
}

Image SegMask::to_image() const {
    Image img(1, height, width);
    for (std::size_t i = 0; i < bits.size(); ++i) img.data[i] = bits[i] ? 1.0f : 0.0f;
    return img;
}

double dice_score(const SegMask& pred, const SegMask& gt) {
    expect_same_dims("dice_score", pred, gt);
    const std::size_t p = pred.count(), g = gt.count();
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(overlap(pred, gt)) / static_cast<double>(p + g);
}

double iou_score(const SegMask& pred, const SegMask& gt) {
    expect_same_dims("iou_score", pred, gt);
    const std::size_t inter = overlap(pred, gt);
    const std::size_t uni = pred.count() + gt.count() - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::pair<int, int>> boundary_points(const SegMask& mask) {
    std::vector<std::pair<int, int>> pts;
    const int h = static_cast<int>(mask.height), w = static_cast<int>(mask.width);
    auto fg = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1))) pts.emplace_back(y, x);
    return pts;
}

double percentile(std::vector<double>& values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty sample");
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> hd95(const SegMask& pred, const SegMask& gt) {
    const std::size_t h = pred.height, w = pred.width;
    return symmetric_p95(pred, gt, [h, w](const auto& from, const auto& to) {
        const auto field = squared_edt(to, h, w);
        std::vector<double> d;
        d.reserve(from.size());
        for (auto [y, x] : from) d.push_back(std::sqrt(field[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)]));
        return d;
    });
}

std::optional<double> hd95_oracle(const SegMask& pred, const SegMask& gt) {
    return symmetric_p95(pred, gt, [](const auto& from, const auto& to) {
        std::vector<double> d;
        d.reserve(from.size());
        for (auto [y, x] : from) {
            long long best = std::numeric_limits<long long>::max();
            for (auto [v, u] : to) {
                const long long dy = y - v, dx = x - u;
                best = std::min(best, dy * dy + dx * dx);
            }
            d.push_back(std::sqrt(static_cast<double>(best)));
        }
        return d;
    });
}

void MetricReport::add(std::string name, const SegMask& pred, const SegMask& gt) {
    rows.push_back({std::move(name), dice_score(pred, gt), iou_score(pred, gt), hd95(pred, gt)});
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    return percentile(v, 0.5);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

MetricSummary MetricReport::summary() const {
    MetricSummary s;
    std::vector<double> dice, iou, hd;
    for (const auto& r : rows) {
        dice.push_back(r.dice);
        iou.push_back(r.iou);
        if (r.hd95) {
            hd.push_back(*r.hd95);
        } else {
            ++s.hd95_undefined;
        }
    }
    s.images = rows.size();
    s.mean_dice = mean_of(dice);
    s.median_dice = median_of(dice);
    s.mean_iou = mean_of(iou);
    s.median_iou = median_of(iou);
    s.mean_hd95 = mean_of(hd);
    s.median_hd95 = median_of(hd);
    return s;
}

std::string MetricReport::to_text() const {
    std::size_t name_w = 6;
    for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s\n", static_cast<int>(name_w), "image", "dice", "iou", "hd95");
    os << buf;
    for (const auto& r : rows) {
        const std::string hd = r.hd95 ? std::to_string(*r.hd95) : std::string("undefined");
        std::snprintf(buf, sizeof buf, "%-*s %10.6f %10.6f %10s\n", static_cast<int>(name_w), r.name.c_str(), r.dice,
                      r.iou, hd.c_str());
        os << buf;
    }
    const auto s = summary();
    std::snprintf(buf, sizeof buf, "%-*s %10.6f %10.6f %10.6f\n", static_cast<int>(name_w), "mean", s.mean_dice,
                  s.mean_iou, s.mean_hd95);
    os << buf;
    std::snprintf(buf, sizeof buf, "%-*s %10.6f %10.6f %10.6f\n", static_cast<int>(name_w), "median", s.median_dice,
                  s.median_iou, s.median_hd95);
    os << buf;
    os << "images " << s.images << ", hd95 undefined " << s.hd95_undefined << '\n';
    return os.str();
}

std::string MetricReport::to_json(const std::string& config) const {
    nlohmann::json doc;
    doc["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row{{"name", r.name}, {"dice", r.dice}, {"iou", r.iou}};
        row["hd95"] = r.hd95 ? nlohmann::json(*r.hd95) : nlohmann::json(nullptr);
        doc["rows"].push_back(row);
    }
    const auto s = summary();
    doc["summary"] = {{"images", s.images},         {"hd95_undefined", s.hd95_undefined},
                      {"mean_dice", s.mean_dice},   {"median_dice", s.median_dice},
                      {"mean_iou", s.mean_iou},     {"median_iou", s.median_iou},
                      {"mean_hd95", s.mean_hd95},   {"median_hd95", s.median_hd95}};
    if (!config.empty()) doc["config"] = config;
    return doc.dump(2);
}

}  // namespace lssltc
