// Instance mask construction from the two branch outputs: estimate the
// average nucleus area from the segmentation probabilities, smooth the
// predicted distance map with a Gaussian sized from that area, take local
// maxima as seeds, grow a marker-controlled watershed inside the foreground
// mask, then drop tiny objects and fill enclosed holes.
#pragma once

#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "pruneseg/labelmap.hpp"
#include "pruneseg/tensor.hpp"

namespace pruneseg {

struct MergeConfig {
    float seg_threshold = 0.5f;
    int min_area = 30;
    float maxima_rel_threshold = 0.1f;
    float sigma_scale = 0.5f;

    void validate() const {
        if (!(seg_threshold > 0.0f && seg_threshold < 1.0f))
            throw std::invalid_argument("merge: seg_threshold must lie in (0,1)");
        if (min_area < 0) throw std::invalid_argument("merge: min_area must be >= 0");
        if (sigma_scale <= 0.0f) throw std::invalid_argument("merge: sigma_scale must be > 0");
    }
};

namespace detail {

// Accepts [H,W] or [1,H,W].
inline std::pair<int, int> plane_dims(const Tensor& t, const char* what) {
    if (t.shape.size() == 2) return {t.dim(0), t.dim(1)};
    if (t.shape.size() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
    throw ShapeError(std::string(what) + ": expected a single-channel 2D map");
}

inline int reflect_index(int i, int n) {  // half-sample symmetric
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace detail

// Threshold the probability map, take 4-connected components, and average
// the areas of components of at least min_area pixels. Falls back to 100
// when nothing qualifies, so downstream sizing is always defined.
inline double estimate_avg_nucleus_area(const Tensor& seg_prob, float threshold,
                                        int min_area = 30) {
    const auto [h, w] = detail::plane_dims(seg_prob, "estimate_avg_nucleus_area");
    const float* p = seg_prob.data.data();
    LabelMap comps = connected_components(h, w, [&](int i) { return p[i] > threshold; });
    const std::vector<long> areas = comps.areas();
    long sum = 0, n = 0;
    for (size_t label = 1; label < areas.size(); ++label)
        if (areas[label] >= min_area) { sum += areas[label]; ++n; }
    if (n == 0) return 100.0;
    return static_cast<double>(sum) / static_cast<double>(n);
}

// Separable Gaussian with sigma = sigma_scale * sqrt(avg_area / pi) (half the
// equivalent-disk radius at the default scale), kernel width 2*ceil(3*sigma)+1,
// normalised to sum 1, half-sample reflect padding (sum preserving).
inline Tensor gaussian_smooth(const Tensor& dist, double avg_area, float sigma_scale = 0.5f) {
    if (avg_area <= 0.0) throw std::invalid_argument("gaussian_smooth: avg_area must be > 0");
    const auto [h, w] = detail::plane_dims(dist, "gaussian_smooth");
    const double sigma = sigma_scale * std::sqrt(avg_area / M_PI);
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * r + 1);
    double ksum = 0.0;
    for (int i = -r; i <= r; ++i) {
        kernel[i + r] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        ksum += kernel[i + r];
    }
    for (double& k : kernel) k /= ksum;

    std::vector<double> rows(dist.data.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i)
                s += kernel[i + r] *
                     dist.data[static_cast<size_t>(y) * w + detail::reflect_index(x + i, w)];
            rows[static_cast<size_t>(y) * w + x] = s;
        }
    Tensor out = dist;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -r; i <= r; ++i)
                s += kernel[i + r] * rows[static_cast<size_t>(detail::reflect_index(y + i, h)) * w + x];
            out.data[static_cast<size_t>(y) * w + x] = static_cast<float>(s);
        }
    return out;
}

struct Seed {
    int y = 0;
    int x = 0;
};

// A pixel is a candidate when its value is >= all 8 neighbours and exceeds
// rel_threshold * global max. 8-adjacent candidate plateaus merge into one
// seed at the plateau's lexicographically smallest coordinate.
inline std::vector<Seed> find_local_maxima(const Tensor& smoothed, float rel_threshold = 0.1f) {
    const auto [h, w] = detail::plane_dims(smoothed, "find_local_maxima");
    const float* v = smoothed.data.data();
    float gmax = v[0];
    for (size_t i = 1; i < smoothed.data.size(); ++i) gmax = std::max(gmax, v[i]);
    const float cut = rel_threshold * gmax;

    std::vector<uint8_t> candidate(smoothed.data.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float c = v[static_cast<size_t>(y) * w + x];
            if (!(c > cut)) continue;
            bool ok = true;
            for (int oy = -1; oy <= 1 && ok; ++oy)
                for (int ox = -1; ox <= 1 && ok; ++ox) {
                    if (oy == 0 && ox == 0) continue;
                    const int yy = y + oy, xx = x + ox;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (v[static_cast<size_t>(yy) * w + xx] > c) ok = false;
                }
            candidate[static_cast<size_t>(y) * w + x] = ok;
        }

    // 8-connected plateau grouping; raster discovery pixel is the lex-min.
    std::vector<Seed> seeds;
    std::vector<uint8_t> seen(candidate.size(), 0);
    std::vector<int> stack;
    for (int sy = 0; sy < h; ++sy)
        for (int sx = 0; sx < w; ++sx) {
            const int si = sy * w + sx;
            if (!candidate[si] || seen[si]) continue;
            seeds.push_back({sy, sx});
            seen[si] = 1;
            stack.assign(1, si);
            while (!stack.empty()) {
                const int i = stack.back();
                stack.pop_back();
                const int y = i / w, x = i % w;
                for (int oy = -1; oy <= 1; ++oy)
                    for (int ox = -1; ox <= 1; ++ox) {
                        const int yy = y + oy, xx = x + ox;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        const int j = yy * w + xx;
                        if (candidate[j] && !seen[j]) { seen[j] = 1; stack.push_back(j); }
                    }
            }
        }
    return seeds;
}

struct WatershedResult {
    LabelMap labels;
    int dropped_seeds = 0;  // seeds that fell outside the foreground
};

// Priority flood ascending on negated values (highest first), restricted to
// the foreground, 4-connected growth. Equal priorities resolve by (smaller
// label, then lexicographic pixel order). Foreground unreachable from any
// seed stays background.
inline WatershedResult watershed(const Tensor& smoothed, const std::vector<Seed>& seeds,
                                 const Tensor& foreground) {
    const auto [h, w] = detail::plane_dims(smoothed, "watershed");
    const auto [fh, fw] = detail::plane_dims(foreground, "watershed foreground");
    if (fh != h || fw != w)
        throw ShapeError("watershed: foreground " + std::to_string(fh) + "x" + std::to_string(fw) +
                         " does not match map " + std::to_string(h) + "x" + std::to_string(w));
    const float* val = smoothed.data.data();
    const float* fg = foreground.data.data();

    WatershedResult res;
    res.labels = LabelMap(h, w);
    using Item = std::tuple<float, uint32_t, int>;  // (-value, label, pixel)
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;

    uint32_t next = 0;
    for (const Seed& s : seeds) {
        const int i = s.y * w + s.x;
        if (s.y < 0 || s.y >= h || s.x < 0 || s.x >= w || !(fg[i] > 0.5f)) {
            ++res.dropped_seeds;
            continue;
        }
        heap.emplace(-val[i], ++next, i);
    }

    while (!heap.empty()) {
        const auto [negv, label, i] = heap.top();
        heap.pop();
        if (res.labels.labels[i] != 0) continue;
        res.labels.labels[i] = label;
        const int y = i / w, x = i % w;
        const int ny[4] = {y - 1, y + 1, y, y};
        const int nx[4] = {x, x, x - 1, x + 1};
        for (int d = 0; d < 4; ++d) {
            if (ny[d] < 0 || ny[d] >= h || nx[d] < 0 || nx[d] >= w) continue;
            const int j = ny[d] * w + nx[d];
            if (res.labels.labels[j] == 0 && fg[j] > 0.5f) heap.emplace(-val[j], label, j);
        }
    }
    return res;
}

// Instances below min_area become background; survivors renumber to 1..K
// preserving label order.
inline LabelMap remove_small_objects(const LabelMap& lm, int min_area) {
    const std::vector<long> areas = lm.areas();
    LabelMap out = lm;
    for (uint32_t& v : out.labels)
        if (v != 0 && areas[v] < min_area) v = 0;
    return relabel_compact(out);
}

// Background components (4-connected) that do not touch the image border and
// are adjacent to exactly one instance are absorbed into that instance.
inline LabelMap fill_holes(const LabelMap& lm) {
    const int h = lm.height, w = lm.width;
    LabelMap bg = connected_components(h, w, [&](int i) { return lm.labels[i] == 0; });
    const uint32_t ncomp = bg.max_label();
    if (ncomp == 0) return lm;

    std::vector<uint8_t> touches_border(ncomp + 1, 0);
    std::vector<uint32_t> owner(ncomp + 1, 0);        // adjacent instance label
    std::vector<uint8_t> multi_owner(ncomp + 1, 0);   // bordered by >1 instance
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const uint32_t c = bg.at(y, x);
            if (c == 0) continue;
            if (y == 0 || y == h - 1 || x == 0 || x == w - 1) touches_border[c] = 1;
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int d = 0; d < 4; ++d) {
                if (ny[d] < 0 || ny[d] >= h || nx[d] < 0 || nx[d] >= w) continue;
                const uint32_t label = lm.at(ny[d], nx[d]);
                if (label == 0) continue;
                if (owner[c] == 0) owner[c] = label;
                else if (owner[c] != label) multi_owner[c] = 1;
            }
        }

    LabelMap out = lm;
    for (int i = 0; i < h * w; ++i) {
        const uint32_t c = bg.labels[i];
        if (c != 0 && !touches_border[c] && !multi_owner[c] && owner[c] != 0)
            out.labels[i] = owner[c];
    }
    return out;
}

// Full pipeline. Stage order: area estimate -> smooth -> maxima -> watershed
// -> remove small -> fill holes.
inline LabelMap merge(const Tensor& seg_prob, const Tensor& dist_pred, const MergeConfig& cfg) {
    cfg.validate();
    const auto [h, w] = detail::plane_dims(seg_prob, "merge seg_prob");
    const auto [dh, dw] = detail::plane_dims(dist_pred, "merge dist_pred");
    if (dh != h || dw != w)
        throw ShapeError("merge: seg " + std::to_string(h) + "x" + std::to_string(w) +
                         " vs dist " + std::to_string(dh) + "x" + std::to_string(dw));

    Tensor fg({h, w});
    for (int i = 0; i < h * w; ++i) fg.data[i] = seg_prob.data[i] > cfg.seg_threshold ? 1.0f : 0.0f;

    const double avg_area = estimate_avg_nucleus_area(seg_prob, cfg.seg_threshold, cfg.min_area);
    const Tensor smoothed = gaussian_smooth(dist_pred, avg_area, cfg.sigma_scale);
    const std::vector<Seed> seeds = find_local_maxima(smoothed, cfg.maxima_rel_threshold);
    WatershedResult ws = watershed(smoothed, seeds, fg);
    return fill_holes(remove_small_objects(ws.labels, cfg.min_area));
}

}  // namespace pruneseg
