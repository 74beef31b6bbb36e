// Evaluation metrics: Dice and MSE for the branch outputs, Aggregated
// Jaccard Index and Panoptic Quality for instance masks.
//
// AJI matching is pinned for reproducibility: ground-truth instances are
// processed in order of their first raster pixel; each consumes the unused
// prediction with the highest IoU (ties -> prediction with the smaller
// first pixel). A ground truth with no overlapping prediction left adds its
// own area to the union; never-used predictions add theirs at the end.
// Keying the order on pixel geometry rather than on label values makes both
// aji and pq exactly invariant under relabelling of either argument.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pruneseg/labelmap.hpp"
#include "pruneseg/tensor.hpp"

namespace pruneseg {

// Dice over binary masks (nonzero = foreground); two empty masks match.
inline double dice(const Tensor& a, const Tensor& b) {
    require_shape(b, a.shape, "dice");
    long na = 0, nb = 0, inter = 0;
    for (int i = 0; i < a.size(); ++i) {
        const bool fa = a.data[i] != 0.0f, fb = b.data[i] != 0.0f;
        na += fa;
        nb += fb;
        inter += fa && fb;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

inline double mse(const Tensor& a, const Tensor& b) {
    require_shape(b, a.shape, "mse");
    double sum = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

namespace detail {

inline void require_same_grid(const LabelMap& gt, const LabelMap& pred, const char* what) {
    if (gt.height != pred.height || gt.width != pred.width)
        throw ShapeError(std::string(what) + ": label maps " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width) + " vs " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width));
}

}  // namespace detail

// Joint pixel counts between every (gt, pred) instance pair, one pass.
// Instances are indexed 0..K-1 in ascending original label order; first_pixel
// records each instance's first raster position.
struct IouMatrix {
    int kg = 0, kp = 0;
    std::vector<long> gt_area, pred_area;
    std::vector<long> inter;  // kg x kp, row-major
    std::vector<int> gt_first, pred_first;

    long inter_at(int g, int p) const { return inter[static_cast<size_t>(g) * kp + p]; }
    long union_at(int g, int p) const { return gt_area[g] + pred_area[p] - inter_at(g, p); }
    double iou(int g, int p) const {
        const long u = union_at(g, p);
        return u == 0 ? 0.0 : static_cast<double>(inter_at(g, p)) / static_cast<double>(u);
    }
};

inline IouMatrix iou_matrix(const LabelMap& gt, const LabelMap& pred) {
    detail::require_same_grid(gt, pred, "iou_matrix");
    const LabelMap g = relabel_compact(gt), p = relabel_compact(pred);
    IouMatrix m;
    m.kg = static_cast<int>(g.max_label());
    m.kp = static_cast<int>(p.max_label());
    m.gt_area.assign(m.kg, 0);
    m.pred_area.assign(m.kp, 0);
    m.inter.assign(static_cast<size_t>(m.kg) * m.kp, 0);
    m.gt_first.assign(m.kg, -1);
    m.pred_first.assign(m.kp, -1);
    for (size_t i = 0; i < g.size(); ++i) {
        const uint32_t gl = g.labels[i], pl = p.labels[i];
        if (gl != 0) {
            ++m.gt_area[gl - 1];
            if (m.gt_first[gl - 1] < 0) m.gt_first[gl - 1] = static_cast<int>(i);
        }
        if (pl != 0) {
            ++m.pred_area[pl - 1];
            if (m.pred_first[pl - 1] < 0) m.pred_first[pl - 1] = static_cast<int>(i);
        }
        if (gl != 0 && pl != 0) ++m.inter[static_cast<size_t>(gl - 1) * m.kp + (pl - 1)];
    }
    return m;
}

inline double aji(const LabelMap& gt, const LabelMap& pred) {
    detail::require_same_grid(gt, pred, "aji");
    const IouMatrix m = iou_matrix(gt, pred);
    if (m.kg == 0 && m.kp == 0) return 1.0;

    std::vector<int> gt_order(m.kg);
    std::iota(gt_order.begin(), gt_order.end(), 0);
    std::sort(gt_order.begin(), gt_order.end(),
              [&](int a, int b) { return m.gt_first[a] < m.gt_first[b]; });

    std::vector<uint8_t> used(m.kp, 0);
    long c = 0, u = 0;
    for (int g : gt_order) {
        int best = -1;
        double best_iou = 0.0;
        for (int p = 0; p < m.kp; ++p) {
            if (used[p] || m.inter_at(g, p) == 0) continue;
            const double v = m.iou(g, p);
            if (best < 0 || v > best_iou ||
                (v == best_iou && m.pred_first[p] < m.pred_first[best])) {
                best = p;
                best_iou = v;
            }
        }
        if (best < 0) {
            u += m.gt_area[g];
        } else {
            used[best] = 1;
            c += m.inter_at(g, best);
            u += m.union_at(g, best);
        }
    }
    for (int p = 0; p < m.kp; ++p)
        if (!used[p]) u += m.pred_area[p];
    return u == 0 ? 1.0 : static_cast<double>(c) / static_cast<double>(u);
}

struct PqResult {
    double pq = 0.0;
    double dq = 0.0;  // detection quality
    double sq = 0.0;  // segmentation quality (mean matched IoU)
    int tp = 0, fp = 0, fn = 0;
};

// Matches are pairs with IoU strictly above the threshold; at 0.5 the
// matching is provably unique per instance (asserted).
inline PqResult pq(const LabelMap& gt, const LabelMap& pred, double iou_threshold = 0.5) {
    detail::require_same_grid(gt, pred, "pq");
    const IouMatrix m = iou_matrix(gt, pred);
    PqResult r;
    if (m.kg == 0 && m.kp == 0) {
        r.pq = r.dq = r.sq = 1.0;
        return r;
    }
    std::vector<uint8_t> gt_used(m.kg, 0), pred_used(m.kp, 0);
    double iou_sum = 0.0;
    for (int g = 0; g < m.kg; ++g)
        for (int p = 0; p < m.kp; ++p)
            if (m.iou(g, p) > iou_threshold) {
                if (gt_used[g] || pred_used[p])
                    throw std::logic_error("pq: non-unique matching at threshold " +
                                           std::to_string(iou_threshold));
                gt_used[g] = pred_used[p] = 1;
                iou_sum += m.iou(g, p);
                ++r.tp;
            }
    r.fn = m.kg - r.tp;
    r.fp = m.kp - r.tp;
    const double denom = r.tp + 0.5 * r.fp + 0.5 * r.fn;
    r.dq = denom == 0.0 ? 0.0 : r.tp / denom;
    r.sq = r.tp == 0 ? 0.0 : iou_sum / r.tp;
    r.pq = denom == 0.0 ? 0.0 : iou_sum / denom;
    return r;
}

// One results row; feeds the sweep CSV.
struct MetricsReport {
    std::string run_id;
    std::string branch;  // seg | reg | eval
    std::string method;  // layerwise | networkwide | labelmap
    int cr = 1;
    double sparsity = 0.0;
    double dice = 0.0;
    double mse = 0.0;
    double aji = 0.0;
    double pq = 0.0;
    double speedup = 1.0;
};

}  // namespace pruneseg
