// 2D instance label map (0 = background) and the connected-component
// machinery shared by the merge pipeline, the scene generator and the
// evaluation metrics. Components use 4-connectivity throughout.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace pruneseg {

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<uint32_t> labels;  // row-major

    LabelMap() = default;
    LabelMap(int h, int w) : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

    uint32_t& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
    uint32_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return labels.size(); }

    uint32_t max_label() const {
        uint32_t m = 0;
        for (uint32_t v : labels) m = std::max(m, v);
        return m;
    }

    // Pixel counts indexed by label, [0] = background.
    std::vector<long> areas() const {
        std::vector<long> a(max_label() + 1, 0);
        for (uint32_t v : labels) ++a[v];
        return a;
    }

    bool operator==(const LabelMap& o) const {
        return height == o.height && width == o.width && labels == o.labels;
    }
};

// 4-connected components of the pixels where keep(index) is true, labelled
// 1..K in raster discovery order.
template <class Pred>
inline LabelMap connected_components(int height, int width, Pred keep) {
    LabelMap out(height, width);
    std::vector<int> stack;
    uint32_t next = 0;
    for (int sy = 0; sy < height; ++sy) {
        for (int sx = 0; sx < width; ++sx) {
            const int si = sy * width + sx;
            if (!keep(si) || out.labels[si] != 0) continue;
            out.labels[si] = ++next;
            stack.assign(1, si);
            while (!stack.empty()) {
                const int i = stack.back();
                stack.pop_back();
                const int y = i / width, x = i % width;
                const int ny[4] = {y - 1, y + 1, y, y};
                const int nx[4] = {x, x, x - 1, x + 1};
                for (int d = 0; d < 4; ++d) {
                    if (ny[d] < 0 || ny[d] >= height || nx[d] < 0 || nx[d] >= width) continue;
                    const int j = ny[d] * width + nx[d];
                    if (keep(j) && out.labels[j] == 0) {
                        out.labels[j] = next;
                        stack.push_back(j);
                    }
                }
            }
        }
    }
    return out;
}

// Renumber positive labels to consecutive 1..K, ascending by original label.
inline LabelMap relabel_compact(const LabelMap& lm) {
    std::map<uint32_t, uint32_t> remap;
    for (uint32_t v : lm.labels)
        if (v != 0) remap.emplace(v, 0);
    uint32_t next = 0;
    for (auto& [old_label, fresh] : remap) fresh = ++next;
    LabelMap out(lm.height, lm.width);
    for (size_t i = 0; i < lm.size(); ++i)
        if (lm.labels[i] != 0) out.labels[i] = remap.at(lm.labels[i]);
    return out;
}

}  // namespace pruneseg
