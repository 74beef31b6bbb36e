// Deterministic synthetic nuclei scenes: darker-than-background ellipse
// blobs with additive Gaussian noise, instance labels, binary masks and
// per-instance-normalised Euclidean distance targets. A "shifted" variant
// with denser, smaller, possibly touching blobs serves as the
// distribution-shift test set.
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "pruneseg/labelmap.hpp"
#include "pruneseg/tensor.hpp"

namespace pruneseg {

enum class Distribution { base, shifted };

struct SceneConfig {
    int height = 64;
    int width = 64;
    int min_blobs = 3;
    int max_blobs = 6;
    float min_radius = 4.0f;   // semi-minor axis, pixels
    float max_radius = 6.5f;
    float max_eccentricity = 1.35f;  // semi-major = semi-minor * ecc
    float noise_sigma = 0.05f;
    Distribution distribution = Distribution::base;
    // Base blobs keep a 1 px background gap (8-neighbourhood); shifted blobs
    // may touch, which stresses the watershed split.
    bool allow_touching = false;
    uint64_t seed = 0;

    static SceneConfig base_default(uint64_t seed) {
        SceneConfig c;
        c.seed = seed;
        return c;
    }
    static SceneConfig shifted_default(uint64_t seed) {
        SceneConfig c;
        c.distribution = Distribution::shifted;
        c.min_blobs = 7;
        c.max_blobs = 11;
        c.min_radius = 3.5f;
        c.max_radius = 5.5f;
        c.noise_sigma = 0.07f;
        c.allow_touching = true;
        c.seed = seed;
        return c;
    }
};

struct Scene {
    Tensor image;       // [1,H,W] in [0,1]
    LabelMap instances; // 0 = background, 1..K in placement order
    Tensor binary;      // [1,H,W] in {0,1}
    Tensor distance;    // [1,H,W] in [0,1], per-instance peak 1
};

namespace detail {

constexpr double kDtInf = 1e20;

// Felzenszwalb-Huttenlocher 1D squared distance transform (exact on
// integer inputs).
inline void dt1d(std::vector<double>& f, int n, std::vector<int>& v, std::vector<double>& z,
                 std::vector<double>& d) {
    int k = 0;
    v[0] = 0;
    z[0] = -kDtInf;
    z[1] = kDtInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kDtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// Exact squared EDT over a rectangular window: distance from each pixel to
// the nearest site (site[i] true).
inline std::vector<double> squared_edt(const std::vector<uint8_t>& site, int h, int w) {
    std::vector<double> g(static_cast<size_t>(h) * w);
    const int n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = site[static_cast<size_t>(y) * w + x] ? 0.0 : kDtInf;
        dt1d(f, h, v, z, d);
        for (int y = 0; y < h; ++y) g[static_cast<size_t>(y) * w + x] = d[y];
    }
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = g[static_cast<size_t>(y) * w + x];
        dt1d(f, w, v, z, d);
        for (int x = 0; x < w; ++x) out[static_cast<size_t>(y) * w + x] = d[x];
    }
    return out;
}

}  // namespace detail

// Per instance: Euclidean distance of each pixel to the nearest pixel outside
// that instance, divided by the instance maximum. Background stays 0.
inline Tensor make_distance_target(const LabelMap& instances) {
    const int h = instances.height, w = instances.width;
    Tensor out({1, h, w});
    const uint32_t k = instances.max_label();
    for (uint32_t label = 1; label <= k; ++label) {
        int y0 = h, y1 = -1, x0 = w, x1 = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (instances.at(y, x) == label) {
                    y0 = std::min(y0, y); y1 = std::max(y1, y);
                    x0 = std::min(x0, x); x1 = std::max(x1, x);
                }
        if (y1 < 0) continue;
        // Window = bbox expanded by one pixel (clamped): it always contains
        // the nearest non-instance pixel of every instance pixel.
        y0 = std::max(0, y0 - 1); x0 = std::max(0, x0 - 1);
        y1 = std::min(h - 1, y1 + 1); x1 = std::min(w - 1, x1 + 1);
        const int wh = y1 - y0 + 1, ww = x1 - x0 + 1;
        std::vector<uint8_t> site(static_cast<size_t>(wh) * ww);
        for (int y = 0; y < wh; ++y)
            for (int x = 0; x < ww; ++x)
                site[static_cast<size_t>(y) * ww + x] = instances.at(y0 + y, x0 + x) != label;
        const std::vector<double> sq = detail::squared_edt(site, wh, ww);

        double dmax = 0.0;
        for (int y = 0; y < wh; ++y)
            for (int x = 0; x < ww; ++x)
                if (instances.at(y0 + y, x0 + x) == label)
                    dmax = std::max(dmax, sq[static_cast<size_t>(y) * ww + x]);
        if (dmax <= 0.0 || dmax >= detail::kDtInf) {
            // No reachable outside pixel (instance fills the map): flat peak.
            for (int y = 0; y < wh; ++y)
                for (int x = 0; x < ww; ++x)
                    if (instances.at(y0 + y, x0 + x) == label) out.at(0, y0 + y, x0 + x) = 1.0f;
            continue;
        }
        const double norm = std::sqrt(dmax);
        for (int y = 0; y < wh; ++y)
            for (int x = 0; x < ww; ++x)
                if (instances.at(y0 + y, x0 + x) == label)
                    out.at(0, y0 + y, x0 + x) =
                        static_cast<float>(std::sqrt(sq[static_cast<size_t>(y) * ww + x]) / norm);
    }
    return out;
}

inline Scene generate_scene(const SceneConfig& cfg) {
    if (cfg.height < 16 || cfg.width < 16)
        throw std::invalid_argument("generate_scene: canvas must be at least 16x16");
    if (cfg.min_blobs < 1 || cfg.max_blobs < cfg.min_blobs)
        throw std::invalid_argument("generate_scene: bad blob count range");
    if (cfg.min_radius <= 1.0f || cfg.max_radius < cfg.min_radius)
        throw std::invalid_argument("generate_scene: radii must exceed 1");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> blob_count(cfg.min_blobs, cfg.max_blobs);
    std::uniform_real_distribution<float> radius(cfg.min_radius, cfg.max_radius);
    std::uniform_real_distribution<float> ecc(1.0f, cfg.max_eccentricity);
    std::uniform_real_distribution<float> angle(0.0f, static_cast<float>(M_PI));
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    const int h = cfg.height, w = cfg.width;
    Scene scene;
    scene.instances = LabelMap(h, w);
    std::vector<float> blob_intensity;

    const int n_blobs = blob_count(rng);
    for (int bi = 0; bi < n_blobs; ++bi) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            const float b = radius(rng);
            const float a = b * ecc(rng);
            const float th = angle(rng);
            const int margin = static_cast<int>(std::ceil(a)) + 1;
            if (2 * margin + 2 >= std::min(h, w))
                throw std::invalid_argument("generate_scene: blobs cannot fit inside the canvas");
            std::uniform_int_distribution<int> cy_d(margin, h - 1 - margin);
            std::uniform_int_distribution<int> cx_d(margin, w - 1 - margin);
            const int cy = cy_d(rng), cx = cx_d(rng);

            // Candidate support.
            const float ct = std::cos(th), st = std::sin(th);
            std::vector<int> support;
            const int r = margin;
            for (int y = cy - r; y <= cy + r; ++y)
                for (int x = cx - r; x <= cx + r; ++x) {
                    const float dy = static_cast<float>(y - cy), dx = static_cast<float>(x - cx);
                    const float u = dx * ct + dy * st, v = -dx * st + dy * ct;
                    if ((u / a) * (u / a) + (v / b) * (v / b) <= 1.0f)
                        support.push_back(y * w + x);
                }

            bool collides = false;
            const int gap = cfg.allow_touching ? 0 : 1;
            for (int idx : support) {
                const int y = idx / w, x = idx % w;
                for (int oy = -gap; oy <= gap && !collides; ++oy)
                    for (int ox = -gap; ox <= gap && !collides; ++ox) {
                        const int yy = y + oy, xx = x + ox;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        if (scene.instances.at(yy, xx) != 0) collides = true;
                    }
                if (collides) break;
            }
            if (collides) continue;

            const uint32_t label = static_cast<uint32_t>(bi + 1);
            for (int idx : support) scene.instances.labels[idx] = label;
            blob_intensity.push_back(0.3f + 0.25f * unit(rng));
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("generate_scene: could not place blob " + std::to_string(bi + 1) +
                                     " after 200 attempts");
    }

    scene.binary = Tensor({1, h, w});
    scene.image = Tensor({1, h, w});
    std::normal_distribution<float> noise(0.0f, cfg.noise_sigma);
    constexpr float background = 0.85f;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const uint32_t label = scene.instances.at(y, x);
            scene.binary.at(0, y, x) = label != 0 ? 1.0f : 0.0f;
            float v = label != 0 ? blob_intensity[label - 1] : background;
            if (cfg.noise_sigma > 0.0f) v += noise(rng);
            scene.image.at(0, y, x) = std::clamp(v, 0.0f, 1.0f);
        }
    scene.distance = make_distance_target(scene.instances);
    return scene;
}

struct Dataset {
    std::vector<Scene> train;
    std::vector<Scene> test;
    std::vector<uint64_t> train_seeds;
    std::vector<uint64_t> test_seeds;
};

// `count` scenes from per-scene seeds drawn off the master seed, first
// round(count*split) into the training split.
inline Dataset make_dataset(const SceneConfig& cfg, int count, double split) {
    if (count < 2) throw std::invalid_argument("make_dataset: count must be >= 2");
    if (split <= 0.0 || split >= 1.0)
        throw std::invalid_argument("make_dataset: split must lie in (0,1)");
    std::mt19937_64 rng(cfg.seed);
    const int n_train =
        std::clamp(static_cast<int>(std::lround(split * count)), 1, count - 1);
    Dataset ds;
    for (int i = 0; i < count; ++i) {
        SceneConfig sc = cfg;
        sc.seed = rng();
        Scene scene = generate_scene(sc);
        if (i < n_train) {
            ds.train.push_back(std::move(scene));
            ds.train_seeds.push_back(sc.seed);
        } else {
            ds.test.push_back(std::move(scene));
            ds.test_seeds.push_back(sc.seed);
        }
    }
    return ds;
}

}  // namespace pruneseg
