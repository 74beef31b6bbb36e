#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "pruneseg/metrics.hpp"

using namespace pruneseg;

namespace {

LabelMap from_rows(const std::vector<std::vector<uint32_t>>& rows) {
    LabelMap lm(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int y = 0; y < lm.height; ++y)
        for (int x = 0; x < lm.width; ++x) lm.at(y, x) = rows[y][x];
    return lm;
}

LabelMap permute_labels(const LabelMap& lm, std::mt19937_64& rng) {
    const uint32_t k = lm.max_label();
    std::vector<uint32_t> perm(k + 1);
    for (uint32_t i = 0; i <= k; ++i) perm[i] = i;
    std::shuffle(perm.begin() + 1, perm.end(), rng);
    LabelMap out = lm;
    for (uint32_t& v : out.labels) v = perm[v];
    return out;
}

}  // namespace

TEST_CASE("dice on binary masks") {
    Tensor a({4, 4}), b({4, 4});
    REQUIRE(dice(a, b) == 1.0);  // both empty

    for (int i = 0; i < 4; ++i) a.data[i] = 1.0f;
    REQUIRE(dice(a, a) == 1.0);

    for (int i = 8; i < 12; ++i) b.data[i] = 1.0f;
    REQUIRE(dice(a, b) == 0.0);  // disjoint

    b = Tensor({4, 4});
    b.data[2] = b.data[3] = b.data[4] = b.data[5] = 1.0f;  // |a|=|b|=4, overlap 2
    REQUIRE(dice(a, b) == 0.5);
    REQUIRE_THROWS_AS(dice(a, Tensor({2, 8})), ShapeError);
}

TEST_CASE("mse matches a scalar loop") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Tensor a({6, 6}), b({6, 6});
    for (float& v : a.data) v = u(rng);
    for (float& v : b.data) v = u(rng);
    REQUIRE(mse(a, a) == 0.0);

    double ref = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        ref += d * d;
    }
    REQUIRE(mse(a, b) == ref / a.size());

    Tensor c = a;
    for (float& v : c.data) v += 0.3f;
    REQUIRE(mse(a, c) == Catch::Approx(0.09).epsilon(1e-5));
}

TEST_CASE("iou_matrix basics") {
    const LabelMap one = from_rows({{1, 1}, {1, 0}});
    const IouMatrix same = iou_matrix(one, one);
    REQUIRE(same.kg == 1);
    REQUIRE(same.kp == 1);
    REQUIRE(same.iou(0, 0) == 1.0);

    const LabelMap other = from_rows({{0, 0}, {0, 2}});
    const IouMatrix disjoint = iou_matrix(one, other);
    REQUIRE(disjoint.iou(0, 0) == 0.0);
}

TEST_CASE("iou_matrix equals per-pair set algebra on random maps") {
    std::mt19937_64 rng(72);
    for (int rep = 0; rep < 10; ++rep) {
        const LabelMap gt = oracle::random_labelmap(rng, 16, 16, 4);
        const LabelMap pred = oracle::random_labelmap(rng, 16, 16, 4);
        const IouMatrix m = iou_matrix(gt, pred);
        const auto gsets = oracle::pixel_sets(gt);
        const auto psets = oracle::pixel_sets(pred);
        REQUIRE(m.kg == static_cast<int>(gsets.size()));
        REQUIRE(m.kp == static_cast<int>(psets.size()));
        // compare via first-pixel identity to be label-order independent
        for (int g = 0; g < m.kg; ++g)
            for (int p = 0; p < m.kp; ++p) {
                const auto& gs = *std::find_if(gsets.begin(), gsets.end(), [&](const auto& s) {
                    return *s.begin() == m.gt_first[g];
                });
                const auto& ps = *std::find_if(psets.begin(), psets.end(), [&](const auto& s) {
                    return *s.begin() == m.pred_first[p];
                });
                const long inter = oracle::inter_size(gs, ps);
                REQUIRE(m.inter_at(g, p) == inter);
            }
    }
}

TEST_CASE("aji trivial cases") {
    const LabelMap a = from_rows({{1, 1, 0}, {0, 0, 0}, {0, 2, 2}});
    REQUIRE(aji(a, a) == 1.0);

    std::mt19937_64 rng(73);
    REQUIRE(aji(a, permute_labels(a, rng)) == 1.0);

    const LabelMap empty(3, 3);
    REQUIRE(aji(a, empty) == 0.0);
    REQUIRE(aji(empty, empty) == 1.0);
    REQUIRE_THROWS_AS(aji(a, LabelMap(2, 2)), ShapeError);
}

TEST_CASE("aji pinned worked example evaluates to 0.4") {
    // G1 = {(0,0),(0,1)}, G2 = {(2,2),(3,2)}; P1 = {(0,0)}, P2 = {(2,2),(2,3)}.
    // G1 takes P1: C += 1, U += 2. G2 takes P2: C += 1, U += 3.
    // AJI = (1+1)/(2+3) = 0.4.
    LabelMap gt(4, 4), pred(4, 4);
    gt.at(0, 0) = 1;
    gt.at(0, 1) = 1;
    gt.at(2, 2) = 2;
    gt.at(3, 2) = 2;
    pred.at(0, 0) = 1;
    pred.at(2, 2) = 2;
    pred.at(2, 3) = 2;
    REQUIRE(aji(gt, pred) == 0.4);
    REQUIRE(oracle::aji(gt, pred) == 0.4);
}

TEST_CASE("aji consumes each prediction at most once") {
    // one prediction spanning two ground-truth instances: the second GT has
    // nothing left and contributes its own area to the union
    const LabelMap gt = from_rows({{1, 1, 0, 2, 2}});
    const LabelMap pred = from_rows({{3, 3, 3, 3, 3}});
    // G1 takes P (inter 2, union 5): C=2, U=5; G2 has none left: U += 2
    REQUIRE(aji(gt, pred) == Catch::Approx(2.0 / 7.0));
    REQUIRE(oracle::aji(gt, pred) == Catch::Approx(2.0 / 7.0));
}

TEST_CASE("pq trivial and threshold-edge cases") {
    const LabelMap a = from_rows({{1, 1, 0}, {1, 1, 0}, {0, 0, 2}});
    const PqResult same = pq(a, a);
    REQUIRE(same.pq == 1.0);
    REQUIRE(same.dq == 1.0);
    REQUIRE(same.sq == 1.0);
    REQUIRE(same.tp == 2);

    // IoU exactly 0.5 is not a match (strict inequality)
    const LabelMap gt = from_rows({{1, 1, 1, 1}});
    const LabelMap half = from_rows({{1, 1, 0, 0}});
    REQUIRE(iou_matrix(gt, half).iou(0, 0) == 0.5);
    const PqResult r = pq(gt, half);
    REQUIRE(r.tp == 0);
    REQUIRE(r.pq == 0.0);

    const PqResult empty = pq(LabelMap(2, 2), LabelMap(2, 2));
    REQUIRE(empty.pq == 1.0);
}

TEST_CASE("pq closed form: one match at IoU 0.6 plus one missed instance") {
    // G1 10px matched by P1 with inter 6, union 10 (IoU 0.6); G2 unmatched.
    LabelMap gt(4, 8), pred(4, 8);
    for (int x = 0; x < 5; ++x) gt.at(0, x) = 1;
    for (int x = 0; x < 5; ++x) gt.at(1, x) = 1;
    for (int x = 0; x < 3; ++x) pred.at(0, x) = 1;
    for (int x = 0; x < 3; ++x) pred.at(1, x) = 1;
    gt.at(3, 7) = 2;
    const IouMatrix m = iou_matrix(gt, pred);
    REQUIRE(m.iou(0, 0) == 0.6);
    const PqResult r = pq(gt, pred);
    REQUIRE(r.tp == 1);
    REQUIRE(r.fn == 1);
    REQUIRE(r.fp == 0);
    REQUIRE(r.pq == Catch::Approx(0.6 / 1.5));
    REQUIRE(r.dq == Catch::Approx(1.0 / 1.5));
    REQUIRE(r.sq == Catch::Approx(0.6));
}

TEST_CASE("aji and pq match the set-algebra oracles on random pairs") {
    std::mt19937_64 rng(74);
    for (int rep = 0; rep < 40; ++rep) {
        const LabelMap gt = oracle::random_labelmap(rng, 20, 20, 5);
        const LabelMap pred = oracle::random_labelmap(rng, 20, 20, 5);
        REQUIRE(aji(gt, pred) == oracle::aji(gt, pred));
        const PqResult mine = pq(gt, pred);
        const oracle::PqOracle ref = oracle::pq(gt, pred);
        REQUIRE(ref.unique);
        REQUIRE(mine.pq == ref.pq);
        REQUIRE(mine.dq == ref.dq);
        REQUIRE(mine.sq == ref.sq);
        REQUIRE(mine.tp == ref.tp);
    }
}

TEST_CASE("aji and pq are invariant under relabelling either argument") {
    std::mt19937_64 rng(75);
    for (int rep = 0; rep < 25; ++rep) {
        const LabelMap gt = oracle::random_labelmap(rng, 18, 18, 5);
        const LabelMap pred = oracle::random_labelmap(rng, 18, 18, 5);
        const LabelMap gt2 = permute_labels(gt, rng);
        const LabelMap pred2 = permute_labels(pred, rng);
        REQUIRE(aji(gt, pred) == aji(gt2, pred2));
        REQUIRE(pq(gt, pred).pq == pq(gt2, pred2).pq);
    }
}

TEST_CASE("aji ranges and identity characterisation") {
    std::mt19937_64 rng(76);
    for (int rep = 0; rep < 25; ++rep) {
        const LabelMap gt = oracle::random_labelmap(rng, 16, 16, 4);
        const LabelMap pred = oracle::random_labelmap(rng, 16, 16, 4);
        const double v = aji(gt, pred);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        if (v == 1.0) {
            // partitions must be identical up to labels: every pixel pair
            // grouped the same way
            const LabelMap cg = relabel_compact(gt);
            for (size_t i = 0; i < cg.size(); ++i)
                REQUIRE((gt.labels[i] != 0) == (pred.labels[i] != 0));
        }
    }
}
