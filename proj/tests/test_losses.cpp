#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/log.hpp"
#include "common/random.hpp"
#include "losses/losses.hpp"
#include "tensor/gradcheck.hpp"

using namespace vos;
using namespace vos::loss;

namespace {

BinaryMask mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) { return BinaryMask(h, w, std::move(v)); }
ProbabilityMap probs(std::size_t h, std::size_t w, std::vector<double> v) { return ProbabilityMap(h, w, std::move(v)); }

BinaryMask random_mask(Rng& rng, std::size_t h, std::size_t w, double p) {
    BinaryMask m(h, w);
    for (auto& v : m.data) v = rng.uniform() < p;
    m[rng.below(m.size())] = 1;
    return m;
}

ProbabilityMap random_probs(Rng& rng, std::size_t h, std::size_t w) {
    ProbabilityMap p(h, w);
    for (auto& v : p.data) v = rng.uniform(0.01, 0.99);
    return p;
}

struct QuietWarnings {
    QuietWarnings() { warnings_enabled() = false; }
    ~QuietWarnings() { warnings_enabled() = true; }
};

} // namespace

TEST_CASE("foreground weight is the background/foreground ratio") {
    BinaryMask m(10, 10);
    for (std::size_t i = 0; i < 10; ++i) m[i] = 1;
    CHECK(foreground_weight(m) == 9.0);
    CHECK(foreground_weight(mask(2, 2, {1, 1, 0, 0})) == 1.0);
    CHECK_THROWS_AS(foreground_weight(BinaryMask(3, 3)), Error);
    QuietWarnings quiet;
    CHECK(foreground_weight(BinaryMask(2, 2, 1)) == 0.0);
}

TEST_CASE("weight map floors degenerate ratios to one") {
    QuietWarnings quiet;
    const auto all_fg = make_weight_map(BinaryMask(2, 2, 1));
    for (double w : all_fg.data) CHECK(w == 1.0);
    const auto all_bg = make_weight_map(BinaryMask(2, 2));
    for (double w : all_bg.data) CHECK(w == 1.0);
    const auto w = make_weight_map(mask(2, 2, {1, 0, 0, 0}));
    CHECK(w.data == std::vector<double>{3, 1, 1, 1});
}

TEST_CASE("weighted CE on the 2x2 example") {
    const auto p = probs(2, 2, {0.9, 0.1, 0.8, 0.2});
    const auto t = mask(2, 2, {1, 0, 1, 0});
    const auto r = weighted_cross_entropy(p, t, make_weight_map(t));
    CHECK(r.value == doctest::Approx(0.164252033486018).epsilon(1e-12));
}

TEST_CASE("weighted CE value and gradient with ratio 3") {
    const auto p = probs(2, 2, {0.9, 0.1, 0.8, 0.2});
    const auto t = mask(2, 2, {1, 0, 0, 0});
    const auto r = weighted_cross_entropy(p, t, make_weight_map(t));
    CHECK(r.value == doctest::Approx(0.56350588159490389).epsilon(1e-12));
    const std::vector<double> g{-0.83333333333333337, 0.27777777777777779, 1.2500000000000002, 0.3125};
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.grad[i] == doctest::Approx(g[i]).epsilon(1e-12));
}

TEST_CASE("uniform half prediction costs ln 2") {
    Rng rng(1);
    const auto t = random_mask(rng, 5, 7, 0.3);
    const auto r = weighted_cross_entropy(ProbabilityMap(5, 7, 0.5), t, uniform_weights(5, 7));
    CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("perfect prediction is effectively free") {
    const auto t = mask(2, 2, {1, 0, 0, 1});
    const auto r = weighted_cross_entropy(probs(2, 2, {1, 0, 0, 1}), t, make_weight_map(t));
    CHECK(r.value <= 2 * kProbEpsilon * std::abs(std::log(kProbEpsilon)));
}

TEST_CASE("clamped pixels carry no gradient") {
    const auto t = mask(1, 2, {1, 0});
    const auto r = weighted_cross_entropy(probs(1, 2, {1.0, 0.0}), t, uniform_weights(1, 2));
    CHECK(r.grad[0] == 0.0);
    CHECK(r.grad[1] == 0.0);
}

TEST_CASE("losses reject shape mismatch and out-of-range predictions") {
    CHECK_THROWS_AS(weighted_cross_entropy(ProbabilityMap(2, 2, 0.5), BinaryMask(2, 3), uniform_weights(2, 2)), Error);
    CHECK_THROWS_AS(dice_loss(ProbabilityMap(2, 2, 0.5), BinaryMask(3, 2)), Error);
    CHECK_THROWS_AS(dice_loss(ProbabilityMap(1, 1, 1.5), BinaryMask(1, 1)), Error);
}

TEST_CASE("dice loss examples") {
    const auto t = mask(2, 2, {1, 1, 0, 0});
    const auto p = probs(2, 2, {1, 0, 1, 0});
    CHECK(dice_loss(p, t, 0.0).value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(dice_loss(p, t).value == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(dice_loss(probs(2, 2, {1, 1, 0, 0}), t).value <= 1.0 / (2 * 2 + 1));
    CHECK(dice_loss(probs(2, 2, {0.9, 0.1, 0.8, 0.2}), mask(2, 2, {1, 0, 1, 0})).value ==
          doctest::Approx(0.11999999999999988).epsilon(1e-12));
}

TEST_CASE("dice of disjoint large masks approaches one") {
    BinaryMask t(40, 40);
    ProbabilityMap p(40, 40);
    for (std::size_t i = 0; i < 800; ++i) t[i] = 1;
    for (std::size_t i = 800; i < 1600; ++i) p[i] = 1.0;
    const double v = dice_loss(p, t).value;
    CHECK(v > 0.999);
    CHECK(v < 1.0);
}

TEST_CASE("loss gradients pass the finite-difference check") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_mask(rng, 4, 5, 0.3);
        const auto p0 = random_probs(rng, 4, 5);
        for (auto kind : {LossKind::WeightedCe, LossKind::Dice, LossKind::UnweightedCe}) {
            std::vector<BinaryMask> targets{t};
            auto r = ad::grad_check(
                [&](const std::vector<ad::Tensor>& in) { return batch_loss(in[0], targets, kind); },
                {ad::Tensor::from({1, 1, 4, 5}, p0.data)});
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("weighted CE is permutation equivariant") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto t = random_mask(rng, 3, 6, 0.4);
        const auto p = random_probs(rng, 3, 6);
        const auto w = make_weight_map(t);
        std::vector<std::size_t> perm(18);
        for (std::size_t i = 0; i < 18; ++i) perm[i] = i;
        for (std::size_t i = 17; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        BinaryMask t2(3, 6);
        ProbabilityMap p2(3, 6);
        WeightMap w2(3, 6);
        for (std::size_t i = 0; i < 18; ++i) {
            t2[i] = t[perm[i]];
            p2[i] = p[perm[i]];
            w2[i] = w[perm[i]];
        }
        CHECK(weighted_cross_entropy(p2, t2, w2).value ==
              doctest::Approx(weighted_cross_entropy(p, t, w).value).epsilon(1e-13));
    }
}

TEST_CASE("dice is symmetric in binary prediction and target") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_mask(rng, 5, 5, 0.4);
        const auto b = random_mask(rng, 5, 5, 0.4);
        ProbabilityMap pa(5, 5), pb(5, 5);
        for (std::size_t i = 0; i < 25; ++i) {
            pa[i] = a[i];
            pb[i] = b[i];
        }
        CHECK(dice_loss(pa, b).value == doctest::Approx(dice_loss(pb, a).value).epsilon(1e-15));
    }
}

TEST_CASE("both losses decrease along the path to the target") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = random_mask(rng, 6, 6, 0.3);
        const auto start = random_probs(rng, 6, 6);
        const auto w = make_weight_map(t);
        double prev_ce = INFINITY, prev_dice = INFINITY;
        for (int step = 0; step <= 20; ++step) {
            const double a = step / 20.0;
            ProbabilityMap p(6, 6);
            for (std::size_t i = 0; i < 36; ++i) p[i] = (1 - a) * start[i] + a * t[i];
            const double ce = weighted_cross_entropy(p, t, w).value;
            const double dice = dice_loss(p, t).value;
            CHECK(ce <= prev_ce + 1e-12);
            CHECK(dice <= prev_dice + 1e-12);
            prev_ce = ce;
            prev_dice = dice;
        }
    }
}

TEST_CASE("scaling the weights scales the CE value and gradient") {
    Rng rng(11);
    const auto t = random_mask(rng, 4, 4, 0.3);
    const auto p = random_probs(rng, 4, 4);
    const auto w = make_weight_map(t);
    auto w3 = w;
    for (auto& v : w3.data) v *= 3.0;
    const auto a = weighted_cross_entropy(p, t, w), b = weighted_cross_entropy(p, t, w3);
    CHECK(b.value == doctest::Approx(3 * a.value).epsilon(1e-13));
    for (std::size_t i = 0; i < 16; ++i) CHECK(b.grad[i] == doctest::Approx(3 * a.grad[i]).epsilon(1e-13));
}

TEST_CASE("batch loss is the mean of per-sample losses") {
    Rng rng(12);
    const auto t1 = random_mask(rng, 3, 3, 0.3), t2 = random_mask(rng, 3, 3, 0.3);
    const auto p1 = random_probs(rng, 3, 3), p2 = random_probs(rng, 3, 3);
    std::vector<double> v = p1.data;
    v.insert(v.end(), p2.data.begin(), p2.data.end());
    std::vector<BinaryMask> ts{t1, t2};
    const double got = batch_loss(ad::Tensor::from({2, 1, 3, 3}, v), ts, LossKind::WeightedCe).item();
    const double want = 0.5 * (weighted_cross_entropy(p1, t1, make_weight_map(t1)).value +
                               weighted_cross_entropy(p2, t2, make_weight_map(t2)).value);
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
    CHECK_THROWS_AS(batch_loss(ad::Tensor::from({2, 1, 3, 3}, v), std::vector<BinaryMask>{t1}, LossKind::Dice), Error);
}

TEST_CASE("loss kind names") {
    CHECK(parse_loss_kind("wce") == LossKind::WeightedCe);
    CHECK(parse_loss_kind("dice") == LossKind::Dice);
    CHECK(parse_loss_kind("ce") == LossKind::UnweightedCe);
    CHECK(loss_kind_name(LossKind::Dice) == "dice");
    CHECK_THROWS_AS(parse_loss_kind("focal"), Error);
}
