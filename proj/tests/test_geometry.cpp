#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "tcsc/geometry.hpp"

using namespace tcsc;

namespace {

Shape make_shape(std::initializer_list<Point2d> pts) {
    Shape s;
    s.points.assign(pts);
    return s;
}

Shape random_shape(Rng& rng, std::size_t n) {
    Shape s(n);
    for (auto& p : s.points) {
        p.x = static_cast<float>(rng.uniform(-0.2, 1.2));
        p.y = static_cast<float>(rng.uniform(-0.2, 1.2));
    }
    return s;
}

} // namespace

TEST_SUITE("geometry") {

TEST_CASE("normalized_error is zero for identical shapes") {
    Rng rng(11);
    const Shape s = random_shape(rng, 68);
    CHECK(normalized_error(s, s, {36, 45}) == doctest::Approx(0.0));
}

TEST_CASE("normalized_error hand oracle: uniform (3,4) displacement, IOD 100") {
    // every point displaced by hypot(3,4)=5 against IOD 100 -> 5.0
    Shape truth = make_shape({{0, 0}, {100, 0}, {40, 30}, {70, 80}});
    Shape pred = truth;
    for (auto& p : pred.points) {
        p.x += 3;
        p.y += 4;
    }
    CHECK(normalized_error(pred, truth, {0, 1}) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("normalized_error hand oracle: one displaced point out of two") {
    const Shape truth = make_shape({{0, 0}, {50, 0}});
    const Shape pred = make_shape({{0, 0}, {50, 10}});
    // (0 + 10/50*100)/2 = 10
    CHECK(normalized_error(pred, truth, {0, 1}) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("normalized_error rejects degenerate IOD") {
    const Shape truth = make_shape({{5, 5}, {5, 5}, {1, 2}});
    CHECK_THROWS_AS(normalized_error(truth, truth, {0, 1}), std::invalid_argument);
}

TEST_CASE("normalized_error rejects length mismatch") {
    const Shape a = make_shape({{0, 0}, {1, 0}});
    const Shape b = make_shape({{0, 0}, {1, 0}, {2, 0}});
    CHECK_THROWS_AS(normalized_error(a, b, {0, 1}), std::invalid_argument);
}

TEST_CASE("normalized_error invariant under rigid translation of both shapes") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Shape truth = random_shape(rng, 12);
        Shape pred = random_shape(rng, 12);
        const double base = normalized_error(pred, truth, {0, 6});

        const float tx = static_cast<float>(rng.uniform(-50, 50));
        const float ty = static_cast<float>(rng.uniform(-50, 50));
        Shape truth2 = truth, pred2 = pred;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            truth2[i].x += tx;
            truth2[i].y += ty;
            pred2[i].x += tx;
            pred2[i].y += ty;
        }
        CHECK(normalized_error(pred2, truth2, {0, 6}) == doctest::Approx(base).epsilon(1e-4));
    }
}

TEST_CASE("normalized_error scales linearly with uniform displacement") {
    Rng rng(13);
    const Shape truth = random_shape(rng, 10);
    Shape dir(10);
    for (auto& p : dir.points) {
        p.x = static_cast<float>(rng.uniform(-1, 1));
        p.y = static_cast<float>(rng.uniform(-1, 1));
    }
    const auto displaced = [&](double k) {
        Shape s = truth;
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i].x += static_cast<float>(k * dir[i].x);
            s[i].y += static_cast<float>(k * dir[i].y);
        }
        return s;
    };
    const double e1 = normalized_error(displaced(0.5), truth, {0, 5});
    const double e2 = normalized_error(displaced(1.5), truth, {0, 5});
    CHECK(e2 == doctest::Approx(3.0 * e1).epsilon(1e-4));
}

TEST_CASE("frame conversion corners and center") {
    const FaceBox box{40, 60, 200, 100};
    CHECK(image_to_box({40, 60}, box) == Point2d{0, 0});
    CHECK(image_to_box({240, 160}, box) == Point2d{1, 1});
    const Point2d mid = image_to_box({140, 110}, box);
    CHECK(mid.x == doctest::Approx(0.5));
    CHECK(mid.y == doctest::Approx(0.5));
}

TEST_CASE("frame conversions are exact inverses") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const FaceBox box{static_cast<float>(rng.uniform(-100, 100)), static_cast<float>(rng.uniform(-100, 100)),
                          static_cast<float>(rng.uniform(1, 500)), static_cast<float>(rng.uniform(1, 500))};
        const Point2d p{static_cast<float>(rng.uniform(-1000, 1000)), static_cast<float>(rng.uniform(-1000, 1000))};
        const Point2d round = box_to_image(image_to_box(p, box), box);
        CHECK(std::abs(round.x - p.x) <= 1e-3f * (1.0f + std::abs(p.x)));
        CHECK(std::abs(round.y - p.y) <= 1e-3f * (1.0f + std::abs(p.y)));
    }
}

TEST_CASE("mirror twice is identity") {
    Rng rng(5);
    MirrorMap m;
    m.permutation = {1, 0, 2, 4, 3};  // involution
    REQUIRE(m.is_involution());
    const Shape s = random_shape(rng, 5);
    const Shape twice = mirror_shape(mirror_shape(s, m), m);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(twice[i].x == doctest::Approx(s[i].x).epsilon(1e-6));
        CHECK(twice[i].y == doctest::Approx(s[i].y).epsilon(1e-6));
    }
}

TEST_CASE("mirror hand oracle: symmetric two-point shape is fixed") {
    const Shape s = make_shape({{0.2f, 0.5f}, {0.8f, 0.5f}});
    MirrorMap swap;
    swap.permutation = {1, 0};
    const Shape out = mirror_shape(s, swap);
    CHECK(out[0].x == doctest::Approx(0.2f));
    CHECK(out[0].y == doctest::Approx(0.5f));
    CHECK(out[1].x == doctest::Approx(0.8f));
    CHECK(out[1].y == doctest::Approx(0.5f));
}

TEST_CASE("mirror keeps midline points on identity indices") {
    // point 2 maps to itself and sits on the midline x = 0.5
    const Shape s = make_shape({{0.3f, 0.2f}, {0.7f, 0.2f}, {0.5f, 0.6f}});
    MirrorMap m;
    m.permutation = {1, 0, 2};
    const Shape out = mirror_shape(s, m);
    CHECK(out[2].x == doctest::Approx(0.5f));
    CHECK(out[2].y == doctest::Approx(0.6f));
}

TEST_CASE("mirror rejects length mismatch") {
    MirrorMap m;
    m.permutation = {1, 0};
    CHECK_THROWS_AS(mirror_shape(make_shape({{0, 0}}), m), std::invalid_argument);
}

TEST_CASE("perturb_box with degenerate ranges is the identity") {
    Rng rng(1);
    const FaceBox box{10, 20, 30, 40};
    const PerturbRanges ranges{1.0f, 1.0f, 0.0f, 0.0f};
    const FaceBox out = perturb_box(box, rng, ranges);
    CHECK(out.x == doctest::Approx(box.x));
    CHECK(out.y == doctest::Approx(box.y));
    CHECK(out.w == doctest::Approx(box.w));
    CHECK(out.h == doctest::Approx(box.h));
}

TEST_CASE("perturb_box is deterministic under a fixed seed") {
    const FaceBox box{10, 20, 30, 40};
    Rng a(99), b(99);
    const PerturbRanges ranges;
    for (int i = 0; i < 50; ++i) {
        const FaceBox fa = perturb_box(box, a, ranges);
        const FaceBox fb = perturb_box(box, b, ranges);
        CHECK(fa == fb);
    }
}

TEST_CASE("perturb_box draws stay within the declared ranges") {
    const FaceBox box{0, 0, 100, 100};
    const PerturbRanges ranges{0.8f, 1.3f, -0.1f, 0.2f};
    Rng rng(2024);
    float min_scale = 10, max_scale = 0, min_shift = 10, max_shift = -10;
    for (int i = 0; i < 10000; ++i) {
        const FaceBox out = perturb_box(box, rng, ranges);
        const float scale = out.w / box.w;
        min_scale = std::min(min_scale, scale);
        max_scale = std::max(max_scale, scale);
        CHECK(out.h / box.h == doctest::Approx(scale));
        // recover the shift: origin = center - out.w/2 + dx
        const float dx = (out.x - (50.0f - 0.5f * out.w)) / box.w;
        min_shift = std::min(min_shift, dx);
        max_shift = std::max(max_shift, dx);
    }
    CHECK(min_scale >= ranges.scale_lo);
    CHECK(max_scale <= ranges.scale_hi);
    CHECK(min_shift >= ranges.shift_lo - 1e-5f);
    CHECK(max_shift <= ranges.shift_hi + 1e-5f);
    // the draws actually explore the ranges
    CHECK(min_scale < ranges.scale_lo + 0.02f);
    CHECK(max_scale > ranges.scale_hi - 0.02f);
    CHECK(min_shift < ranges.shift_lo + 0.02f);
    CHECK(max_shift > ranges.shift_hi - 0.02f);
}

TEST_CASE("rotate_sample by zero degrees keeps landmarks") {
    Rng rng(8);
    Image img(32, 32);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const FaceBox box{4, 4, 24, 24};
    const Shape s = random_shape(rng, 6);
    const RotatedSample out = rotate_sample(img, s, box, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(out.shape[i].x == doctest::Approx(s[i].x).epsilon(1e-9));
        CHECK(out.shape[i].y == doctest::Approx(s[i].y).epsilon(1e-9));
    }
}

TEST_CASE("rotating landmarks +90 then -90 recovers the original") {
    Rng rng(9);
    const FaceBox box{0, 0, 50, 50};
    const Shape s = random_shape(rng, 10);
    const Shape there = rotate_shape(s, box, 90.0);
    const Shape back = rotate_shape(there, box, -90.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back[i].x == doctest::Approx(s[i].x).epsilon(1e-9));
        CHECK(back[i].y == doctest::Approx(s[i].y).epsilon(1e-9));
    }
}

TEST_CASE("box center is a fixed point of rotation") {
    const FaceBox box{10, 10, 40, 40};
    Shape s(1);
    s[0] = {0.5f, 0.5f};
    for (const double angle : {-20.0, 7.5, 90.0, 180.0}) {
        const Shape out = rotate_shape(s, box, angle);
        CHECK(out[0].x == doctest::Approx(0.5f).epsilon(1e-9));
        CHECK(out[0].y == doctest::Approx(0.5f).epsilon(1e-9));
    }
}

}
