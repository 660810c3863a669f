#ifndef TCSC_GEOMETRY_HPP
#define TCSC_GEOMETRY_HPP

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "tcsc/image.hpp"
#include "tcsc/rng.hpp"

namespace tcsc {

struct Point2d {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2d&, const Point2d&) = default;
};

// Ordered landmark set in the box frame: the face box mapped to [0,1]x[0,1].
// All shape arithmetic is elementwise over the flattened 2L vector.
struct Shape {
    std::vector<Point2d> points;

    Shape() = default;
    explicit Shape(std::size_t n) : points(n) {}

    std::size_t size() const { return points.size(); }
    Point2d& operator[](std::size_t i) { return points[i]; }
    const Point2d& operator[](std::size_t i) const { return points[i]; }

    friend bool operator==(const Shape&, const Shape&) = default;
};

// Face bounding box in image pixels.
struct FaceBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool valid() const { return w > 0.0 && h > 0.0; }

    friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

// Landmark index permutation pairing left/right landmarks; an involution.
struct MirrorMap {
    std::vector<std::uint16_t> permutation;

    std::size_t size() const { return permutation.size(); }
    static MirrorMap identity(std::size_t n);
    bool is_involution() const;
};

// Eq.-(3)-style mean point-to-point error, in percent of the inter-ocular
// distance of `truth`. Throws std::invalid_argument on length mismatch or a
// degenerate (zero) IOD.
double normalized_error(const Shape& pred, const Shape& truth,
                        std::pair<std::uint16_t, std::uint16_t> iod_pair);

Point2d image_to_box(Point2d p, const FaceBox& box);
Point2d box_to_image(Point2d p, const FaceBox& box);

// x -> 1-x in the box frame, then indices permuted. Throws on length mismatch.
Shape mirror_shape(const Shape& s, const MirrorMap& m);

struct PerturbRanges {
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double shift_lo = -0.05;  // fraction of box size
    double shift_hi = 0.05;
};

// New box with size scaled by u~U[scale_lo,scale_hi] about the box center and
// origin shifted by (U[shift]*w, U[shift]*h).
FaceBox perturb_box(const FaceBox& box, Rng& rng, const PerturbRanges& ranges);

// Rotates image content and landmarks by `angle_deg` (CCW, y-down raster
// coordinates) about the box center; nearest-neighbor resampling, box
// untouched.
struct RotatedSample {
    Image image;
    Shape shape;
};
RotatedSample rotate_sample(const Image& image, const Shape& shape, const FaceBox& box, double angle_deg);

// Landmark rotation alone (used by tests and by augmentation bookkeeping).
Shape rotate_shape(const Shape& shape, const FaceBox& box, double angle_deg);

} // namespace tcsc

#endif
