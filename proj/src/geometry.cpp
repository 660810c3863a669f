#include "tcsc/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace tcsc {

MirrorMap MirrorMap::identity(std::size_t n) {
    MirrorMap m;
    m.permutation.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.permutation[i] = static_cast<std::uint16_t>(i);
    return m;
}

bool MirrorMap::is_involution() const {
    const std::size_t n = permutation.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (permutation[i] >= n) return false;
        if (permutation[permutation[i]] != i) return false;
    }
    return true;
}

double normalized_error(const Shape& pred, const Shape& truth,
                        std::pair<std::uint16_t, std::uint16_t> iod_pair) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("normalized_error: shape length mismatch");
    const std::size_t n = truth.size();
    if (iod_pair.first >= n || iod_pair.second >= n)
        throw std::invalid_argument("normalized_error: IOD landmark index out of range");

    const Point2d a = truth[iod_pair.first];
    const Point2d b = truth[iod_pair.second];
    const double iod = std::hypot(a.x - b.x, a.y - b.y);
    if (iod <= 0.0)
        throw std::invalid_argument("normalized_error: degenerate inter-ocular distance");

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sum += std::hypot(pred[i].x - truth[i].x, pred[i].y - truth[i].y);
    return 100.0 * sum / (static_cast<double>(n) * iod);
}

Point2d image_to_box(Point2d p, const FaceBox& box) {
    return {(p.x - box.x) / box.w, (p.y - box.y) / box.h};
}

Point2d box_to_image(Point2d p, const FaceBox& box) {
    return {box.x + p.x * box.w, box.y + p.y * box.h};
}

Shape mirror_shape(const Shape& s, const MirrorMap& m) {
    if (s.size() != m.size())
        throw std::invalid_argument("mirror_shape: map length mismatch");
    Shape out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Point2d& src = s[m.permutation[i]];
        out[i] = {1.0 - src.x, src.y};
    }
    return out;
}

FaceBox perturb_box(const FaceBox& box, Rng& rng, const PerturbRanges& ranges) {
    const double s = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    const double dx = rng.uniform(ranges.shift_lo, ranges.shift_hi) * box.w;
    const double dy = rng.uniform(ranges.shift_lo, ranges.shift_hi) * box.h;
    // scale about the box center, then shift
    const double cx = box.x + 0.5 * box.w;
    const double cy = box.y + 0.5 * box.h;
    FaceBox out;
    out.w = box.w * s;
    out.h = box.h * s;
    out.x = cx - 0.5 * out.w + dx;
    out.y = cy - 0.5 * out.h + dy;
    return out;
}

Shape rotate_shape(const Shape& shape, const FaceBox& box, double angle_deg) {
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double cx = box.x + 0.5 * box.w;
    const double cy = box.y + 0.5 * box.h;
    Shape out(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const Point2d px = box_to_image(shape[i], box);
        const double rx = px.x - cx, ry = px.y - cy;
        out[i] = image_to_box({cx + c * rx - s * ry, cy + s * rx + c * ry}, box);
    }
    return out;
}

RotatedSample rotate_sample(const Image& image, const Shape& shape, const FaceBox& box, double angle_deg) {
    RotatedSample out;
    out.shape = rotate_shape(shape, box, angle_deg);
    out.image = Image(image.width, image.height);

    // Inverse mapping: each output pixel pulls from the source rotated by -angle.
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    const double cx = box.x + 0.5 * box.w;
    const double cy = box.y + 0.5 * box.h;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const double rx = x - cx, ry = y - cy;
            const double sx = cx + c * rx + s * ry;
            const double sy = cy - s * rx + c * ry;
            out.image.at(x, y) = image.at_clamped(static_cast<int>(std::lround(sx)),
                                                  static_cast<int>(std::lround(sy)));
        }
    }
    return out;
}

} // namespace tcsc
