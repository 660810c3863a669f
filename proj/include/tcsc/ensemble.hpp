#ifndef TCSC_ENSEMBLE_HPP
#define TCSC_ENSEMBLE_HPP

#include <cstdint>
#include <vector>

#include "tcsc/geometry.hpp"
#include "tcsc/image.hpp"
#include "tcsc/rng.hpp"

namespace tcsc {

// Thresholded pixel-difference test. Offsets are relative to the anchoring
// landmark, in box-frame units, snapped to a signed 8-bit 1/256 grid so that
// serialization is lossless.
struct PixelTest {
    std::int8_t u1x = 0, u1y = 0;  // offset 1, units of 1/256 box
    std::int8_t u2x = 0, u2y = 0;  // offset 2
    std::int16_t threshold = 0;    // signed intensity difference

    friend bool operator==(const PixelTest&, const PixelTest&) = default;
};

constexpr float kOffsetScale = 1.0f / 256.0f;

// Complete binary tree of depth `depth`: 2^d - 1 internal tests in
// breadth-first order, 2^d leaves. Leaves carry no payload; the tree's only
// output is the leaf index.
struct Tree {
    std::uint16_t landmark_index = 0;
    std::uint8_t depth = 0;
    std::vector<PixelTest> tests;  // size 2^depth - 1

    int leaf_count() const { return 1 << depth; }

    friend bool operator==(const Tree&, const Tree&) = default;
};

// n trees per landmark, landmark-major order (landmark 0 trees first).
struct Forest {
    std::uint16_t landmark_count = 0;
    std::uint16_t trees_per_landmark = 0;
    std::uint8_t depth = 0;
    std::vector<Tree> trees;  // landmark_count * trees_per_landmark

    int tree_count() const { return static_cast<int>(trees.size()); }
    int leaf_count() const { return 1 << depth; }
    // dimensionality of the indicator vector
    int phi_dim() const { return tree_count() * leaf_count(); }

    friend bool operator==(const Forest&, const Forest&) = default;
};

// The indicator vector as its active column set: exactly one entry per tree,
// entry i in the half-open block [i*2^d, (i+1)*2^d).
struct SparseEncoding {
    std::vector<std::uint32_t> active_indices;
};

// 1 iff F[p1] - F[p2] > threshold with p_k = box_to_image(landmark + u_k),
// border-clamped.
int eval_test(const PixelTest& test, const Image& image, Point2d landmark, const FaceBox& box);

// Root-to-leaf descent; test bit 0 goes to the left child.
int descend(const Tree& tree, const Image& image, const Shape& shape, const FaceBox& box);

SparseEncoding encode(const Forest& forest, const Image& image, const Shape& shape, const FaceBox& box);

// One training sample for a tree: where the landmark currently sits and how
// far it is from the truth (both box frame).
struct TreeSample {
    const Image* image = nullptr;
    FaceBox box;
    Point2d landmark_pos;
    Point2d target_offset;
};

struct TreeTrainParams {
    int depth = 5;
    int candidate_tests = 128;
    float radius = 0.3f;  // sampling disc radius, box-frame units
};

struct ForestTrainParams {
    int trees_per_landmark = 5;
    TreeTrainParams tree;
    int threads = 1;
};

// Greedy top-down growth to exact depth; at each node `candidate_tests`
// random tests are scored by reduction of the summed per-child variance of
// the 2-D targets. Pure or empty nodes get a trivial always-left test.
Tree train_tree(const std::vector<TreeSample>& samples, std::uint16_t landmark_index,
                const TreeTrainParams& params, Rng& rng);

// Per-landmark forest; tree k of a landmark trains on a bootstrap resample
// drawn from its own rng stream, so results do not depend on execution order.
struct ForestSample {
    const Image* image = nullptr;
    FaceBox box;
    const Shape* current = nullptr;
    const Shape* truth = nullptr;
};

Forest train_forest(const std::vector<ForestSample>& samples, std::uint16_t landmark_count,
                    const ForestTrainParams& params, Rng& rng);

} // namespace tcsc

#endif
