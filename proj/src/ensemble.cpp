#include "tcsc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "tcsc/parallel.hpp"

namespace tcsc {

namespace {

std::uint8_t read_offset_pixel(const Image& image, Point2d landmark, float ux, float uy, const FaceBox& box) {
    const Point2d p = box_to_image({landmark.x + ux, landmark.y + uy}, box);
    return image.at_clamped(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
}

int pixel_difference(const PixelTest& t, const Image& image, Point2d landmark, const FaceBox& box) {
    const int a = read_offset_pixel(image, landmark, t.u1x * kOffsetScale, t.u1y * kOffsetScale, box);
    const int b = read_offset_pixel(image, landmark, t.u2x * kOffsetScale, t.u2y * kOffsetScale, box);
    return a - b;
}

} // namespace

int eval_test(const PixelTest& test, const Image& image, Point2d landmark, const FaceBox& box) {
    return pixel_difference(test, image, landmark, box) > test.threshold ? 1 : 0;
}

int descend(const Tree& tree, const Image& image, const Shape& shape, const FaceBox& box) {
    const Point2d landmark = shape[tree.landmark_index];
    int node = 0;
    for (int level = 0; level < tree.depth; ++level) {
        const int bit = eval_test(tree.tests[node], image, landmark, box);
        node = 2 * node + 1 + bit;
    }
    return node - (tree.leaf_count() - 1);
}

SparseEncoding encode(const Forest& forest, const Image& image, const Shape& shape, const FaceBox& box) {
    if (shape.size() != forest.landmark_count)
        throw std::invalid_argument("encode: shape length does not match forest");
    SparseEncoding phi;
    phi.active_indices.resize(forest.trees.size());
    const std::uint32_t leaves = static_cast<std::uint32_t>(forest.leaf_count());
    for (std::size_t i = 0; i < forest.trees.size(); ++i) {
        phi.active_indices[i] = static_cast<std::uint32_t>(i) * leaves +
                                static_cast<std::uint32_t>(descend(forest.trees[i], image, shape, box));
    }
    return phi;
}

namespace {

// Snap a box-frame offset to the signed 8-bit 1/256 grid used by the wire format.
std::int8_t snap_offset(double v) {
    const long q = std::lround(v * 256.0);
    return static_cast<std::int8_t>(std::clamp(q, -128L, 127L));
}

PixelTest sample_candidate(const std::vector<TreeSample>& samples, std::span<const std::uint32_t> node,
                           float radius, Rng& rng) {
    PixelTest t;
    // two offsets uniform in a disc of `radius` box units
    for (int k = 0; k < 2; ++k) {
        double x = 0.0, y = 0.0;
        do {
            x = rng.uniform(-1.0, 1.0);
            y = rng.uniform(-1.0, 1.0);
        } while (x * x + y * y > 1.0);
        if (k == 0) {
            t.u1x = snap_offset(x * radius);
            t.u1y = snap_offset(y * radius);
        } else {
            t.u2x = snap_offset(x * radius);
            t.u2y = snap_offset(y * radius);
        }
    }
    // threshold = an observed difference at this node, so the split is never
    // vacuous by construction
    const TreeSample& s = samples[node[rng.below(node.size())]];
    t.threshold = static_cast<std::int16_t>(pixel_difference(t, *s.image, s.landmark_pos, s.box));
    return t;
}

struct SplitScore {
    double child_sse_complement = -1.0;  // |sum_l|^2/n_l + |sum_r|^2/n_r; larger is better
};

double score_candidate(const PixelTest& t, const std::vector<TreeSample>& samples,
                       std::span<const std::uint32_t> node) {
    double slx = 0.0, sly = 0.0, srx = 0.0, sry = 0.0;
    std::size_t nl = 0, nr = 0;
    for (const std::uint32_t idx : node) {
        const TreeSample& s = samples[idx];
        if (pixel_difference(t, *s.image, s.landmark_pos, s.box) > t.threshold) {
            srx += s.target_offset.x;
            sry += s.target_offset.y;
            ++nr;
        } else {
            slx += s.target_offset.x;
            sly += s.target_offset.y;
            ++nl;
        }
    }
    double score = 0.0;
    if (nl > 0) score += (slx * slx + sly * sly) / static_cast<double>(nl);
    if (nr > 0) score += (srx * srx + sry * sry) / static_cast<double>(nr);
    return score;
}

} // namespace

Tree train_tree(const std::vector<TreeSample>& samples, std::uint16_t landmark_index,
                const TreeTrainParams& params, Rng& rng) {
    if (samples.size() < 2) throw std::invalid_argument("train_tree: need at least 2 samples");
    if (params.depth < 1 || params.depth > 15) throw std::invalid_argument("train_tree: bad depth");

    Tree tree;
    tree.landmark_index = landmark_index;
    tree.depth = static_cast<std::uint8_t>(params.depth);
    const int internal = (1 << params.depth) - 1;
    tree.tests.assign(internal, PixelTest{});

    // Breadth-first growth over an index workspace; node i owns ranges[i].
    std::vector<std::uint32_t> order(samples.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges(2 * internal + 1, {0, 0});
    ranges[0] = {0, static_cast<std::uint32_t>(order.size())};

    for (int node = 0; node < internal; ++node) {
        const auto [begin, end] = ranges[node];
        std::span<const std::uint32_t> members(order.data() + begin, end - begin);

        if (members.size() < 2) {
            // trivial always-left test keeps the tree complete
            tree.tests[node] = PixelTest{};
            ranges[2 * node + 1] = {begin, end};
            ranges[2 * node + 2] = {end, end};
            continue;
        }

        PixelTest best{};
        double best_score = -1.0;
        for (int c = 0; c < params.candidate_tests; ++c) {
            const PixelTest cand = sample_candidate(samples, members, params.radius, rng);
            const double score = score_candidate(cand, samples, members);
            if (score > best_score) {
                best_score = score;
                best = cand;
            }
        }
        tree.tests[node] = best;

        const auto mid = std::stable_partition(order.begin() + begin, order.begin() + end, [&](std::uint32_t idx) {
            const TreeSample& s = samples[idx];
            return eval_test(best, *s.image, s.landmark_pos, s.box) == 0;
        });
        const std::uint32_t cut = static_cast<std::uint32_t>(std::distance(order.begin(), mid));
        ranges[2 * node + 1] = {begin, cut};
        ranges[2 * node + 2] = {cut, end};
    }
    return tree;
}

Forest train_forest(const std::vector<ForestSample>& samples, std::uint16_t landmark_count,
                    const ForestTrainParams& params, Rng& rng) {
    if (samples.empty()) throw std::invalid_argument("train_forest: empty sample set");

    Forest forest;
    forest.landmark_count = landmark_count;
    forest.trees_per_landmark = static_cast<std::uint16_t>(params.trees_per_landmark);
    forest.depth = static_cast<std::uint8_t>(params.tree.depth);
    const std::size_t total = static_cast<std::size_t>(landmark_count) * params.trees_per_landmark;
    forest.trees.resize(total);

    // Streams are split sequentially up front so tree training can run in any
    // order (or in parallel) with identical results.
    std::vector<Rng> streams;
    streams.reserve(total);
    for (std::size_t i = 0; i < total; ++i) streams.push_back(rng.split(i));

    parallel_for(total, params.threads, [&](std::size_t ti) {
        const std::uint16_t landmark = static_cast<std::uint16_t>(ti / params.trees_per_landmark);
        Rng local = streams[ti];

        // bootstrap resample, same size, to decorrelate the landmark's trees
        std::vector<TreeSample> boot(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const ForestSample& src = samples[local.below(samples.size())];
            boot[i].image = src.image;
            boot[i].box = src.box;
            boot[i].landmark_pos = (*src.current)[landmark];
            boot[i].target_offset = {(*src.truth)[landmark].x - boot[i].landmark_pos.x,
                                     (*src.truth)[landmark].y - boot[i].landmark_pos.y};
        }
        forest.trees[ti] = train_tree(boot, landmark, params.tree, local);
    });
    return forest;
}

} // namespace tcsc
