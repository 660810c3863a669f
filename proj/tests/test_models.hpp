#ifndef TCSC_TEST_MODELS_HPP
#define TCSC_TEST_MODELS_HPP

// Shared builders for randomly initialized models at arbitrary dimensions.

#include <vector>

#include "tcsc/cascade.hpp"
#include "tcsc/quantizer.hpp"

namespace tcsc_test {

inline tcsc::Forest random_forest(tcsc::Rng& rng, std::uint16_t landmarks, std::uint16_t per_landmark,
                                  std::uint8_t depth) {
    tcsc::Forest f;
    f.landmark_count = landmarks;
    f.trees_per_landmark = per_landmark;
    f.depth = depth;
    f.trees.resize(static_cast<std::size_t>(landmarks) * per_landmark);
    for (std::size_t i = 0; i < f.trees.size(); ++i) {
        tcsc::Tree& t = f.trees[i];
        t.landmark_index = static_cast<std::uint16_t>(i / per_landmark);
        t.depth = depth;
        t.tests.resize((1u << depth) - 1);
        for (auto& test : t.tests) {
            test.u1x = static_cast<std::int8_t>(static_cast<int>(rng.below(160)) - 80);
            test.u1y = static_cast<std::int8_t>(static_cast<int>(rng.below(160)) - 80);
            test.u2x = static_cast<std::int8_t>(static_cast<int>(rng.below(160)) - 80);
            test.u2y = static_cast<std::int8_t>(static_cast<int>(rng.below(160)) - 80);
            test.threshold = static_cast<std::int16_t>(static_cast<int>(rng.below(61)) - 30);
        }
    }
    return f;
}

// randomly initialized cascade at the given dimensions (no training)
inline tcsc::CascadeModel random_model(tcsc::DecoderKind kind, std::uint16_t landmarks,
                                       std::uint16_t trees_per_landmark, std::uint16_t depth,
                                       std::uint16_t stages, const std::vector<std::uint16_t>& r_schedule,
                                       std::uint64_t seed, double weight_scale = 1.0) {
    tcsc::Rng rng(seed);
    tcsc::CascadeModel model;
    model.config.landmark_count = landmarks;
    model.config.trees_per_landmark = trees_per_landmark;
    model.config.tree_depth = depth;
    model.config.stages = stages;
    model.config.decoder = kind;
    model.config.q = 0;
    model.config.r_schedule = r_schedule;
    model.config.iod = {0, static_cast<std::uint16_t>(landmarks - 1)};
    model.config.mirror = tcsc::MirrorMap::identity(landmarks);

    model.mean_shape = tcsc::Shape(landmarks);
    for (auto& p : model.mean_shape.points) {
        p.x = static_cast<float>(rng.uniform(0.2, 0.8));
        p.y = static_cast<float>(rng.uniform(0.2, 0.8));
    }

    const int p_dim = landmarks * trees_per_landmark * (1 << depth);
    const int o = 2 * landmarks;
    for (std::uint16_t t = 0; t < stages; ++t) {
        tcsc::CascadeStage stage;
        stage.forest = random_forest(rng, landmarks, trees_per_landmark, static_cast<std::uint8_t>(depth));
        const int rank = kind == tcsc::DecoderKind::LL ? 0 : r_schedule[t];
        stage.decoder = tcsc::init_weights(kind, p_dim, o, rank, rng);
        if (weight_scale != 1.0) {
            for (float& v : stage.decoder.w1.data) v = static_cast<float>(v * weight_scale);
            stage.decoder.rebuild_cache();
        }
        model.stages.push_back(std::move(stage));
    }
    return model;
}

} // namespace tcsc_test

#endif
