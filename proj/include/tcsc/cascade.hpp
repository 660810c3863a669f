#ifndef TCSC_CASCADE_HPP
#define TCSC_CASCADE_HPP

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tcsc/datasets.hpp"
#include "tcsc/decoders.hpp"
#include "tcsc/ensemble.hpp"
#include "tcsc/geometry.hpp"

namespace tcsc {

// Everything needed to reconstruct a model file header.
struct ModelConfig {
    std::uint16_t landmark_count = 68;   // L
    std::uint16_t trees_per_landmark = 5;
    std::uint16_t tree_depth = 5;
    std::uint16_t stages = 5;
    DecoderKind decoder = DecoderKind::RRR;
    std::uint8_t q = 0;  // quantization bits, 0 = none
    std::vector<std::uint16_t> r_schedule{16, 24, 32, 40, 48};
    std::pair<std::uint16_t, std::uint16_t> iod{36, 45};
    MirrorMap mirror;  // identity when the dataset ships none

    int output_dim() const { return 2 * landmark_count; }
    int phi_dim() const { return landmark_count * trees_per_landmark * (1 << tree_depth); }
};

struct CascadeStage {
    Forest forest;
    StageDecoder decoder;
};

// Mean shape plus T stages of (forest, decoder); S_t = S_{t-1} + delta_t.
struct CascadeModel {
    ModelConfig config;
    Shape mean_shape;
    std::vector<CascadeStage> stages;
};

struct TrainConfig {
    ModelConfig model;
    int augmentation = 20;  // derived samples per original
    double flip_prob = 0.5;
    double rotation_deg = 20.0;
    PerturbRanges perturb;  // box scale/shift augmentation ranges
    std::vector<float> radius_schedule{0.4f, 0.3f, 0.2f, 0.15f, 0.1f};
    int candidate_tests = 128;
    double ridge_lambda = 0.0;  // 0 -> auto: 1e-3 * N / P
    SgdSchedule sgd;
    int threads = 1;

    float stage_radius(int t) const {
        if (radius_schedule.empty()) return 0.3f;
        const std::size_t i = static_cast<std::size_t>(t) < radius_schedule.size() ? t : radius_schedule.size() - 1;
        return radius_schedule[i];
    }
    std::uint16_t stage_rank(int t) const {
        if (model.r_schedule.empty()) return 0;
        const std::size_t i = static_cast<std::size_t>(t) < model.r_schedule.size() ? t : model.r_schedule.size() - 1;
        return model.r_schedule[i];
    }
};

// A derived samples per original: flip with flip_prob (mirror map applied),
// rotation uniform in [-rotation_deg, rotation_deg], box scale/shift
// perturbation. Derived samples keep the original's source_id.
Dataset augment(const Dataset& data, int multiplier, const TrainConfig& cfg, Rng& rng);

struct StageReport {
    double train_error = 0.0;  // mean normalized error after this stage's update
    TrainLog log;              // nonempty for SGD-fitted decoders
};

struct TrainResult {
    CascadeModel model;
    std::vector<StageReport> stages;
    double baseline_error = 0.0;  // mean-shape error before any stage
};

TrainResult train_cascade(const Dataset& data, const TrainConfig& cfg, Rng& rng);

// Single cascade pass from a given starting box.
Shape run_cascade(const CascadeModel& model, const Image& image, const FaceBox& box);

// Multi-initialization prediction: one pass from the unperturbed box plus
// inits-1 passes from slightly perturbed boxes, averaged per landmark in the
// unperturbed frame.
Shape predict(const CascadeModel& model, const Image& image, const FaceBox& box, int inits, Rng& rng);

struct BatchTiming {
    double ms_mean = 0.0;
    double ms_std = 0.0;
    int inits = 1;
    DecoderKind kind = DecoderKind::LL;
};

// Same results as repeated predict() with per-sample seeds split from `seed`
// (bit-identical for any thread count); reports mean per-face milliseconds.
std::vector<Shape> predict_batch(const CascadeModel& model, const Dataset& samples, int inits,
                                 std::uint64_t seed, int threads, BatchTiming* timing = nullptr);

} // namespace tcsc

#endif
