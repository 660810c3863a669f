#include "tcsc/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tcsc/parallel.hpp"

namespace tcsc {

namespace {

Image flip_image(const Image& src) {
    Image out(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) out.at(x, y) = src.at(src.width - 1 - x, y);
    return out;
}

// Continuous coordinates use the pixel-center convention, so a horizontal
// flip maps x to (width-1) - x for pixels, landmarks and box edges alike.
FaceBox flip_box(const FaceBox& box, int image_width) {
    FaceBox out = box;
    out.x = static_cast<double>(image_width - 1) - (box.x + box.w);
    return out;
}

Shape reframe_shape(const Shape& shape, const FaceBox& from, const FaceBox& to) {
    Shape out(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) out[i] = image_to_box(box_to_image(shape[i], from), to);
    return out;
}

} // namespace

Dataset augment(const Dataset& data, int multiplier, const TrainConfig& cfg, Rng& rng) {
    if (multiplier < 1) throw std::invalid_argument("augment: multiplier must be >= 1");
    const bool flips = cfg.flip_prob > 0.0;
    if (flips && cfg.model.mirror.size() == 0)
        throw std::invalid_argument("augment: flips enabled but no mirror map configured");
    if (flips && !cfg.model.mirror.is_involution())
        throw std::invalid_argument("augment: mirror map is not an involution");

    Dataset out;
    out.reserve(data.size() * static_cast<std::size_t>(multiplier));
    for (const AnnotatedSample& sample : data) {
        if (flips && sample.shape.size() != cfg.model.mirror.size())
            throw std::invalid_argument("augment: mirror map length does not match shapes");
        for (int a = 0; a < multiplier; ++a) {
            AnnotatedSample derived;
            derived.source = sample.source;
            derived.source_id = sample.source_id;

            const bool flip = flips && rng.bernoulli(cfg.flip_prob);
            const double angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);

            Image image = flip ? flip_image(sample.image) : sample.image;
            FaceBox box = flip ? flip_box(sample.box, sample.image.width) : sample.box;
            Shape shape = flip ? mirror_shape(sample.shape, cfg.model.mirror) : sample.shape;

            RotatedSample rotated = rotate_sample(image, shape, box, angle);
            const FaceBox perturbed = perturb_box(box, rng, cfg.perturb);

            derived.image = std::move(rotated.image);
            derived.shape = reframe_shape(rotated.shape, box, perturbed);
            derived.box = perturbed;
            out.push_back(std::move(derived));
        }
    }
    return out;
}

namespace {

Shape compute_mean_shape(const Dataset& data) {
    const std::size_t l = data.front().shape.size();
    std::vector<double> acc(2 * l, 0.0);
    for (const AnnotatedSample& s : data)
        for (std::size_t i = 0; i < l; ++i) {
            acc[2 * i] += s.shape[i].x;
            acc[2 * i + 1] += s.shape[i].y;
        }
    Shape mean(l);
    for (std::size_t i = 0; i < l; ++i) {
        // round through float so the serialized f32 mean shape reloads bit-exactly
        mean[i].x = static_cast<float>(acc[2 * i] / static_cast<double>(data.size()));
        mean[i].y = static_cast<float>(acc[2 * i + 1] / static_cast<double>(data.size()));
    }
    return mean;
}

double mean_error(const Dataset& data, const std::vector<Shape>& current,
                  std::pair<std::uint16_t, std::uint16_t> iod) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) total += normalized_error(current[i], data[i].shape, iod);
    return total / static_cast<double>(data.size());
}

} // namespace

TrainResult train_cascade(const Dataset& data, const TrainConfig& cfg, Rng& rng) {
    if (data.empty()) throw std::invalid_argument("train_cascade: empty dataset");
    const std::uint16_t l = cfg.model.landmark_count;
    for (const AnnotatedSample& s : data)
        if (s.shape.size() != l) throw std::invalid_argument("train_cascade: shape length mismatch");

    const int n = static_cast<int>(data.size());
    const int o = cfg.model.output_dim();
    const int phi_dim = cfg.model.phi_dim();

    TrainResult result;
    result.model.config = cfg.model;
    result.model.config.q = 0;
    result.model.config.r_schedule.assign(cfg.model.stages, 0);
    result.model.mean_shape = compute_mean_shape(data);

    std::vector<Shape> current(data.size(), result.model.mean_shape);
    result.baseline_error = mean_error(data, current, cfg.model.iod);

    std::vector<std::uint32_t> source_ids(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) source_ids[i] = data[i].source_id;

    for (int t = 0; t < cfg.model.stages; ++t) {
        // per-landmark residual targets drive the forest
        std::vector<ForestSample> forest_samples(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            forest_samples[i].image = &data[i].image;
            forest_samples[i].box = data[i].box;
            forest_samples[i].current = &current[i];
            forest_samples[i].truth = &data[i].shape;
        }
        ForestTrainParams fp;
        fp.trees_per_landmark = cfg.model.trees_per_landmark;
        fp.tree.depth = cfg.model.tree_depth;
        fp.tree.candidate_tests = cfg.candidate_tests;
        fp.tree.radius = cfg.stage_radius(t);
        fp.threads = cfg.threads;
        Rng forest_rng = rng.split(0x464F5245 + static_cast<std::uint64_t>(t));

        CascadeStage stage;
        stage.forest = train_forest(forest_samples, l, fp, forest_rng);

        std::vector<SparseEncoding> encodings(data.size());
        parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
            encodings[i] = encode(stage.forest, data[i].image, current[i], data[i].box);
        });

        DenseMatrix targets(n, o);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < static_cast<int>(l); ++j) {
                targets.at(i, 2 * j) = data[i].shape[j].x - current[i][j].x;
                targets.at(i, 2 * j + 1) = data[i].shape[j].y - current[i][j].y;
            }

        const double lambda = cfg.ridge_lambda > 0.0
                                  ? cfg.ridge_lambda
                                  : 1e-3 * static_cast<double>(n) / static_cast<double>(phi_dim);
        const int rank = cfg.stage_rank(t);
        Rng fit_rng = rng.split(0x46495400 + static_cast<std::uint64_t>(t));

        StageReport report;
        switch (cfg.model.decoder) {
            case DecoderKind::LL:
                stage.decoder = fit_ll(encodings, targets, lambda);
                break;
            case DecoderKind::RRR:
                stage.decoder = fit_rrr(encodings, targets, rank, lambda);
                break;
            case DecoderKind::RRRBP:
            case DecoderKind::NN: {
                StageDecoder init = init_weights(cfg.model.decoder, phi_dim, o, rank, fit_rng);
                auto [fitted, log] = fit_sgd(std::move(init), encodings, targets, cfg.sgd, fit_rng, source_ids);
                stage.decoder = std::move(fitted);
                report.log = std::move(log);
                break;
            }
        }
        // fitted decoders infer P from the data; pin the full forest width
        if (stage.decoder.input_dim != phi_dim) {
            if (stage.decoder.input_dim > phi_dim)
                throw std::logic_error("train_cascade: decoder wider than forest");
            DenseMatrix widened(stage.decoder.w1.rows, phi_dim);
            for (int r = 0; r < stage.decoder.w1.rows; ++r) {
                const auto src = stage.decoder.w1.row(r);
                std::copy(src.begin(), src.end(), widened.row(r).begin());
            }
            stage.decoder.w1 = std::move(widened);
            stage.decoder.input_dim = phi_dim;
            stage.decoder.rebuild_cache();
        }

        parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
            const std::vector<float> delta = decode(stage.decoder, encodings[i]);
            for (std::size_t j = 0; j < l; ++j) {
                current[i][j].x += delta[2 * j];
                current[i][j].y += delta[2 * j + 1];
            }
        });

        if (cfg.model.decoder != DecoderKind::LL)
            result.model.config.r_schedule[t] = static_cast<std::uint16_t>(rank);
        report.train_error = mean_error(data, current, cfg.model.iod);
        result.stages.push_back(std::move(report));
        result.model.stages.push_back(std::move(stage));
    }
    return result;
}

Shape run_cascade(const CascadeModel& model, const Image& image, const FaceBox& box) {
    Shape shape = model.mean_shape;
    for (const CascadeStage& stage : model.stages) {
        const SparseEncoding phi = encode(stage.forest, image, shape, box);
        const std::vector<float> delta = decode(stage.decoder, phi);
        for (std::size_t j = 0; j < shape.size(); ++j) {
            shape[j].x += delta[2 * j];
            shape[j].y += delta[2 * j + 1];
        }
    }
    return shape;
}

// Multi-init perturbations: the documented augmentation defaults scaled by 0.5.
static constexpr PerturbRanges kInitPerturb{0.95f, 1.05f, -0.025f, 0.025f};

Shape predict(const CascadeModel& model, const Image& image, const FaceBox& box, int inits, Rng& rng) {
    if (inits < 1) throw std::invalid_argument("predict: need at least one initialization");
    const std::size_t l = model.mean_shape.size();
    std::vector<double> acc(2 * l, 0.0);

    for (int p = 0; p < inits; ++p) {
        const FaceBox start = p == 0 ? box : perturb_box(box, rng, kInitPerturb);
        const Shape shape = run_cascade(model, image, start);
        // express every result in the unperturbed frame before averaging
        for (std::size_t j = 0; j < l; ++j) {
            const Point2d px = box_to_image(shape[j], start);
            const Point2d in_ref = image_to_box(px, box);
            acc[2 * j] += in_ref.x;
            acc[2 * j + 1] += in_ref.y;
        }
    }
    Shape out(l);
    for (std::size_t j = 0; j < l; ++j) {
        out[j].x = acc[2 * j] / inits;
        out[j].y = acc[2 * j + 1] / inits;
    }
    return out;
}

std::vector<Shape> predict_batch(const CascadeModel& model, const Dataset& samples, int inits,
                                 std::uint64_t seed, int threads, BatchTiming* timing) {
    std::vector<Shape> out(samples.size());
    std::vector<double> ms(samples.size(), 0.0);

    parallel_for(samples.size(), threads, [&](std::size_t i) {
        // per-sample stream keyed by index: identical for any thread count
        Rng local = Rng(seed).split(i);
        const auto t0 = std::chrono::steady_clock::now();
        out[i] = predict(model, samples[i].image, samples[i].box, inits, local);
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    });

    if (timing) {
        timing->inits = inits;
        timing->kind = model.config.decoder;
        double mean = 0.0;
        for (const double v : ms) mean += v;
        mean /= ms.empty() ? 1.0 : static_cast<double>(ms.size());
        double var = 0.0;
        for (const double v : ms) var += (v - mean) * (v - mean);
        timing->ms_mean = mean;
        timing->ms_std = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
    }
    return out;
}

} // namespace tcsc
