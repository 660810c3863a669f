#ifndef TCSC_DATASETS_HPP
#define TCSC_DATASETS_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcsc/geometry.hpp"
#include "tcsc/image.hpp"

namespace tcsc {

struct ParseError : std::runtime_error {
    enum class Kind { BadHeader, WrongPointCount, BadNumber, BadImage, BadValue };
    ParseError(Kind k, std::string file, int line, const std::string& what);
    Kind kind;
    std::string file;
    int line;
};

struct AnnotatedSample {
    Image image;
    FaceBox box;
    Shape shape;  // ground truth, box frame
    std::string source;
    std::uint32_t source_id = 0;
};

using Dataset = std::vector<AnnotatedSample>;

// 300W-style text landmark file: "version: 1", "n_points: <L>", "{", L lines
// of "x y" in image pixels, "}". Whitespace tolerant.
Shape load_landmarks(const std::string& path);
void save_landmarks(const std::string& path, const Shape& pixel_shape);

// Binary PGM (P5); P6 color inputs are reduced with integer luma
// (77R + 150G + 29B) >> 8.
Image load_pgm(const std::string& path);
void save_pgm(const std::string& path, const Image& image);

// Tight landmark bounding box grown by `margin` of its size on each side.
// Throws on a degenerate (zero-area) landmark set.
FaceBox derive_box(const Shape& pixel_shape, double margin);

// Sidecar box file: one line, "x y w h".
FaceBox load_box(const std::string& path);
void save_box(const std::string& path, const FaceBox& box);

// Newline-separated stems.
std::vector<std::string> load_index(const std::string& path);

// Loads <stem>.pgm + <stem>.pts (+ optional <stem>.box, else derive_box with
// `box_margin`) for every stem in the index, or for every *.pts in the
// directory when no index is given; deterministic order (sorted by stem).
Dataset load_dataset(const std::string& dir, const std::string& index_path = "", double box_margin = 0.25);

struct SyntheticSpec {
    int landmark_count = 10;  // even
    int image_size = 96;
    int count = 100;
    std::uint64_t seed = 0;
    double noise = 6.0;          // additive pixel noise amplitude
    double jitter = 0.012;       // independent per-landmark offset, box units
    double rotation_deg = 25.0;  // pattern rotation range
    double squash = 0.25;        // ellipse eccentricity variation
    double box_margin = 0.25;
    PerturbRanges box_noise{0.92f, 1.12f, -0.06f, 0.06f};  // detector-style box error
};

struct SyntheticDataset {
    Dataset samples;
    MirrorMap mirror;
    std::pair<std::uint16_t, std::uint16_t> iod;
};

// Deterministic desk-scale benchmark: distinct-intensity blobs at the
// landmarks of a randomly deformed ring template over a textured background,
// with detector-style noise on the recorded face box. Landmark positions are
// recoverable from local intensity comparisons; ground truth is exact.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Deterministic shuffle then partition; fractions must sum to 1.
std::vector<std::vector<std::uint32_t>> split_dataset(std::size_t n, std::span<const double> fractions,
                                                      std::uint64_t seed);

} // namespace tcsc

#endif
