#ifndef TCSC_DECODERS_HPP
#define TCSC_DECODERS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tcsc/ensemble.hpp"
#include "tcsc/matrix.hpp"
#include "tcsc/quantizer.hpp"
#include "tcsc/rng.hpp"

namespace tcsc {

// Phi -> delta decoder families:
//   LL     full linear, delta = W * phi
//   RRR    rank-r factorization W2 * W1 fitted in closed form (SVD of fitted values)
//   RRRBP  the same factored model fitted by SGD
//   NN     delta = W3 * tanh(W2 * tanh(W1 * phi + b1) + b2) + b3
enum class DecoderKind : std::uint8_t { LL = 0, RRR = 1, RRRBP = 2, NN = 3 };

const char* decoder_kind_name(DecoderKind kind);
std::optional<DecoderKind> decoder_kind_from_name(const std::string& name);

struct StageDecoder {
    DecoderKind kind = DecoderKind::LL;
    int input_dim = 0;   // P
    int output_dim = 0;  // o = 2L
    int rank = 0;        // r; 0 for LL

    // The phi-facing matrix: LL stores the full W (o x P) here, the factored
    // kinds store W1 (r x P). Exactly one of w1 / w1_q carries the payload.
    DenseMatrix w1;
    std::optional<QuantizedMatrix> w1_q;

    DenseMatrix w2;                  // RRR/RRRBP: o x r; NN: 2r x r
    DenseMatrix w3;                  // NN: o x 2r
    std::vector<float> b1, b2, b3;   // NN only

    bool quantized() const { return w1_q.has_value(); }
    int w1_rows() const { return kind == DecoderKind::LL ? output_dim : rank; }

    // Transposed copy of w1 kept for the inference hot path (contiguous
    // per-leaf rows); derived data, never serialized. Must be invalidated or
    // rebuilt whenever w1 changes.
    void rebuild_cache();
    void invalidate_cache() { w1t_ = DenseMatrix{}; }
    const DenseMatrix& w1_cache() const { return w1t_; }

private:
    DenseMatrix w1t_;
};

// Sum of the columns of `m` selected by phi (indicator entries are exactly 1).
std::vector<float> sparse_matvec(const DenseMatrix& m, const SparseEncoding& phi);

std::vector<float> decode(const StageDecoder& dec, const SparseEncoding& phi);

// Two-step view: the compact encoding e(x) = W1 * phi plus the decoded output.
struct DecodeTrace {
    std::vector<float> delta;
    std::vector<float> encoding;  // empty for LL
};
DecodeTrace decode_trace(const StageDecoder& dec, const SparseEncoding& phi);

// Second half of the two-step procedure, starting from e(x).
std::vector<float> decode_from_encoding(const StageDecoder& dec, std::span<const float> encoding);

// Ridge least squares per output row on the sparse Gram matrix:
// W = argmin sum ||y_i - W phi_i||^2 + lambda ||W||_F^2.
StageDecoder fit_ll(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, double lambda);

// Closed-form reduced-rank regression: ridge OLS B, thin SVD of the fitted
// values X*B = U D V^T, W2 = V_r, W1 = (B V_r)^T.
StageDecoder fit_rrr(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, int rank, double lambda);

struct SgdSchedule {
    double eta0 = 1.0;
    int minibatch = 128;
    int patience = 3;
    double plateau_rel = 1e-3;        // "improved" means val loss dropped by more than this
    double eta_min = 1.0 / 1024.0;    // stop once eta falls below
    int max_epochs = 100;
    double val_fraction = 0.1;
};

struct TrainLog {
    std::vector<double> train_loss;     // per epoch
    std::vector<double> val_loss;
    std::vector<double> learning_rate;  // eta in effect during each epoch
    int best_epoch = -1;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minibatch SGD on mean squared error with exact gradients; only the active
// columns of W1 are touched per sample. Validation split: explicit indices if
// given, else 10% of source ids (augmented copies of one source stay
// together), else 10% of samples. Returns the best-validation weights.
std::pair<StageDecoder, TrainLog> fit_sgd(StageDecoder init, const std::vector<SparseEncoding>& X,
                                          const DenseMatrix& Y, const SgdSchedule& schedule, Rng& rng,
                                          std::span<const std::uint32_t> source_ids = {},
                                          std::span<const std::uint32_t> val_indices = {});

// Batch-mean loss and exact gradients for one minibatch; the testing surface
// for gradient checks.
struct SgdGradients {
    double loss = 0.0;
    DenseMatrix gw1, gw2, gw3;
    std::vector<double> gb1, gb2, gb3;
};
SgdGradients sgd_gradients(const StageDecoder& dec, const std::vector<SparseEncoding>& X, const DenseMatrix& Y,
                           std::span<const std::uint32_t> batch);

// Loss = mean over samples of (1/o) ||f(phi) - y||^2.
double mse_loss(const StageDecoder& dec, const std::vector<SparseEncoding>& X, const DenseMatrix& Y,
                std::span<const std::uint32_t> indices);

// Scaled uniform init, scale 1/sqrt(fan-in), zero biases.
StageDecoder init_weights(DecoderKind kind, int input_dim, int output_dim, int rank, Rng& rng);

} // namespace tcsc

#endif
