#include "tcsc/decoders.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcsc {

const char* decoder_kind_name(DecoderKind kind) {
    switch (kind) {
        case DecoderKind::LL: return "ll";
        case DecoderKind::RRR: return "rrr";
        case DecoderKind::RRRBP: return "rrrbp";
        case DecoderKind::NN: return "nn";
    }
    return "?";
}

std::optional<DecoderKind> decoder_kind_from_name(const std::string& name) {
    if (name == "ll") return DecoderKind::LL;
    if (name == "rrr") return DecoderKind::RRR;
    if (name == "rrrbp") return DecoderKind::RRRBP;
    if (name == "nn") return DecoderKind::NN;
    return std::nullopt;
}

void StageDecoder::rebuild_cache() {
    w1t_ = quantized() ? DenseMatrix{} : w1.transposed();
}

std::vector<float> sparse_matvec(const DenseMatrix& m, const SparseEncoding& phi) {
    std::vector<float> out(m.rows, 0.0f);
    for (const std::uint32_t j : phi.active_indices) {
        if (j >= static_cast<std::uint32_t>(m.cols)) throw std::out_of_range("sparse_matvec: index out of range");
        for (int r = 0; r < m.rows; ++r) out[r] += m.at(r, static_cast<int>(j));
    }
    return out;
}

namespace {

// e = W1 * phi. Sums run over active indices in ascending list order for
// every output element, so the cached-transpose, direct, and quantized paths
// produce bit-identical floats.
std::vector<float> phi_projection(const StageDecoder& dec, const SparseEncoding& phi) {
    const int rows = dec.w1_rows();
    std::vector<float> e(rows, 0.0f);
    if (dec.quantized()) {
        const QuantizedMatrix& qm = *dec.w1_q;
        for (int r = 0; r < rows; ++r) {
            const float* cb = qm.codebook(r);
            float acc = 0.0f;
            for (const std::uint32_t j : phi.active_indices) acc += cb[qm.index_at(r, static_cast<int>(j))];
            e[r] = acc;
        }
        return e;
    }
    const DenseMatrix& t = dec.w1_cache();
    if (!t.empty()) {
        for (const std::uint32_t j : phi.active_indices) {
            const auto row = t.row(static_cast<int>(j));
            for (int r = 0; r < rows; ++r) e[r] += row[r];
        }
        return e;
    }
    for (const std::uint32_t j : phi.active_indices)
        for (int r = 0; r < rows; ++r) e[r] += dec.w1.at(r, static_cast<int>(j));
    return e;
}

void dense_affine(const DenseMatrix& w, std::span<const float> x, const std::vector<float>& bias,
                  std::vector<float>& out) {
    out.assign(w.rows, 0.0f);
    for (int r = 0; r < w.rows; ++r) {
        double acc = bias.empty() ? 0.0 : bias[r];
        const auto row = w.row(r);
        for (int c = 0; c < w.cols; ++c) acc += static_cast<double>(row[c]) * x[c];
        out[r] = static_cast<float>(acc);
    }
}

} // namespace

std::vector<float> decode_from_encoding(const StageDecoder& dec, std::span<const float> encoding) {
    switch (dec.kind) {
        case DecoderKind::LL:
            return {encoding.begin(), encoding.end()};
        case DecoderKind::RRR:
        case DecoderKind::RRRBP: {
            std::vector<float> out;
            dense_affine(dec.w2, encoding, {}, out);
            return out;
        }
        case DecoderKind::NN: {
            std::vector<float> h1(encoding.begin(), encoding.end());
            for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = std::tanh(h1[i] + dec.b1[i]);
            std::vector<float> h2;
            dense_affine(dec.w2, h1, dec.b2, h2);
            for (float& v : h2) v = std::tanh(v);
            std::vector<float> out;
            dense_affine(dec.w3, h2, dec.b3, out);
            return out;
        }
    }
    throw std::logic_error("decode_from_encoding: bad decoder kind");
}

DecodeTrace decode_trace(const StageDecoder& dec, const SparseEncoding& phi) {
    if (phi.active_indices.size() > 0) {
        const std::uint32_t max = *std::max_element(phi.active_indices.begin(), phi.active_indices.end());
        if (max >= static_cast<std::uint32_t>(dec.input_dim))
            throw std::out_of_range("decode: active index out of range");
    }
    DecodeTrace trace;
    std::vector<float> e = phi_projection(dec, phi);
    trace.delta = decode_from_encoding(dec, e);
    if (dec.kind != DecoderKind::LL) trace.encoding = std::move(e);
    return trace;
}

std::vector<float> decode(const StageDecoder& dec, const SparseEncoding& phi) {
    return decode_trace(dec, phi).delta;
}

namespace {

using Md = Eigen::MatrixXd;

// Ridge OLS on indicator features: B (P x o) solving (X^T X + lambda I) B = X^T Y.
Md ridge_ols(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, int input_dim, double lambda) {
    const int n = static_cast<int>(X.size());
    const int o = Y.cols;
    Md gram = Md::Zero(input_dim, input_dim);
    Md xty = Md::Zero(input_dim, o);
    for (int i = 0; i < n; ++i) {
        for (const std::uint32_t a : X[i].active_indices) {
            if (a >= static_cast<std::uint32_t>(input_dim)) throw std::out_of_range("fit: active index out of range");
            for (const std::uint32_t b : X[i].active_indices) gram(a, b) += 1.0;
            for (int c = 0; c < o; ++c) xty(a, c) += Y.at(i, c);
        }
    }
    gram.diagonal().array() += lambda;
    const Eigen::LLT<Md> llt(gram);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("fit: normal-equation factorization failed");
    return llt.solve(xty);
}

void validate_fit_inputs(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, double lambda) {
    if (X.empty()) throw std::invalid_argument("fit: no samples");
    if (static_cast<int>(X.size()) != Y.rows) throw std::invalid_argument("fit: X/Y size mismatch");
    if (lambda <= 0.0) throw std::invalid_argument("fit: ridge lambda must be positive");
}

int infer_input_dim(const std::vector<SparseEncoding>& X) {
    std::uint32_t max = 0;
    for (const auto& phi : X)
        for (const std::uint32_t j : phi.active_indices) max = std::max(max, j);
    return static_cast<int>(max) + 1;
}

} // namespace

StageDecoder fit_ll(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, double lambda) {
    validate_fit_inputs(X, Y, lambda);
    const int input_dim = infer_input_dim(X);
    const Md b = ridge_ols(X, Y, input_dim, lambda);

    StageDecoder dec;
    dec.kind = DecoderKind::LL;
    dec.input_dim = input_dim;
    dec.output_dim = Y.cols;
    dec.rank = 0;
    dec.w1 = DenseMatrix(Y.cols, input_dim);
    for (int r = 0; r < Y.cols; ++r)
        for (int c = 0; c < input_dim; ++c) dec.w1.at(r, c) = static_cast<float>(b(c, r));
    dec.rebuild_cache();
    return dec;
}

StageDecoder fit_rrr(const std::vector<SparseEncoding>& X, const DenseMatrix& Y, int rank, double lambda) {
    validate_fit_inputs(X, Y, lambda);
    const int o = Y.cols;
    if (rank < 1 || rank > o) throw std::invalid_argument("fit_rrr: rank must be in [1, o]");

    const int input_dim = infer_input_dim(X);
    const int n = static_cast<int>(X.size());
    const Md b = ridge_ols(X, Y, input_dim, lambda);

    // fitted values, rows are B^T phi_i
    Md fitted = Md::Zero(n, o);
    for (int i = 0; i < n; ++i)
        for (const std::uint32_t j : X[i].active_indices) fitted.row(i) += b.row(static_cast<int>(j));

    Eigen::BDCSVD<Md> svd(fitted, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw std::runtime_error("fit_rrr: SVD failed on degenerate data");
    if (svd.matrixV().cols() < rank)
        throw std::runtime_error("fit_rrr: SVD produced fewer directions than the requested rank");
    const Md vr = svd.matrixV().leftCols(rank);  // o x r
    const Md w1 = (b * vr).transpose();          // r x P

    StageDecoder dec;
    dec.kind = DecoderKind::RRR;
    dec.input_dim = input_dim;
    dec.output_dim = o;
    dec.rank = rank;
    dec.w1 = DenseMatrix(rank, input_dim);
    for (int r = 0; r < rank; ++r)
        for (int c = 0; c < input_dim; ++c) dec.w1.at(r, c) = static_cast<float>(w1(r, c));
    dec.w2 = DenseMatrix(o, rank);
    for (int r = 0; r < o; ++r)
        for (int c = 0; c < rank; ++c) dec.w2.at(r, c) = static_cast<float>(vr(r, c));
    dec.rebuild_cache();
    return dec;
}

StageDecoder init_weights(DecoderKind kind, int input_dim, int output_dim, int rank, Rng& rng) {
    StageDecoder dec;
    dec.kind = kind;
    dec.input_dim = input_dim;
    dec.output_dim = output_dim;
    dec.rank = kind == DecoderKind::LL ? 0 : rank;

    const auto fill = [&rng](DenseMatrix& m) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
        for (float& v : m.data) v = static_cast<float>(rng.uniform(-scale, scale));
    };

    switch (kind) {
        case DecoderKind::LL:
            dec.w1 = DenseMatrix(output_dim, input_dim);
            fill(dec.w1);
            break;
        case DecoderKind::RRR:
        case DecoderKind::RRRBP:
            if (rank < 1 || rank > output_dim) throw std::invalid_argument("init_weights: bad rank");
            dec.w1 = DenseMatrix(rank, input_dim);
            dec.w2 = DenseMatrix(output_dim, rank);
            fill(dec.w1);
            fill(dec.w2);
            break;
        case DecoderKind::NN:
            if (rank < 1) throw std::invalid_argument("init_weights: bad rank");
            dec.w1 = DenseMatrix(rank, input_dim);
            dec.w2 = DenseMatrix(2 * rank, rank);
            dec.w3 = DenseMatrix(output_dim, 2 * rank);
            fill(dec.w1);
            fill(dec.w2);
            fill(dec.w3);
            dec.b1.assign(rank, 0.0f);
            dec.b2.assign(2 * rank, 0.0f);
            dec.b3.assign(output_dim, 0.0f);
            break;
    }
    dec.rebuild_cache();
    return dec;
}

double mse_loss(const StageDecoder& dec, const std::vector<SparseEncoding>& X, const DenseMatrix& Y,
                std::span<const std::uint32_t> indices) {
    if (indices.empty()) return 0.0;
    double total = 0.0;
    for (const std::uint32_t i : indices) {
        const std::vector<float> f = decode(dec, X[i]);
        double s = 0.0;
        for (int c = 0; c < Y.cols; ++c) {
            const double d = static_cast<double>(f[c]) - Y.at(static_cast<int>(i), c);
            s += d * d;
        }
        total += s / Y.cols;
    }
    return total / static_cast<double>(indices.size());
}

SgdGradients sgd_gradients(const StageDecoder& dec, const std::vector<SparseEncoding>& X, const DenseMatrix& Y,
                           std::span<const std::uint32_t> batch) {
    if (dec.kind != DecoderKind::RRRBP && dec.kind != DecoderKind::NN)
        throw std::invalid_argument("sgd_gradients: only RRRBP and NN are SGD-trainable");
    if (dec.quantized()) throw std::invalid_argument("sgd_gradients: decoder is quantized");

    SgdGradients g;
    g.gw1 = DenseMatrix(dec.w1.rows, dec.w1.cols);
    g.gw2 = DenseMatrix(dec.w2.rows, dec.w2.cols);
    if (dec.kind == DecoderKind::NN) {
        g.gw3 = DenseMatrix(dec.w3.rows, dec.w3.cols);
        g.gb1.assign(dec.b1.size(), 0.0);
        g.gb2.assign(dec.b2.size(), 0.0);
        g.gb3.assign(dec.b3.size(), 0.0);
    }

    const int o = dec.output_dim;
    const int r = dec.rank;
    const double inv = 1.0 / static_cast<double>(batch.size());

    for (const std::uint32_t i : batch) {
        const SparseEncoding& phi = X[i];
        const std::vector<float> e = phi_projection(dec, phi);

        if (dec.kind == DecoderKind::RRRBP) {
            std::vector<float> f;
            dense_affine(dec.w2, e, {}, f);
            // dL/df, L = mean over batch of (1/o)||f - y||^2
            std::vector<double> gf(o);
            double loss = 0.0;
            for (int c = 0; c < o; ++c) {
                const double d = static_cast<double>(f[c]) - Y.at(static_cast<int>(i), c);
                loss += d * d;
                gf[c] = 2.0 * d / (o * 1.0) * inv;
            }
            g.loss += loss / o * inv;

            std::vector<double> ge(r, 0.0);
            for (int c = 0; c < o; ++c) {
                for (int k = 0; k < r; ++k) {
                    g.gw2.at(c, k) += static_cast<float>(gf[c] * e[k]);
                    ge[k] += gf[c] * dec.w2.at(c, k);
                }
            }
            for (const std::uint32_t j : phi.active_indices)
                for (int k = 0; k < r; ++k) g.gw1.at(k, static_cast<int>(j)) += static_cast<float>(ge[k]);
        } else {
            std::vector<float> h1(e);
            for (int k = 0; k < r; ++k) h1[k] = std::tanh(h1[k] + dec.b1[k]);
            std::vector<float> h2;
            dense_affine(dec.w2, h1, dec.b2, h2);
            for (float& v : h2) v = std::tanh(v);
            std::vector<float> f;
            dense_affine(dec.w3, h2, dec.b3, f);

            std::vector<double> gf(o);
            double loss = 0.0;
            for (int c = 0; c < o; ++c) {
                const double d = static_cast<double>(f[c]) - Y.at(static_cast<int>(i), c);
                loss += d * d;
                gf[c] = 2.0 * d / static_cast<double>(o) * inv;
            }
            g.loss += loss / o * inv;

            const int h = 2 * r;
            std::vector<double> gh2(h, 0.0);
            for (int c = 0; c < o; ++c) {
                g.gb3[c] += gf[c];
                for (int k = 0; k < h; ++k) {
                    g.gw3.at(c, k) += static_cast<float>(gf[c] * h2[k]);
                    gh2[k] += gf[c] * dec.w3.at(c, k);
                }
            }
            std::vector<double> gz2(h);
            for (int k = 0; k < h; ++k) gz2[k] = gh2[k] * (1.0 - static_cast<double>(h2[k]) * h2[k]);

            std::vector<double> gh1(r, 0.0);
            for (int k = 0; k < h; ++k) {
                g.gb2[k] += gz2[k];
                for (int m = 0; m < r; ++m) {
                    g.gw2.at(k, m) += static_cast<float>(gz2[k] * h1[m]);
                    gh1[m] += gz2[k] * dec.w2.at(k, m);
                }
            }
            std::vector<double> gz1(r);
            for (int m = 0; m < r; ++m) {
                gz1[m] = gh1[m] * (1.0 - static_cast<double>(h1[m]) * h1[m]);
                g.gb1[m] += gz1[m];
            }
            for (const std::uint32_t j : phi.active_indices)
                for (int m = 0; m < r; ++m) g.gw1.at(m, static_cast<int>(j)) += static_cast<float>(gz1[m]);
        }
    }
    return g;
}

namespace {

struct GradAccum {
    std::vector<double> w1, w2, w3, b1, b2, b3;
    std::vector<std::uint32_t> touched;          // w1 columns hit this batch
    std::vector<std::uint8_t> touched_flag;

    void init(const StageDecoder& dec) {
        w1.assign(dec.w1.data.size(), 0.0);
        w2.assign(dec.w2.data.size(), 0.0);
        w3.assign(dec.w3.data.size(), 0.0);
        b1.assign(dec.b1.size(), 0.0);
        b2.assign(dec.b2.size(), 0.0);
        b3.assign(dec.b3.size(), 0.0);
        touched_flag.assign(dec.input_dim, 0);
        touched.clear();
    }

    void reset(const StageDecoder& dec) {
        const int rows = dec.w1.rows;
        const int cols = dec.w1.cols;
        for (const std::uint32_t c : touched) {
            for (int r = 0; r < rows; ++r) w1[static_cast<std::size_t>(r) * cols + c] = 0.0;
            touched_flag[c] = 0;
        }
        touched.clear();
        std::fill(w2.begin(), w2.end(), 0.0);
        std::fill(w3.begin(), w3.end(), 0.0);
        std::fill(b1.begin(), b1.end(), 0.0);
        std::fill(b2.begin(), b2.end(), 0.0);
        std::fill(b3.begin(), b3.end(), 0.0);
    }
};

// forward + backward for one sample, double accumulators
double accumulate_sample(const StageDecoder& dec, const SparseEncoding& phi, const DenseMatrix& Y, int row,
                         double weight, GradAccum& acc) {
    const int o = dec.output_dim;
    const int r = dec.rank;
    const int cols = dec.w1.cols;
    const std::vector<float> e = phi_projection(dec, phi);

    for (const std::uint32_t j : phi.active_indices) {
        if (!acc.touched_flag[j]) {
            acc.touched_flag[j] = 1;
            acc.touched.push_back(j);
        }
    }

    if (dec.kind == DecoderKind::RRRBP) {
        std::vector<float> f;
        dense_affine(dec.w2, e, {}, f);
        std::vector<double> gf(o);
        double loss = 0.0;
        for (int c = 0; c < o; ++c) {
            const double d = static_cast<double>(f[c]) - Y.at(row, c);
            loss += d * d;
            gf[c] = 2.0 * d / static_cast<double>(o) * weight;
        }
        std::vector<double> ge(r, 0.0);
        for (int c = 0; c < o; ++c) {
            const std::size_t base = static_cast<std::size_t>(c) * r;
            for (int k = 0; k < r; ++k) {
                acc.w2[base + k] += gf[c] * e[k];
                ge[k] += gf[c] * dec.w2.at(c, k);
            }
        }
        for (const std::uint32_t j : phi.active_indices)
            for (int k = 0; k < r; ++k) acc.w1[static_cast<std::size_t>(k) * cols + j] += ge[k];
        return loss / o;
    }

    std::vector<float> h1(e);
    for (int k = 0; k < r; ++k) h1[k] = std::tanh(h1[k] + dec.b1[k]);
    std::vector<float> h2;
    dense_affine(dec.w2, h1, dec.b2, h2);
    for (float& v : h2) v = std::tanh(v);
    std::vector<float> f;
    dense_affine(dec.w3, h2, dec.b3, f);

    const int h = 2 * r;
    std::vector<double> gf(o);
    double loss = 0.0;
    for (int c = 0; c < o; ++c) {
        const double d = static_cast<double>(f[c]) - Y.at(row, c);
        loss += d * d;
        gf[c] = 2.0 * d / static_cast<double>(o) * weight;
    }
    std::vector<double> gh2(h, 0.0);
    for (int c = 0; c < o; ++c) {
        acc.b3[c] += gf[c];
        const std::size_t base = static_cast<std::size_t>(c) * h;
        for (int k = 0; k < h; ++k) {
            acc.w3[base + k] += gf[c] * h2[k];
            gh2[k] += gf[c] * dec.w3.at(c, k);
        }
    }
    std::vector<double> gz2(h);
    for (int k = 0; k < h; ++k) gz2[k] = gh2[k] * (1.0 - static_cast<double>(h2[k]) * h2[k]);
    std::vector<double> gh1(r, 0.0);
    for (int k = 0; k < h; ++k) {
        acc.b2[k] += gz2[k];
        const std::size_t base = static_cast<std::size_t>(k) * r;
        for (int m = 0; m < r; ++m) {
            acc.w2[base + m] += gz2[k] * h1[m];
            gh1[m] += gz2[k] * dec.w2.at(k, m);
        }
    }
    std::vector<double> gz1(r);
    for (int m = 0; m < r; ++m) {
        gz1[m] = gh1[m] * (1.0 - static_cast<double>(h1[m]) * h1[m]);
        acc.b1[m] += gz1[m];
    }
    for (const std::uint32_t j : phi.active_indices)
        for (int m = 0; m < r; ++m) acc.w1[static_cast<std::size_t>(m) * cols + j] += gz1[m];
    return loss / o;
}

void apply_update(StageDecoder& dec, const GradAccum& acc, double eta) {
    const int rows = dec.w1.rows;
    const int cols = dec.w1.cols;
    for (const std::uint32_t c : acc.touched)
        for (int r = 0; r < rows; ++r) {
            const std::size_t k = static_cast<std::size_t>(r) * cols + c;
            dec.w1.data[k] = static_cast<float>(dec.w1.data[k] - eta * acc.w1[k]);
        }
    for (std::size_t k = 0; k < dec.w2.data.size(); ++k)
        dec.w2.data[k] = static_cast<float>(dec.w2.data[k] - eta * acc.w2[k]);
    for (std::size_t k = 0; k < dec.w3.data.size(); ++k)
        dec.w3.data[k] = static_cast<float>(dec.w3.data[k] - eta * acc.w3[k]);
    for (std::size_t k = 0; k < dec.b1.size(); ++k)
        dec.b1[k] = static_cast<float>(dec.b1[k] - eta * acc.b1[k]);
    for (std::size_t k = 0; k < dec.b2.size(); ++k)
        dec.b2[k] = static_cast<float>(dec.b2[k] - eta * acc.b2[k]);
    for (std::size_t k = 0; k < dec.b3.size(); ++k)
        dec.b3[k] = static_cast<float>(dec.b3[k] - eta * acc.b3[k]);
}

} // namespace

std::pair<StageDecoder, TrainLog> fit_sgd(StageDecoder init, const std::vector<SparseEncoding>& X,
                                          const DenseMatrix& Y, const SgdSchedule& schedule, Rng& rng,
                                          std::span<const std::uint32_t> source_ids,
                                          std::span<const std::uint32_t> val_indices) {
    if (init.kind != DecoderKind::RRRBP && init.kind != DecoderKind::NN)
        throw std::invalid_argument("fit_sgd: only RRRBP and NN are SGD-trainable");
    if (X.empty() || static_cast<int>(X.size()) != Y.rows)
        throw std::invalid_argument("fit_sgd: bad training data");

    const std::uint32_t n = static_cast<std::uint32_t>(X.size());
    std::vector<std::uint32_t> train, val;
    if (!val_indices.empty()) {
        std::vector<std::uint8_t> is_val(n, 0);
        for (const std::uint32_t i : val_indices) is_val[i] = 1;
        for (std::uint32_t i = 0; i < n; ++i) (is_val[i] ? val : train).push_back(i);
    } else if (!source_ids.empty() && source_ids.size() == n) {
        // hold out whole source images so augmented copies never leak across
        std::vector<std::uint32_t> sources(source_ids.begin(), source_ids.end());
        std::sort(sources.begin(), sources.end());
        sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
        for (std::size_t i = sources.size(); i > 1; --i)
            std::swap(sources[i - 1], sources[rng.below(i)]);
        const std::size_t nval = std::max<std::size_t>(1, static_cast<std::size_t>(sources.size() * schedule.val_fraction));
        std::vector<std::uint8_t> val_source(sources.size() ? *std::max_element(sources.begin(), sources.end()) + 1 : 1, 0);
        for (std::size_t i = 0; i < nval; ++i) val_source[sources[i]] = 1;
        for (std::uint32_t i = 0; i < n; ++i) (val_source[source_ids[i]] ? val : train).push_back(i);
    } else {
        std::vector<std::uint32_t> order(n);
        for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        const std::size_t nval = std::max<std::size_t>(1, static_cast<std::size_t>(n * schedule.val_fraction));
        val.assign(order.begin(), order.begin() + nval);
        train.assign(order.begin() + nval, order.end());
        std::sort(val.begin(), val.end());
        std::sort(train.begin(), train.end());
    }
    if (train.empty()) throw std::invalid_argument("fit_sgd: empty training split");

    StageDecoder dec = std::move(init);
    dec.invalidate_cache();  // w1 changes every batch; read it directly
    StageDecoder best = dec;
    TrainLog log;
    double eta = schedule.eta0;
    double best_val = std::numeric_limits<double>::infinity();
    int plateau_streak = 0;

    GradAccum acc;
    acc.init(dec);

    for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
        for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng.below(i)]);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train.size(); start += schedule.minibatch) {
            const std::size_t stop = std::min(train.size(), start + static_cast<std::size_t>(schedule.minibatch));
            const double weight = 1.0 / static_cast<double>(stop - start);
            acc.reset(dec);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i)
                batch_loss += accumulate_sample(dec, X[train[i]], Y, static_cast<int>(train[i]), weight, acc);
            apply_update(dec, acc, eta);
            epoch_loss += batch_loss * weight;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);

        const double vloss = val.empty() ? epoch_loss : mse_loss(dec, X, Y, val);
        if (!std::isfinite(epoch_loss) || !std::isfinite(vloss))
            throw DivergenceError("fit_sgd: loss diverged (non-finite)");

        log.train_loss.push_back(epoch_loss);
        log.val_loss.push_back(vloss);
        log.learning_rate.push_back(eta);

        if (vloss < best_val * (1.0 - schedule.plateau_rel)) {
            plateau_streak = 0;
        } else {
            ++plateau_streak;
        }
        if (vloss < best_val) {
            best_val = vloss;
            best = dec;
            log.best_epoch = epoch;
        }
        if (plateau_streak >= schedule.patience) {
            eta *= 0.5;
            plateau_streak = 0;
            if (eta < schedule.eta_min) break;
        }
    }
    best.rebuild_cache();
    return {std::move(best), std::move(log)};
}

} // namespace tcsc
