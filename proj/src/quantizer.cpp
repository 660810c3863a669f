#include "tcsc/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tcsc/cascade.hpp"
#include "tcsc/modelio.hpp"

namespace tcsc {

std::uint32_t QuantizedMatrix::index_at(int r, int c) const {
    const std::size_t bit = (static_cast<std::size_t>(r) * cols + c) * q;
    const std::size_t byte = bit >> 3;
    const int off = static_cast<int>(bit & 7);
    std::uint32_t v = static_cast<std::uint32_t>(packed[byte]) >> off;
    if (8 - off < q) v |= static_cast<std::uint32_t>(packed[byte + 1]) << (8 - off);
    return v & ((1u << q) - 1u);
}

int nearest_centroid(std::span<const float> sorted_centroids, float v) {
    const float* begin = sorted_centroids.data();
    const float* end = begin + sorted_centroids.size();
    const float* it = std::lower_bound(begin, end, v);
    if (it == begin) return 0;
    if (it == end) return static_cast<int>(sorted_centroids.size()) - 1;
    const int hi = static_cast<int>(it - begin);
    const int lo = hi - 1;
    const double dlo = static_cast<double>(v) - begin[lo];
    const double dhi = static_cast<double>(begin[hi]) - v;
    return dlo <= dhi ? lo : hi;
}

std::vector<float> kmeans_1d(const std::vector<float>& values, int k, Rng& rng, int max_iters) {
    if (values.empty()) throw std::invalid_argument("kmeans_1d: empty input");
    if (k < 1) throw std::invalid_argument("kmeans_1d: k must be >= 1");

    std::vector<float> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    // <= k distinct values: each gets its own centroid, zero error
    std::vector<float> distinct;
    distinct.push_back(sorted[0]);
    for (std::size_t i = 1; i < n && distinct.size() <= static_cast<std::size_t>(k); ++i)
        if (sorted[i] != distinct.back()) distinct.push_back(sorted[i]);
    if (distinct.size() <= static_cast<std::size_t>(k)) {
        while (distinct.size() < static_cast<std::size_t>(k)) distinct.push_back(distinct.back());
        return distinct;
    }

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

    // k-means++ seeding over the sorted data
    std::vector<float> centroids;
    centroids.reserve(k);
    std::vector<double> d2(n);
    centroids.push_back(sorted[rng.below(n)]);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(sorted[i]) - centroids[0];
        d2[i] = d * d;
    }
    while (centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += d2[i];
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.below(n);  // unreachable for > k distinct values
        } else {
            double target = rng.uniform() * total;
            for (; pick + 1 < n; ++pick) {
                target -= d2[pick];
                if (target <= 0.0) break;
            }
        }
        const float c = sorted[pick];
        centroids.push_back(c);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(sorted[i]) - c;
            d2[i] = std::min(d2[i], d * d);
        }
    }
    std::sort(centroids.begin(), centroids.end());

    // Lloyd iterations; on sorted data each cluster is a contiguous segment,
    // so assignments reduce to k-1 cut positions.
    std::vector<std::size_t> cuts(k + 1, 0), prev_cuts;
    cuts[k] = n;
    for (int iter = 0; iter < max_iters; ++iter) {
        for (int j = 1; j < k; ++j) {
            // first element strictly closer to centroid j than j-1
            const double mid = 0.5 * (static_cast<double>(centroids[j - 1]) + centroids[j]);
            const auto it = std::upper_bound(sorted.begin(), sorted.end(), static_cast<float>(mid));
            cuts[j] = static_cast<std::size_t>(it - sorted.begin());
        }
        for (int j = 1; j < k; ++j) cuts[j] = std::max(cuts[j], cuts[j - 1]);

        // reseed an empty cluster (one per pass) to the point farthest from
        // its assigned centroid
        bool reseeded = false;
        for (int j = 0; j < k && !reseeded; ++j) {
            if (cuts[j + 1] > cuts[j]) continue;
            double worst = -1.0;
            std::size_t worst_idx = 0;
            for (int m = 0; m < k; ++m) {
                for (std::size_t i = cuts[m]; i < cuts[m + 1]; ++i) {
                    const double d = std::abs(static_cast<double>(sorted[i]) - centroids[m]);
                    if (d > worst) {
                        worst = d;
                        worst_idx = i;
                    }
                }
            }
            centroids[j] = sorted[worst_idx];
            reseeded = true;
        }
        if (reseeded) {
            std::sort(centroids.begin(), centroids.end());
            prev_cuts.clear();
            continue;
        }

        if (cuts == prev_cuts) break;
        prev_cuts = cuts;

        for (int j = 0; j < k; ++j) {
            const std::size_t a = cuts[j], b = cuts[j + 1];
            if (b > a) centroids[j] = static_cast<float>((prefix[b] - prefix[a]) / static_cast<double>(b - a));
        }
        std::sort(centroids.begin(), centroids.end());
    }
    return centroids;
}

std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int q) {
    std::vector<std::uint8_t> out((indices.size() * q + 7) / 8, 0);
    std::size_t bit = 0;
    for (const std::uint32_t v : indices) {
        const std::size_t byte = bit >> 3;
        const int off = static_cast<int>(bit & 7);
        out[byte] |= static_cast<std::uint8_t>(v << off);
        if (off + q > 8) out[byte + 1] |= static_cast<std::uint8_t>(v >> (8 - off));
        bit += q;
    }
    return out;
}

std::vector<std::uint32_t> unpack_indices(const std::vector<std::uint8_t>& packed, std::size_t count, int q) {
    std::vector<std::uint32_t> out(count);
    const std::uint32_t mask = (1u << q) - 1u;
    std::size_t bit = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t byte = bit >> 3;
        const int off = static_cast<int>(bit & 7);
        std::uint32_t v = static_cast<std::uint32_t>(packed[byte]) >> off;
        if (off + q > 8) v |= static_cast<std::uint32_t>(packed[byte + 1]) << (8 - off);
        out[i] = v & mask;
        bit += q;
    }
    return out;
}

QuantizedMatrix quantize_matrix(const DenseMatrix& m, int q, Rng& rng, int kmeans_iters) {
    if (q < 2 || q > 8) throw std::invalid_argument("quantize_matrix: q must be in [2, 8]");
    if (m.empty()) throw std::invalid_argument("quantize_matrix: empty matrix");

    QuantizedMatrix qm;
    qm.rows = m.rows;
    qm.cols = m.cols;
    qm.q = q;
    const int k = 1 << q;
    qm.codebooks.resize(static_cast<std::size_t>(m.rows) * k);

    std::vector<Rng> streams;
    streams.reserve(m.rows);
    for (int r = 0; r < m.rows; ++r) streams.push_back(rng.split(r));

    std::vector<std::uint32_t> indices(static_cast<std::size_t>(m.rows) * m.cols);
    std::vector<float> row(m.cols);
    for (int r = 0; r < m.rows; ++r) {
        const auto src = m.row(r);
        row.assign(src.begin(), src.end());
        const std::vector<float> cb = kmeans_1d(row, k, streams[r], kmeans_iters);
        std::copy(cb.begin(), cb.end(), qm.codebooks.begin() + static_cast<std::size_t>(r) * k);
        for (int c = 0; c < m.cols; ++c)
            indices[static_cast<std::size_t>(r) * m.cols + c] =
                static_cast<std::uint32_t>(nearest_centroid(cb, src[c]));
    }
    qm.packed = pack_indices(indices, q);
    return qm;
}

DenseMatrix dequantize(const QuantizedMatrix& qm) {
    DenseMatrix m(qm.rows, qm.cols);
    const std::vector<std::uint32_t> idx =
        unpack_indices(qm.packed, static_cast<std::size_t>(qm.rows) * qm.cols, qm.q);
    for (int r = 0; r < qm.rows; ++r) {
        const float* cb = qm.codebook(r);
        for (int c = 0; c < qm.cols; ++c)
            m.at(r, c) = cb[idx[static_cast<std::size_t>(r) * qm.cols + c]];
    }
    return m;
}

std::size_t MemoryReport::forest_bytes() const {
    std::size_t s = 0;
    for (const auto& st : stages) s += st.forest_bytes;
    return s;
}
std::size_t MemoryReport::unquantized_matrix_bytes() const {
    std::size_t s = 0;
    for (const auto& st : stages) s += st.unquantized_matrix_bytes;
    return s;
}
std::size_t MemoryReport::quantized_payload_bytes() const {
    std::size_t s = 0;
    for (const auto& st : stages) s += st.quantized_payload_bytes;
    return s;
}
std::size_t MemoryReport::codebook_bytes() const {
    std::size_t s = 0;
    for (const auto& st : stages) s += st.codebook_bytes;
    return s;
}
std::size_t MemoryReport::total_bytes() const {
    return forest_bytes() + unquantized_matrix_bytes() + quantized_payload_bytes() + codebook_bytes();
}
std::size_t MemoryReport::weight_bytes() const {
    return unquantized_matrix_bytes() + quantized_payload_bytes() + codebook_bytes();
}

StageDecoder quantize_decoder(const StageDecoder& dec, int q, Rng& rng, int kmeans_iters) {
    if (dec.quantized()) throw std::invalid_argument("quantize_decoder: already quantized");
    StageDecoder out = dec;
    out.w1_q = quantize_matrix(dec.w1, q, rng, kmeans_iters);
    out.w1 = DenseMatrix{};
    out.rebuild_cache();
    return out;
}

CascadeModel quantize_model(const CascadeModel& model, int q, Rng& rng, int kmeans_iters) {
    if (model.config.q != 0) throw std::invalid_argument("quantize_model: model is already quantized");
    if (q < 2 || q > 8) throw std::invalid_argument("quantize_model: q must be in [2, 8]");
    CascadeModel out;
    out.config = model.config;
    out.config.q = static_cast<std::uint8_t>(q);
    out.mean_shape = model.mean_shape;
    out.stages.reserve(model.stages.size());
    for (std::size_t t = 0; t < model.stages.size(); ++t) {
        CascadeStage stage;
        stage.forest = model.stages[t].forest;
        Rng stage_rng = rng.split(t);
        stage.decoder = quantize_decoder(model.stages[t].decoder, q, stage_rng, kmeans_iters);
        out.stages.push_back(std::move(stage));
    }
    return out;
}

MemoryReport memory_report(const CascadeModel& model) {
    MemoryReport report;
    report.stages.reserve(model.stages.size());
    for (const CascadeStage& stage : model.stages) {
        StageMemory mem;
        mem.forest_bytes = stage.forest.trees.size() *
                           (static_cast<std::size_t>(stage.forest.leaf_count()) - 1) * kForestNodeBytes;
        const StageDecoder& dec = stage.decoder;
        if (dec.quantized()) {
            mem.quantized_payload_bytes = dec.w1_q->payload_bytes();
            mem.codebook_bytes = dec.w1_q->codebook_bytes();
        } else {
            mem.unquantized_matrix_bytes += dec.w1.data.size() * sizeof(float);
        }
        mem.unquantized_matrix_bytes += dec.w2.data.size() * sizeof(float);
        mem.unquantized_matrix_bytes += dec.w3.data.size() * sizeof(float);
        mem.unquantized_matrix_bytes += (dec.b1.size() + dec.b2.size() + dec.b3.size()) * sizeof(float);
        report.stages.push_back(mem);
    }
    return report;
}

} // namespace tcsc
