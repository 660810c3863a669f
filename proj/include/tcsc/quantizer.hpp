#ifndef TCSC_QUANTIZER_HPP
#define TCSC_QUANTIZER_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "tcsc/matrix.hpp"
#include "tcsc/rng.hpp"

namespace tcsc {

struct CascadeModel;  // defined in cascade.hpp

// Row-wise q-bit codebook quantization of a matrix: every row carries its own
// 2^q-centroid table, weights are stored as q-bit indices packed row-major,
// little-endian within each byte.
struct QuantizedMatrix {
    int rows = 0;
    int cols = 0;
    int q = 0;                        // bits per weight, 2..8
    std::vector<float> codebooks;     // rows * 2^q centroids, row-major, each row sorted ascending
    std::vector<std::uint8_t> packed; // ceil(rows*cols*q/8) bytes

    int codebook_size() const { return 1 << q; }
    const float* codebook(int r) const { return codebooks.data() + static_cast<std::size_t>(r) * codebook_size(); }

    // index of entry (r, c) in the packed grid
    std::uint32_t index_at(int r, int c) const;

    std::size_t payload_bytes() const { return packed.size(); }
    std::size_t codebook_bytes() const { return codebooks.size() * sizeof(float); }
};

// Lloyd's algorithm with k-means++ seeding on scalar data; empty clusters are
// reseeded to the point farthest from its assigned centroid. Returns exactly
// k centroids sorted ascending (duplicated tail values when the data has
// fewer than k distinct entries). Deterministic given the rng state.
std::vector<float> kmeans_1d(const std::vector<float>& values, int k, Rng& rng, int max_iters = 50);

// Index of the centroid nearest to v in an ascending-sorted codebook; ties
// take the lower index. Part of the quantized-format contract.
int nearest_centroid(std::span<const float> sorted_centroids, float v);

QuantizedMatrix quantize_matrix(const DenseMatrix& m, int q, Rng& rng, int kmeans_iters = 50);

// Nearest-centroid reconstruction; exact when each row had <= 2^q distinct values.
DenseMatrix dequantize(const QuantizedMatrix& qm);

// q-bit little-endian-within-byte bit packing of an index grid.
std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int q);
std::vector<std::uint32_t> unpack_indices(const std::vector<std::uint8_t>& packed, std::size_t count, int q);

struct StageDecoder;  // decoders.hpp

// Quantizes the phi-facing matrix (W for LL, W1 otherwise); everything else
// stays 32-bit. Throws if the decoder is already quantized.
StageDecoder quantize_decoder(const StageDecoder& dec, int q, Rng& rng, int kmeans_iters = 50);
CascadeModel quantize_model(const CascadeModel& model, int q, Rng& rng, int kmeans_iters = 50);

// Byte accounting for a serialized model, mirroring the model file layout
// exactly: file size == header_bytes + MemoryReport.total_bytes().
struct StageMemory {
    std::size_t forest_bytes = 0;
    std::size_t unquantized_matrix_bytes = 0;  // all float32-stored weights and biases
    std::size_t quantized_payload_bytes = 0;
    std::size_t codebook_bytes = 0;

    std::size_t total() const {
        return forest_bytes + unquantized_matrix_bytes + quantized_payload_bytes + codebook_bytes;
    }
};

struct MemoryReport {
    std::vector<StageMemory> stages;

    std::size_t forest_bytes() const;
    std::size_t unquantized_matrix_bytes() const;
    std::size_t quantized_payload_bytes() const;
    std::size_t codebook_bytes() const;
    std::size_t total_bytes() const;
    // regression structures only (Table-2 style accounting minus trees)
    std::size_t weight_bytes() const;
};

MemoryReport memory_report(const CascadeModel& model);

} // namespace tcsc

#endif
