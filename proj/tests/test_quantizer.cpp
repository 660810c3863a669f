#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tcsc/modelio.hpp"
#include "tcsc/quantizer.hpp"
#include "test_models.hpp"

using namespace tcsc;

namespace {

DenseMatrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    DenseMatrix m(rows, cols);
    for (float& v : m.data) v = static_cast<float>(rng.uniform(-scale, scale));
    return m;
}

double quantization_mse(const DenseMatrix& m, const QuantizedMatrix& qm) {
    const DenseMatrix back = dequantize(qm);
    double s = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double d = static_cast<double>(m.data[i]) - back.data[i];
        s += d * d;
    }
    return s / static_cast<double>(m.data.size());
}

// exhaustive 1-D k-means oracle for k=2: try every sorted cut
double best_two_cluster_sse(std::vector<float> values) {
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    double best = std::numeric_limits<double>::infinity();
    for (int cut = 1; cut < n; ++cut) {
        double m1 = 0, m2 = 0;
        for (int i = 0; i < cut; ++i) m1 += values[i];
        for (int i = cut; i < n; ++i) m2 += values[i];
        m1 /= cut;
        m2 /= n - cut;
        double sse = 0;
        for (int i = 0; i < cut; ++i) sse += (values[i] - m1) * (values[i] - m1);
        for (int i = cut; i < n; ++i) sse += (values[i] - m2) * (values[i] - m2);
        best = std::min(best, sse);
    }
    return best;
}

} // namespace

TEST_SUITE("quantizer") {

TEST_CASE("kmeans_1d: at most k distinct values are reproduced exactly") {
    Rng rng(1);
    const std::vector<float> values{3.0f, -1.0f, 3.0f, 7.5f, -1.0f, 7.5f, 3.0f};
    const std::vector<float> cb = kmeans_1d(values, 4, rng);
    REQUIRE(cb.size() == 4);
    CHECK(cb[0] == -1.0f);
    CHECK(cb[1] == 3.0f);
    CHECK(cb[2] == 7.5f);
    CHECK(std::is_sorted(cb.begin(), cb.end()));
    // every value maps to itself
    for (const float v : values) {
        const bool exact = std::find(cb.begin(), cb.end(), v) != cb.end();
        CHECK(exact);
    }
}

TEST_CASE("kmeans_1d: two well-separated groups find their means") {
    Rng rng(2);
    const std::vector<float> values{0, 0, 0, 10, 10, 10};
    const std::vector<float> cb = kmeans_1d(values, 2, rng);
    REQUIRE(cb.size() == 2);
    CHECK(cb[0] == doctest::Approx(0.0));
    CHECK(cb[1] == doctest::Approx(10.0));
}

TEST_CASE("kmeans_1d with k=1 returns the mean") {
    Rng rng(3);
    std::vector<float> values;
    double sum = 0.0;
    for (int i = 0; i < 100; ++i) {
        values.push_back(static_cast<float>(rng.uniform(-5, 5)));
        sum += values.back();
    }
    const std::vector<float> cb = kmeans_1d(values, 1, rng);
    REQUIRE(cb.size() == 1);
    CHECK(cb[0] == doctest::Approx(sum / 100.0).epsilon(1e-5));
}

TEST_CASE("kmeans_1d lands on a Lloyd-stationary clustering near the k=2 optimum") {
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
        Rng rng(seed);
        std::vector<float> values;
        for (int i = 0; i < 40; ++i) values.push_back(static_cast<float>(rng.uniform(-1, 1)));
        const std::vector<float> cb = kmeans_1d(values, 2, rng);

        // stationarity: every centroid is the mean of the points assigned to it
        double sse = 0.0, sum0 = 0.0, sum1 = 0.0;
        int n0 = 0, n1 = 0;
        for (const float v : values) {
            const double d0 = std::abs(v - cb[0]), d1 = std::abs(v - cb[1]);
            if (d0 <= d1) {
                sum0 += v;
                ++n0;
                sse += d0 * d0;
            } else {
                sum1 += v;
                ++n1;
                sse += d1 * d1;
            }
        }
        REQUIRE(n0 > 0);
        REQUIRE(n1 > 0);
        CHECK(cb[0] == doctest::Approx(sum0 / n0).epsilon(1e-5));
        CHECK(cb[1] == doctest::Approx(sum1 / n1).epsilon(1e-5));
        // local minima exist, but k-means++ keeps them close to the optimum
        CHECK(sse <= best_two_cluster_sse(values) * 1.5 + 1e-12);
    }
}

TEST_CASE("kmeans_1d is deterministic and rejects bad input") {
    const std::vector<float> values{1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng a(5), b(5);
    CHECK(kmeans_1d(values, 3, a) == kmeans_1d(values, 3, b));
    Rng c(6);
    CHECK_THROWS_AS(kmeans_1d({}, 2, c), std::invalid_argument);
    CHECK_THROWS_AS(kmeans_1d(values, 0, c), std::invalid_argument);
}

TEST_CASE("pack/unpack round trip for every q") {
    Rng rng(7);
    for (int q = 2; q <= 8; ++q) {
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t count = 1 + rng.below(300);
            std::vector<std::uint32_t> indices(count);
            for (auto& v : indices) v = static_cast<std::uint32_t>(rng.below(1u << q));
            const auto packed = pack_indices(indices, q);
            CHECK(packed.size() == (count * q + 7) / 8);
            CHECK(unpack_indices(packed, count, q) == indices);
        }
    }
}

TEST_CASE("packing is little-endian within bytes") {
    // 4-bit entries 0x3, 0xA pack into one byte: low nibble first
    const auto packed = pack_indices({0x3, 0xA}, 4);
    REQUIRE(packed.size() == 1);
    CHECK(packed[0] == 0xA3);

    // 2-bit entries 1,2,3,0 -> 0b00'11'10'01
    const auto packed2 = pack_indices({1, 2, 3, 0}, 2);
    REQUIRE(packed2.size() == 1);
    CHECK(packed2[0] == 0x39);
}

TEST_CASE("quantize_matrix: rows with few distinct values dequantize exactly") {
    Rng rng(8);
    DenseMatrix m(3, 40);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 40; ++c) m.at(r, c) = static_cast<float>(rng.below(4)) * 0.5f - 1.0f;
    const QuantizedMatrix qm = quantize_matrix(m, 2, rng);  // 4 centroids, 4 distinct values
    CHECK(dequantize(qm) == m);
}

TEST_CASE("quantize_matrix: constant matrix gives all-zero payload") {
    Rng rng(9);
    DenseMatrix m(2, 30);
    for (float& v : m.data) v = 1.25f;
    const QuantizedMatrix qm = quantize_matrix(m, 3, rng);
    for (const std::uint8_t b : qm.packed) CHECK(b == 0);
    CHECK(dequantize(qm) == m);
}

TEST_CASE("quantization MSE is non-increasing in q") {
    Rng rng(10);
    const DenseMatrix m = random_matrix(rng, 4, 100);
    double prev = std::numeric_limits<double>::infinity();
    for (int q = 2; q <= 8; ++q) {
        Rng qr(42);
        const QuantizedMatrix qm = quantize_matrix(m, q, qr);
        const double mse = quantization_mse(m, qm);
        CHECK(mse <= prev + 1e-12);
        prev = mse;
    }
}

TEST_CASE("per-row codebooks beat one shared whole-matrix codebook") {
    // rows with wildly different scales: a shared codebook wastes its
    // dynamic range, per-row tables do not
    Rng rng(11);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int rows = 4, cols = 120, q = 4;
        DenseMatrix m(rows, cols);
        for (int r = 0; r < rows; ++r) {
            const double scale = std::pow(10.0, r - 2);
            for (int c = 0; c < cols; ++c) m.at(r, c) = static_cast<float>(rng.uniform(-scale, scale));
        }
        Rng qr(seed);
        const QuantizedMatrix qm = quantize_matrix(m, q, qr);
        const double per_row = quantization_mse(m, qm);

        // shared codebook over all entries
        Rng sr(seed);
        const std::vector<float> all(m.data.begin(), m.data.end());
        const std::vector<float> shared = kmeans_1d(all, 1 << q, sr);
        double shared_mse = 0.0;
        for (const float v : all) {
            double best = std::numeric_limits<double>::infinity();
            for (const float c : shared) best = std::min(best, std::abs(static_cast<double>(v) - c));
            shared_mse += best * best;
        }
        shared_mse /= static_cast<double>(all.size());
        CHECK(per_row <= shared_mse);
    }
}

TEST_CASE("nearest-centroid assignment: boundaries and ties to the lower index") {
    const std::vector<float> cb{-2.0f, 0.0f, 1.0f, 5.0f};
    CHECK(nearest_centroid(cb, -100.0f) == 0);
    CHECK(nearest_centroid(cb, 100.0f) == 3);
    CHECK(nearest_centroid(cb, 0.4f) == 1);
    CHECK(nearest_centroid(cb, 0.6f) == 2);
    CHECK(nearest_centroid(cb, -2.0f) == 0);
    // exact midpoints: lower index wins
    CHECK(nearest_centroid(cb, -1.0f) == 0);
    CHECK(nearest_centroid(cb, 0.5f) == 1);
    CHECK(nearest_centroid(cb, 3.0f) == 2);
}

TEST_CASE("quantized decode equals dequantize-then-decode bit-exactly") {
    Rng rng(16);
    for (const DecoderKind kind : {DecoderKind::LL, DecoderKind::RRR, DecoderKind::NN}) {
        StageDecoder dec = init_weights(kind, 48, 8, 4, rng);
        Rng qrng(17);
        const StageDecoder quant = quantize_decoder(dec, 4, qrng);

        StageDecoder reference = dec;
        reference.w1 = dequantize(*quant.w1_q);
        reference.rebuild_cache();

        for (int trial = 0; trial < 20; ++trial) {
            SparseEncoding phi;
            for (int t = 0; t < 12; ++t)
                phi.active_indices.push_back(static_cast<std::uint32_t>(t * 4 + rng.below(4)));
            const std::vector<float> a = decode(quant, phi);
            const std::vector<float> b = decode(reference, phi);
            CHECK(a == b);
        }
    }
}

TEST_CASE("q=8 on rows with at most 256 distinct values decodes identically") {
    Rng rng(18);
    StageDecoder dec = init_weights(DecoderKind::RRR, 64, 6, 3, rng);
    // snap weights to a 200-level grid
    for (float& v : dec.w1.data) v = std::round(v * 100.0f) / 100.0f;
    dec.rebuild_cache();
    Rng qrng(19);
    const StageDecoder quant = quantize_decoder(dec, 8, qrng);

    for (int trial = 0; trial < 20; ++trial) {
        SparseEncoding phi;
        for (int t = 0; t < 16; ++t)
            phi.active_indices.push_back(static_cast<std::uint32_t>(t * 4 + rng.below(4)));
        CHECK(decode(quant, phi) == decode(dec, phi));
    }
}

TEST_CASE("zero matrix quantizes to zero output at any q") {
    Rng rng(20);
    for (const int q : {2, 5, 8}) {
        StageDecoder dec = init_weights(DecoderKind::LL, 32, 4, 0, rng);
        for (float& v : dec.w1.data) v = 0.0f;
        dec.rebuild_cache();
        Rng qrng(21);
        const StageDecoder quant = quantize_decoder(dec, q, qrng);
        SparseEncoding phi;
        phi.active_indices = {1, 9, 17, 25};
        for (const float v : decode(quant, phi)) CHECK(v == 0.0f);
    }
}

TEST_CASE("memory_report: tiny arithmetic example") {
    // 1 stage, 1 landmark, 1 tree, depth 3 -> P = 8; LL output 2
    CascadeModel model = tcsc_test::random_model(DecoderKind::LL, 1, 1, 3, 1, {0}, 22);
    Rng rng(23);
    const CascadeModel quant = quantize_model(model, 2, rng);
    const MemoryReport report = memory_report(quant);
    REQUIRE(report.stages.size() == 1);
    // payload: 2x8 entries at 2 bits = 4 bytes; codebooks: 2 rows * 4 * 4 bytes
    CHECK(report.stages[0].quantized_payload_bytes == 4);
    CHECK(report.stages[0].codebook_bytes == 32);
    // a single 1x8 row at q=2: 2 bytes payload, 16 bytes codebook
    Rng rng2(24);
    DenseMatrix m = random_matrix(rng2, 1, 8);
    const QuantizedMatrix qm = quantize_matrix(m, 2, rng2);
    CHECK(qm.payload_bytes() == 2);
    CHECK(qm.codebook_bytes() == 16);
}

TEST_CASE("memory_report: paper-scale weight arithmetic") {
    // LL at 300W dimensions: 5 stages of 136 x 10880 float32
    const std::vector<std::uint16_t> zeros(5, 0);
    const CascadeModel ll = tcsc_test::random_model(DecoderKind::LL, 68, 5, 5, 5, zeros, 25);
    const MemoryReport ll_report = memory_report(ll);
    CHECK(ll_report.unquantized_matrix_bytes() == 29593600);
    // within 10% of Table 2's 27901 KB
    const double ll_kb = static_cast<double>(ll_report.weight_bytes()) / 1024.0;
    CHECK(std::abs(ll_kb - 27901.0) / 27901.0 < 0.10);

    // RRR with the staged bottleneck: sum (r*P + o*r) * 4 = 7,050,240 bytes
    const std::vector<std::uint16_t> ranks{16, 24, 32, 40, 48};
    const CascadeModel rrr = tcsc_test::random_model(DecoderKind::RRR, 68, 5, 5, 5, ranks, 26);
    const MemoryReport rrr_report = memory_report(rrr);
    CHECK(rrr_report.unquantized_matrix_bytes() == 7050240);
    const double rrr_kb = static_cast<double>(rrr_report.weight_bytes()) / 1024.0;
    CHECK(std::abs(rrr_kb - 6790.0) / 6790.0 < 0.05);
}

TEST_CASE("memory_report total equals serialized size minus header") {
    namespace fs = std::filesystem;
    const fs::path tmp = fs::temp_directory_path() / "tcsc_quant_report.bin";
    for (const DecoderKind kind : {DecoderKind::LL, DecoderKind::RRR, DecoderKind::NN}) {
        for (const int q : {0, 2, 5, 8}) {
            CascadeModel model = tcsc_test::random_model(kind, 4, 2, 3, 2, {3, 4}, 27);
            if (q != 0) {
                Rng rng(28);
                model = quantize_model(model, q, rng);
            }
            const std::size_t written = save_model(model, tmp.string());
            const MemoryReport report = memory_report(model);
            CHECK(written == report.total_bytes() + header_bytes(4, 2));
        }
    }
    fs::remove(tmp);
}

TEST_CASE("quantize_model validates inputs") {
    CascadeModel model = tcsc_test::random_model(DecoderKind::RRR, 3, 1, 2, 1, {2}, 29);
    Rng rng(30);
    CHECK_THROWS_AS(quantize_model(model, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(quantize_model(model, 9, rng), std::invalid_argument);
    const CascadeModel quant = quantize_model(model, 4, rng);
    CHECK_THROWS_AS(quantize_model(quant, 4, rng), std::invalid_argument);
}

}
