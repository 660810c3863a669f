#include "tcsc/modelio.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tcsc/quantizer.hpp"

namespace tcsc {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (const std::uint8_t b : bytes) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(std::span<const std::uint8_t> bytes, std::size_t pos = 0) : bytes_(bytes), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
    std::int16_t i16() { return static_cast<std::int16_t>(u16()); }

    void raw(std::uint8_t* dst, std::size_t count) {
        need(count);
        std::memcpy(dst, bytes_.data() + pos_, count);
        pos_ += count;
    }

private:
    void need(std::size_t count) const {
        if (pos_ + count > bytes_.size())
            throw IoError(IoError::Kind::DimensionMismatch, "model file truncated");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

std::size_t forest_blob_bytes(std::uint16_t landmarks, std::uint16_t trees_per_landmark, std::uint16_t depth) {
    return static_cast<std::size_t>(landmarks) * trees_per_landmark * ((1u << depth) - 1) * kForestNodeBytes;
}

std::size_t decoder_blob_bytes(DecoderKind kind, std::uint8_t q, std::size_t p, std::size_t o, std::size_t r) {
    const std::size_t w1_rows = kind == DecoderKind::LL ? o : r;
    std::size_t bytes = q == 0 ? w1_rows * p * 4 : w1_rows * (std::size_t{1} << q) * 4 + (w1_rows * p * q + 7) / 8;
    switch (kind) {
        case DecoderKind::LL: break;
        case DecoderKind::RRR:
        case DecoderKind::RRRBP:
            bytes += o * r * 4;
            break;
        case DecoderKind::NN:
            bytes += (2 * r) * r * 4 + o * (2 * r) * 4 + (r + 2 * r + o) * 4;
            break;
    }
    return bytes;
}

void append_forest(std::vector<std::uint8_t>& out, const Forest& forest) {
    for (const Tree& tree : forest.trees)
        for (const PixelTest& t : tree.tests) {
            out.push_back(static_cast<std::uint8_t>(t.u1x));
            out.push_back(static_cast<std::uint8_t>(t.u1y));
            out.push_back(static_cast<std::uint8_t>(t.u2x));
            out.push_back(static_cast<std::uint8_t>(t.u2y));
            put_u16(out, static_cast<std::uint16_t>(t.threshold));
        }
}

void append_decoder(std::vector<std::uint8_t>& out, const StageDecoder& dec) {
    if (dec.quantized()) {
        const QuantizedMatrix& qm = *dec.w1_q;
        for (const float v : qm.codebooks) put_f32(out, v);
        out.insert(out.end(), qm.packed.begin(), qm.packed.end());
    } else {
        for (const float v : dec.w1.data) put_f32(out, v);
    }
    for (const float v : dec.w2.data) put_f32(out, v);
    for (const float v : dec.w3.data) put_f32(out, v);
    for (const float v : dec.b1) put_f32(out, v);
    for (const float v : dec.b2) put_f32(out, v);
    for (const float v : dec.b3) put_f32(out, v);
}

struct Header {
    std::uint16_t version = 0;
    DecoderKind kind = DecoderKind::LL;
    std::uint8_t q = 0;
    std::uint16_t landmarks = 0, trees = 0, depth = 0, stages = 0;
    std::uint16_t iod_a = 0, iod_b = 0;
    std::vector<std::uint16_t> r_schedule;
    std::vector<std::uint16_t> mirror;
};

Header read_header(Reader& r) {
    char magic[4];
    r.raw(reinterpret_cast<std::uint8_t*>(magic), 4);
    if (std::memcmp(magic, kModelMagic, 4) != 0)
        throw IoError(IoError::Kind::BadMagic, "not a model file (bad magic)");
    Header h;
    h.version = r.u16();
    if (h.version != kModelVersion)
        throw IoError(IoError::Kind::UnsupportedVersion,
                      "unsupported model version " + std::to_string(h.version));
    const std::uint8_t kind = r.u8();
    if (kind > 3) throw IoError(IoError::Kind::DimensionMismatch, "bad decoder kind");
    h.kind = static_cast<DecoderKind>(kind);
    h.q = r.u8();
    if (h.q != 0 && (h.q < 2 || h.q > 8))
        throw IoError(IoError::Kind::DimensionMismatch, "bad quantization bits");
    h.landmarks = r.u16();
    h.trees = r.u16();
    h.depth = r.u16();
    h.stages = r.u16();
    if (h.landmarks < 1 || h.trees < 1 || h.depth < 1 || h.depth > 12 || h.stages < 1)
        throw IoError(IoError::Kind::DimensionMismatch, "bad model dimensions");
    h.iod_a = r.u16();
    h.iod_b = r.u16();
    if (h.iod_a >= h.landmarks || h.iod_b >= h.landmarks)
        throw IoError(IoError::Kind::DimensionMismatch, "IOD landmark out of range");
    h.r_schedule.resize(h.stages);
    for (auto& v : h.r_schedule) v = r.u16();
    h.mirror.resize(h.landmarks);
    for (auto& v : h.mirror) {
        v = r.u16();
        if (v >= h.landmarks) throw IoError(IoError::Kind::DimensionMismatch, "mirror index out of range");
    }
    if (h.kind != DecoderKind::LL)
        for (const std::uint16_t rr : h.r_schedule)
            if (rr < 1 || rr > 2 * h.landmarks)
                throw IoError(IoError::Kind::DimensionMismatch, "rank out of range");
    return h;
}

} // namespace

std::size_t header_bytes(std::uint16_t landmark_count, std::uint16_t stages) {
    // magic + version + kind + q + 4 dims + iod pair + r-schedule + mirror map
    // + mean shape + trailing crc
    return 4 + 2 + 1 + 1 + 8 + 4 + 2 * static_cast<std::size_t>(stages) +
           2 * static_cast<std::size_t>(landmark_count) + 8 * static_cast<std::size_t>(landmark_count) + 4;
}

std::vector<std::uint8_t> serialize(const CascadeModel& model) {
    const ModelConfig& cfg = model.config;
    if (model.stages.size() != cfg.stages)
        throw IoError(IoError::Kind::DimensionMismatch, "stage count does not match config");
    if (model.mean_shape.size() != cfg.landmark_count)
        throw IoError(IoError::Kind::DimensionMismatch, "mean shape length does not match config");
    if (cfg.r_schedule.size() != cfg.stages)
        throw IoError(IoError::Kind::DimensionMismatch, "r-schedule length does not match stages");

    std::vector<std::uint8_t> out;
    out.reserve(header_bytes(cfg.landmark_count, cfg.stages));
    out.insert(out.end(), kModelMagic, kModelMagic + 4);
    put_u16(out, kModelVersion);
    out.push_back(static_cast<std::uint8_t>(cfg.decoder));
    out.push_back(cfg.q);
    put_u16(out, cfg.landmark_count);
    put_u16(out, cfg.trees_per_landmark);
    put_u16(out, cfg.tree_depth);
    put_u16(out, cfg.stages);
    put_u16(out, cfg.iod.first);
    put_u16(out, cfg.iod.second);
    for (const std::uint16_t r : cfg.r_schedule) put_u16(out, r);
    const MirrorMap mirror = cfg.mirror.size() == cfg.landmark_count ? cfg.mirror : MirrorMap::identity(cfg.landmark_count);
    for (const std::uint16_t v : mirror.permutation) put_u16(out, v);
    for (const Point2d& p : model.mean_shape.points) {
        put_f32(out, static_cast<float>(p.x));
        put_f32(out, static_cast<float>(p.y));
    }

    for (const CascadeStage& stage : model.stages) {
        append_forest(out, stage.forest);
        append_decoder(out, stage.decoder);
    }
    put_u32(out, crc32(out));
    return out;
}

CascadeModel deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 24) throw IoError(IoError::Kind::BadMagic, "file too small to be a model");
    Reader header_reader(bytes);
    const Header h = read_header(header_reader);

    // CRC check before trusting any payload
    Reader crc_reader(bytes, bytes.size() - 4);
    const std::uint32_t stored = crc_reader.u32();
    if (crc32(bytes.first(bytes.size() - 4)) != stored)
        throw IoError(IoError::Kind::CrcMismatch, "model CRC mismatch");

    const std::size_t p = static_cast<std::size_t>(h.landmarks) * h.trees * (1u << h.depth);
    const std::size_t o = 2 * static_cast<std::size_t>(h.landmarks);
    std::size_t expected = header_bytes(h.landmarks, h.stages);
    for (std::uint16_t t = 0; t < h.stages; ++t) {
        expected += forest_blob_bytes(h.landmarks, h.trees, h.depth);
        expected += decoder_blob_bytes(h.kind, h.q, p, o, h.kind == DecoderKind::LL ? 0 : h.r_schedule[t]);
    }
    if (expected != bytes.size())
        throw IoError(IoError::Kind::DimensionMismatch,
                      "file size " + std::to_string(bytes.size()) + " does not match header (expected " +
                          std::to_string(expected) + ")");

    Reader r(bytes, header_reader.pos());
    CascadeModel model;
    model.config.landmark_count = h.landmarks;
    model.config.trees_per_landmark = h.trees;
    model.config.tree_depth = h.depth;
    model.config.stages = h.stages;
    model.config.decoder = h.kind;
    model.config.q = h.q;
    model.config.r_schedule = h.r_schedule;
    model.config.iod = {h.iod_a, h.iod_b};
    model.config.mirror.permutation = h.mirror;

    model.mean_shape.points.resize(h.landmarks);
    for (Point2d& pt : model.mean_shape.points) {
        pt.x = r.f32();
        pt.y = r.f32();
    }

    model.stages.resize(h.stages);
    for (std::uint16_t t = 0; t < h.stages; ++t) {
        CascadeStage& stage = model.stages[t];
        stage.forest.landmark_count = h.landmarks;
        stage.forest.trees_per_landmark = h.trees;
        stage.forest.depth = static_cast<std::uint8_t>(h.depth);
        stage.forest.trees.resize(static_cast<std::size_t>(h.landmarks) * h.trees);
        const int internal = (1 << h.depth) - 1;
        for (std::size_t ti = 0; ti < stage.forest.trees.size(); ++ti) {
            Tree& tree = stage.forest.trees[ti];
            tree.landmark_index = static_cast<std::uint16_t>(ti / h.trees);
            tree.depth = static_cast<std::uint8_t>(h.depth);
            tree.tests.resize(internal);
            for (PixelTest& test : tree.tests) {
                test.u1x = r.i8();
                test.u1y = r.i8();
                test.u2x = r.i8();
                test.u2y = r.i8();
                test.threshold = r.i16();
            }
        }

        StageDecoder& dec = stage.decoder;
        dec.kind = h.kind;
        dec.input_dim = static_cast<int>(p);
        dec.output_dim = static_cast<int>(o);
        dec.rank = h.kind == DecoderKind::LL ? 0 : h.r_schedule[t];
        const int w1_rows = dec.w1_rows();

        if (h.q == 0) {
            dec.w1 = DenseMatrix(w1_rows, static_cast<int>(p));
            for (float& v : dec.w1.data) v = r.f32();
        } else {
            QuantizedMatrix qm;
            qm.rows = w1_rows;
            qm.cols = static_cast<int>(p);
            qm.q = h.q;
            qm.codebooks.resize(static_cast<std::size_t>(w1_rows) << h.q);
            for (float& v : qm.codebooks) v = r.f32();
            qm.packed.resize((static_cast<std::size_t>(w1_rows) * p * h.q + 7) / 8);
            r.raw(qm.packed.data(), qm.packed.size());
            dec.w1_q = std::move(qm);
        }

        const int rank = dec.rank;
        switch (h.kind) {
            case DecoderKind::LL: break;
            case DecoderKind::RRR:
            case DecoderKind::RRRBP:
                dec.w2 = DenseMatrix(static_cast<int>(o), rank);
                for (float& v : dec.w2.data) v = r.f32();
                break;
            case DecoderKind::NN:
                dec.w2 = DenseMatrix(2 * rank, rank);
                for (float& v : dec.w2.data) v = r.f32();
                dec.w3 = DenseMatrix(static_cast<int>(o), 2 * rank);
                for (float& v : dec.w3.data) v = r.f32();
                dec.b1.resize(rank);
                for (float& v : dec.b1) v = r.f32();
                dec.b2.resize(2 * rank);
                for (float& v : dec.b2) v = r.f32();
                dec.b3.resize(static_cast<std::size_t>(o));
                for (float& v : dec.b3) v = r.f32();
                break;
        }
        dec.rebuild_cache();
    }
    return model;
}

std::size_t save_model(const CascadeModel& model, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoError::Kind::WriteFailed, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(IoError::Kind::WriteFailed, "short write to '" + path + "'");
    return bytes.size();
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError(IoError::Kind::FileMissing, "cannot open model file '" + path + "'");
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError(IoError::Kind::FileMissing, "cannot read model file '" + path + "'");
    return bytes;
}

} // namespace

CascadeModel load_model(const std::string& path) {
    return deserialize(read_file(path));
}

InspectInfo inspect_model(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    Reader r(bytes);
    const Header h = read_header(r);

    InspectInfo info;
    info.version = h.version;
    info.decoder = h.kind;
    info.q = h.q;
    info.landmark_count = h.landmarks;
    info.trees_per_landmark = h.trees;
    info.tree_depth = h.depth;
    info.stages = h.stages;
    info.iod = {h.iod_a, h.iod_b};
    info.r_schedule = h.r_schedule;
    info.file_size = bytes.size();

    const std::size_t p = static_cast<std::size_t>(h.landmarks) * h.trees * (1u << h.depth);
    const std::size_t o = 2 * static_cast<std::size_t>(h.landmarks);
    info.sections.push_back({"header", header_bytes(h.landmarks, h.stages) - 4});
    std::size_t expected = header_bytes(h.landmarks, h.stages);
    for (std::uint16_t t = 0; t < h.stages; ++t) {
        const std::size_t fb = forest_blob_bytes(h.landmarks, h.trees, h.depth);
        const std::size_t db = decoder_blob_bytes(h.kind, h.q, p, o, h.kind == DecoderKind::LL ? 0 : h.r_schedule[t]);
        info.sections.push_back({"stage " + std::to_string(t) + " forest", fb});
        info.sections.push_back({"stage " + std::to_string(t) + " decoder", db});
        expected += fb + db;
    }
    info.sections.push_back({"crc", 4});
    if (expected != bytes.size())
        throw IoError(IoError::Kind::DimensionMismatch, "file size does not match header");
    return info;
}

std::string inspect_text(const InspectInfo& info) {
    std::ostringstream os;
    os << "version:  " << info.version << "\n";
    os << "decoder:  " << decoder_kind_name(info.decoder) << "\n";
    os << "q:        " << (info.q == 0 ? std::string("none") : std::to_string(int(info.q))) << "\n";
    os << "L:        " << info.landmark_count << "\n";
    os << "trees/L:  " << info.trees_per_landmark << "\n";
    os << "depth:    " << info.tree_depth << "\n";
    os << "stages:   " << info.stages << "\n";
    os << "iod:      (" << info.iod.first << ", " << info.iod.second << ")\n";
    os << "r:        ";
    if (info.decoder == DecoderKind::LL) {
        os << "none";
    } else {
        for (std::size_t i = 0; i < info.r_schedule.size(); ++i) os << (i ? "," : "") << info.r_schedule[i];
    }
    os << "\n";
    os << "sections:\n";
    for (const SectionInfo& s : info.sections) os << "  " << s.name << ": " << s.bytes << " bytes\n";
    os << "file size: " << info.file_size << " bytes\n";
    return os.str();
}

} // namespace tcsc
