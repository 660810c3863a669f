#ifndef TCSC_MODELIO_HPP
#define TCSC_MODELIO_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcsc/cascade.hpp"

namespace tcsc {

// Model file layout (all integers little-endian, weights 32-bit IEEE-754):
//   magic "TCSC" | u16 version | u8 decoder kind | u8 q | u16 L n d T |
//   u16 iod_a iod_b | u16 r_schedule[T] | u16 mirror[L] | f32 mean_shape[2L] |
//   per stage: forest nodes (i8 u1x u1y u2x u2y, i16 threshold = 6 B each)
//              then the decoder blob | u32 CRC-32 of all preceding bytes.
// Decoder blob: the phi-facing matrix first (raw f32 row-major, or codebooks
// then the bit-packed index grid when quantized), then any remaining f32
// matrices and biases.
inline constexpr char kModelMagic[4] = {'T', 'C', 'S', 'C'};
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::size_t kForestNodeBytes = 6;

struct IoError : std::runtime_error {
    enum class Kind { FileMissing, BadMagic, UnsupportedVersion, CrcMismatch, DimensionMismatch, WriteFailed };
    IoError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
    Kind kind;
};

// Everything before the first stage blob plus the trailing CRC; a function of
// L and T only. memory_report(model).total_bytes() + header_bytes() equals
// the serialized file size exactly.
std::size_t header_bytes(std::uint16_t landmark_count, std::uint16_t stages);

std::vector<std::uint8_t> serialize(const CascadeModel& model);
CascadeModel deserialize(std::span<const std::uint8_t> bytes);

// Returns bytes written. Deterministic: same model, same bytes.
std::size_t save_model(const CascadeModel& model, const std::string& path);
CascadeModel load_model(const std::string& path);

struct SectionInfo {
    std::string name;
    std::size_t bytes = 0;
};

// Header summary without touching the weight payloads.
struct InspectInfo {
    std::uint16_t version = 0;
    DecoderKind decoder = DecoderKind::LL;
    std::uint8_t q = 0;
    std::uint16_t landmark_count = 0, trees_per_landmark = 0, tree_depth = 0, stages = 0;
    std::pair<std::uint16_t, std::uint16_t> iod{0, 0};
    std::vector<std::uint16_t> r_schedule;
    std::vector<SectionInfo> sections;  // sums to file_size
    std::size_t file_size = 0;
};

InspectInfo inspect_model(const std::string& path);
std::string inspect_text(const InspectInfo& info);

// CRC-32, IEEE 802.3 polynomial (reflected 0xEDB88320).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

} // namespace tcsc

#endif
