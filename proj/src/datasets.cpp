#include "tcsc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tcsc {

namespace {

std::string parse_error_text(const std::string& file, int line, const std::string& what) {
    std::ostringstream os;
    os << file << ":" << line << ": " << what;
    return os.str();
}

} // namespace

ParseError::ParseError(Kind k, std::string file_, int line_, const std::string& what)
    : std::runtime_error(parse_error_text(file_, line_, what)), kind(k), file(std::move(file_)), line(line_) {}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_float_pair(const std::string& s, float& x, float& y) {
    std::istringstream is(s);
    std::string sx, sy, extra;
    if (!(is >> sx >> sy)) return false;
    if (is >> extra) return false;
    std::size_t px = 0, py = 0;
    try {
        x = std::stof(sx, &px);
        y = std::stof(sy, &py);
    } catch (const std::exception&) {
        return false;
    }
    return px == sx.size() && py == sy.size();
}

} // namespace

Shape load_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(ParseError::Kind::BadHeader, path, 0, "cannot open landmark file");

    std::string raw;
    int line_no = 0;
    const auto next_line = [&](std::string& out) -> bool {
        while (std::getline(in, raw)) {
            ++line_no;
            out = trim(raw);
            if (!out.empty()) return true;
        }
        return false;
    };

    std::string line;
    if (!next_line(line) || line.rfind("version:", 0) != 0)
        throw ParseError(ParseError::Kind::BadHeader, path, line_no, "expected 'version:' header");
    if (!next_line(line) || line.rfind("n_points:", 0) != 0)
        throw ParseError(ParseError::Kind::BadHeader, path, line_no, "expected 'n_points:' header");
    long n_points = 0;
    try {
        n_points = std::stol(trim(line.substr(9)));
    } catch (const std::exception&) {
        throw ParseError(ParseError::Kind::BadHeader, path, line_no, "n_points is not a number");
    }
    if (n_points < 1)
        throw ParseError(ParseError::Kind::BadHeader, path, line_no, "n_points must be positive");
    if (!next_line(line) || line != "{")
        throw ParseError(ParseError::Kind::BadHeader, path, line_no, "expected '{'");

    Shape shape;
    shape.points.reserve(static_cast<std::size_t>(n_points));
    while (next_line(line)) {
        if (line == "}") {
            if (static_cast<long>(shape.size()) != n_points)
                throw ParseError(ParseError::Kind::WrongPointCount, path, line_no,
                                 "expected " + std::to_string(n_points) + " points, got " + std::to_string(shape.size()));
            return shape;
        }
        if (static_cast<long>(shape.size()) == n_points)
            throw ParseError(ParseError::Kind::WrongPointCount, path, line_no, "more points than n_points declares");
        float x = 0.0f, y = 0.0f;
        if (!parse_float_pair(line, x, y))
            throw ParseError(ParseError::Kind::BadNumber, path, line_no, "expected two decimal coordinates");
        shape.points.push_back({x, y});
    }
    throw ParseError(ParseError::Kind::BadHeader, path, line_no, "missing closing '}'");
}

void save_landmarks(const std::string& path, const Shape& pixel_shape) {
    std::ofstream out(path);
    out << "version: 1\n";
    out << "n_points: " << pixel_shape.size() << "\n{\n";
    char buf[64];
    for (const Point2d& p : pixel_shape.points) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", p.x, p.y);
        out << buf;
    }
    out << "}\n";
}

namespace {

// one PGM/PPM token, skipping whitespace and '#' comments
std::string pnm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = 0;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok.push_back(static_cast<char>(in.get()));
            return tok;
        }
    }
    throw ParseError(ParseError::Kind::BadImage, path, 0, "truncated image header");
}

} // namespace

Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseError::Kind::BadImage, path, 0, "cannot open image file");

    const std::string magic = pnm_token(in, path);
    if (magic != "P5" && magic != "P6")
        throw ParseError(ParseError::Kind::BadImage, path, 0, "unsupported image magic '" + magic + "'");
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(pnm_token(in, path));
        height = std::stoi(pnm_token(in, path));
        maxval = std::stoi(pnm_token(in, path));
    } catch (const std::exception&) {
        throw ParseError(ParseError::Kind::BadImage, path, 0, "bad image header field");
    }
    if (width < 1 || height < 1) throw ParseError(ParseError::Kind::BadImage, path, 0, "bad image dimensions");
    if (maxval < 1 || maxval > 255)
        throw ParseError(ParseError::Kind::BadImage, path, 0, "only 8-bit images are supported");
    in.get();  // single whitespace after maxval

    Image img(width, height);
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (magic == "P5") {
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw ParseError(ParseError::Kind::BadImage, path, 0, "truncated pixel payload");
    } else {
        std::vector<std::uint8_t> rgb(count * 3);
        in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
        if (static_cast<std::size_t>(in.gcount()) != rgb.size())
            throw ParseError(ParseError::Kind::BadImage, path, 0, "truncated pixel payload");
        // integer luma keeps conversion identical across platforms
        for (std::size_t i = 0; i < count; ++i) {
            const unsigned r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
            img.pixels[i] = static_cast<std::uint8_t>((77u * r + 150u * g + 29u * b) >> 8);
        }
    }
    return img;
}

void save_pgm(const std::string& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

FaceBox derive_box(const Shape& pixel_shape, double margin) {
    if (pixel_shape.size() == 0) throw std::invalid_argument("derive_box: empty shape");
    double minx = pixel_shape[0].x, maxx = minx, miny = pixel_shape[0].y, maxy = miny;
    for (const Point2d& p : pixel_shape.points) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    const double w = maxx - minx, h = maxy - miny;
    if (w <= 0.0 || h <= 0.0) throw std::invalid_argument("derive_box: degenerate landmark set");
    FaceBox box;
    box.x = minx - margin * w;
    box.y = miny - margin * h;
    box.w = w * (1.0 + 2.0 * margin);
    box.h = h * (1.0 + 2.0 * margin);
    return box;
}

FaceBox load_box(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(ParseError::Kind::BadValue, path, 0, "cannot open box file");
    FaceBox box;
    if (!(in >> box.x >> box.y >> box.w >> box.h))
        throw ParseError(ParseError::Kind::BadValue, path, 1, "expected 'x y w h'");
    if (!box.valid()) throw ParseError(ParseError::Kind::BadValue, path, 1, "box must have positive size");
    return box;
}

void save_box(const std::string& path, const FaceBox& box) {
    std::ofstream out(path);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4f %.4f %.4f %.4f\n", box.x, box.y, box.w, box.h);
    out << buf;
}

std::vector<std::string> load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(ParseError::Kind::BadValue, path, 0, "cannot open index file");
    std::vector<std::string> stems;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty() && line[0] != '#') stems.push_back(line);
    }
    return stems;
}

Dataset load_dataset(const std::string& dir, const std::string& index_path, double box_margin) {
    namespace fs = std::filesystem;
    std::vector<std::string> stems;
    if (!index_path.empty()) {
        stems = load_index(index_path);
    } else {
        if (!fs::is_directory(dir)) throw ParseError(ParseError::Kind::BadValue, dir, 0, "not a directory");
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".pts")
                stems.push_back(entry.path().stem().string());
        std::sort(stems.begin(), stems.end());
    }

    Dataset data;
    data.reserve(stems.size());
    std::uint32_t id = 0;
    for (const std::string& stem : stems) {
        const fs::path base = fs::path(dir) / stem;
        AnnotatedSample sample;
        sample.source = stem;
        sample.source_id = id++;
        sample.image = load_pgm(base.string() + ".pgm");
        const Shape pixels = load_landmarks(base.string() + ".pts");
        const std::string box_path = base.string() + ".box";
        sample.box = fs::exists(box_path) ? load_box(box_path) : derive_box(pixels, box_margin);
        sample.shape.points.resize(pixels.size());
        for (std::size_t i = 0; i < pixels.size(); ++i) sample.shape[i] = image_to_box(pixels[i], sample.box);
        data.push_back(std::move(sample));
    }
    return data;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.count < 1) throw std::invalid_argument("generate_synthetic: count must be >= 1");
    if (spec.landmark_count < 4 || spec.landmark_count % 2 != 0)
        throw std::invalid_argument("generate_synthetic: landmark count must be even and >= 4");

    const int l = spec.landmark_count;
    SyntheticDataset out;

    // ring template: landmark i sits at angle 2*pi*i/L; mirroring x maps angle
    // a to pi - a, i.e. index i to (L/2 - i) mod L
    out.mirror.permutation.resize(l);
    for (int i = 0; i < l; ++i) out.mirror.permutation[i] = static_cast<std::uint16_t>(((l / 2 - i) % l + l) % l);
    out.iod = {0, static_cast<std::uint16_t>(l / 2)};

    // mirror-symmetric intensities so flipped samples keep consistent local
    // appearance per landmark
    std::vector<int> orbit(l), intensity(l);
    int orbits = 0;
    for (int i = 0; i < l; ++i) {
        const int partner = out.mirror.permutation[i];
        orbit[i] = i <= partner ? i : partner;
    }
    {
        std::vector<int> seen;
        for (int i = 0; i < l; ++i)
            if (orbit[i] == i) seen.push_back(i);
        orbits = static_cast<int>(seen.size());
        for (int i = 0; i < l; ++i) {
            const int k = static_cast<int>(std::lower_bound(seen.begin(), seen.end(), orbit[i]) - seen.begin());
            intensity[i] = 110 + (orbits > 1 ? (130 * k) / (orbits - 1) : 0);
        }
    }

    const double size = spec.image_size;
    const double base_radius = 0.28 * size;
    const double blob_radius = 0.055 * size;

    out.samples.reserve(spec.count);
    for (int s = 0; s < spec.count; ++s) {
        Rng rng = Rng(spec.seed).split(static_cast<std::uint64_t>(s));
        AnnotatedSample sample;
        sample.source = "synth" + std::to_string(s);
        sample.source_id = static_cast<std::uint32_t>(s);

        const double cx = 0.5 * size + rng.uniform(-0.03, 0.03) * size;
        const double cy = 0.5 * size + rng.uniform(-0.03, 0.03) * size;
        const double a = base_radius * (1.0 + rng.uniform(-spec.squash, spec.squash));
        const double b = base_radius * (1.0 + rng.uniform(-spec.squash, spec.squash));
        const double phi = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * 3.14159265358979323846 / 180.0;
        const double cphi = std::cos(phi), sphi = std::sin(phi);

        Shape pixels(l);
        for (int i = 0; i < l; ++i) {
            const double theta = 2.0 * 3.14159265358979323846 * i / l;
            const double ex = a * std::cos(theta), ey = b * std::sin(theta);
            const double jx = rng.uniform(-spec.jitter, spec.jitter) * size;
            const double jy = rng.uniform(-spec.jitter, spec.jitter) * size;
            pixels[i].x = cx + cphi * ex - sphi * ey + jx;
            pixels[i].y = cy + sphi * ex + cphi * ey + jy;
        }

        // textured background: deterministic per-pixel hash plus optional noise
        sample.image = Image(spec.image_size, spec.image_size);
        Rng noise_rng = rng.split(0x4E4F4953);
        for (int y = 0; y < spec.image_size; ++y)
            for (int x = 0; x < spec.image_size; ++x) {
                std::uint64_t h = (static_cast<std::uint64_t>(x) * 73856093u) ^
                                  (static_cast<std::uint64_t>(y) * 19349663u) ^ (spec.seed * 83492791u);
                h ^= h >> 13;
                h *= 0x2545F4914F6CDD1DULL;
                h ^= h >> 35;
                double v = 20.0 + static_cast<double>(h % 31u);
                if (spec.noise > 0.0) v += noise_rng.uniform(-spec.noise, spec.noise);
                sample.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }

        // distinct-intensity blobs at the landmarks
        for (int i = 0; i < l; ++i) {
            const int x0 = std::max(0, static_cast<int>(pixels[i].x - blob_radius - 1));
            const int x1 = std::min(spec.image_size - 1, static_cast<int>(pixels[i].x + blob_radius + 1));
            const int y0 = std::max(0, static_cast<int>(pixels[i].y - blob_radius - 1));
            const int y1 = std::min(spec.image_size - 1, static_cast<int>(pixels[i].y + blob_radius + 1));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x - pixels[i].x, dy = y - pixels[i].y;
                    if (dx * dx + dy * dy <= blob_radius * blob_radius)
                        sample.image.at(x, y) = static_cast<std::uint8_t>(intensity[i]);
                }
        }

        // detector-style box: tight bbox + margin, then scale/shift noise
        const FaceBox tight = derive_box(pixels, spec.box_margin);
        Rng box_rng = rng.split(0x424F5845);
        sample.box = perturb_box(tight, box_rng, spec.box_noise);
        sample.shape.points.resize(l);
        for (int i = 0; i < l; ++i) sample.shape[i] = image_to_box(pixels[i], sample.box);

        out.samples.push_back(std::move(sample));
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> split_dataset(std::size_t n, std::span<const double> fractions,
                                                      std::uint64_t seed) {
    double total = 0.0;
    for (const double f : fractions) {
        if (f < 0.0) throw std::invalid_argument("split_dataset: negative fraction");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split_dataset: fractions must sum to 1");

    std::vector<std::uint32_t> order(n);
    for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<std::vector<std::uint32_t>> parts;
    parts.reserve(fractions.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        cum += fractions[k];
        const std::size_t stop = k + 1 == fractions.size()
                                     ? n
                                     : std::min(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
        parts.emplace_back(order.begin() + start, order.begin() + stop);
        start = stop;
    }
    return parts;
}

} // namespace tcsc
