#ifndef TCSC_IMAGE_HPP
#define TCSC_IMAGE_HPP

#include <cstdint>
#include <vector>

namespace tcsc {

// Single-channel 8-bit image, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    // Border-clamped read; every out-of-image access maps to the nearest pixel.
    std::uint8_t at_clamped(int x, int y) const {
        if (x < 0) x = 0;
        else if (x >= width) x = width - 1;
        if (y < 0) y = 0;
        else if (y >= height) y = height - 1;
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

} // namespace tcsc

#endif
