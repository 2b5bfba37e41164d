#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace derain {

// Interleaved RGB float image, row-major, values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    static constexpr int channels = 3;

    float& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
    float at(int y, int x, int c) const { return pixels[index(y, x, c)]; }

    bool empty() const noexcept { return pixels.empty(); }
    bool same_shape(const Image& other) const noexcept {
        return height == other.height && width == other.width;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
};

// Mean over pixels and channels of |a - b|. Shapes must match.
double mean_abs_diff(const Image& a, const Image& b);

Image crop(const Image& src, int top, int left, int height, int width);

// Bilinear resampling with half-pixel centres and clamped borders. Returns an exact
// copy when the size does not change.
Image resize_bilinear(const Image& src, int out_height, int out_width);

// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to the nearest code.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Horizontal / vertical concatenation for comparison panels. Heights (widths) must match.
Image hconcat(std::span<const Image> images);
Image vconcat(std::span<const Image> images);

// Round to the 8-bit grid without touching disk; matches write_png + read_png.
Image quantize8(const Image& image);

}  // namespace derain
