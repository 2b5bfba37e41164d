#include "derain/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "derain/errors.hpp"

namespace derain {

Image::Image(int h, int w, float fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * channels, fill) {
    if (h < 0 || w < 0) throw ShapeError("negative image size");
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("mean_abs_diff: image shapes differ");
    if (a.pixels.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) sum += std::abs(double(a.pixels[i]) - b.pixels[i]);
    return sum / static_cast<double>(a.pixels.size());
}

Image crop(const Image& src, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > src.height ||
        left + width > src.width)
        throw ShapeError("crop window outside image");
    Image out(height, width);
    for (int y = 0; y < height; ++y) {
        const float* row = &src.pixels[(static_cast<std::size_t>(top + y) * src.width + left) * Image::channels];
        std::copy_n(row, static_cast<std::size_t>(width) * Image::channels,
                    &out.pixels[static_cast<std::size_t>(y) * width * Image::channels]);
    }
    return out;
}

namespace {

struct Tap {
    int lo;
    int hi;
    float frac;
};

std::vector<Tap> taps(int in_size, int out_size) {
    std::vector<Tap> result(out_size);
    const double scale = static_cast<double>(in_size) / out_size;
    for (int i = 0; i < out_size; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, in_size - 1);
        result[i] = {lo, hi, static_cast<float>(src - lo)};
    }
    return result;
}

}  // namespace

Image resize_bilinear(const Image& src, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1) throw ShapeError("resize target must be positive");
    if (src.height < 1 || src.width < 1) throw ShapeError("cannot resize an empty image");
    if (src.height == out_height && src.width == out_width) return src;

    const auto ys = taps(src.height, out_height);
    const auto xs = taps(src.width, out_width);
    Image out(out_height, out_width);
    for (int y = 0; y < out_height; ++y) {
        const auto [y0, y1, fy] = ys[y];
        for (int x = 0; x < out_width; ++x) {
            const auto [x0, x1, fx] = xs[x];
            for (int c = 0; c < Image::channels; ++c) {
                const float top = src.at(y0, x0, c) * (1.0f - fx) + src.at(y0, x1, c) * fx;
                const float bottom = src.at(y1, x0, c) * (1.0f - fx) + src.at(y1, x1, c) * fx;
                out.at(y, x, c) = top * (1.0f - fy) + bottom * fy;
            }
        }
    }
    return out;
}

namespace {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
    cv::Mat mat(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width; ++x) {
            // OpenCV stores BGR.
            row[3 * x + 0] = to_byte(image.at(y, x, 2));
            row[3 * x + 1] = to_byte(image.at(y, x, 1));
            row[3 * x + 2] = to_byte(image.at(y, x, 0));
        }
    }
    if (!cv::imwrite(path.string(), mat)) throw Error("failed to write " + path.string());
}

Image read_png(const std::filesystem::path& path) {
    const cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) throw Error("failed to decode image " + path.string());
    Image image(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            image.at(y, x, 0) = row[3 * x + 2] / 255.0f;
            image.at(y, x, 1) = row[3 * x + 1] / 255.0f;
            image.at(y, x, 2) = row[3 * x + 0] / 255.0f;
        }
    }
    return image;
}

Image hconcat(std::span<const Image> images) {
    if (images.empty()) return {};
    int width = 0;
    for (const auto& im : images) {
        if (im.height != images.front().height) throw ShapeError("hconcat: heights differ");
        width += im.width;
    }
    Image out(images.front().height, width);
    for (int y = 0; y < out.height; ++y) {
        int x0 = 0;
        for (const auto& im : images) {
            for (int x = 0; x < im.width; ++x)
                for (int c = 0; c < Image::channels; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
            x0 += im.width;
        }
    }
    return out;
}

Image vconcat(std::span<const Image> images) {
    if (images.empty()) return {};
    Image out;
    out.width = images.front().width;
    for (const auto& im : images) {
        if (im.width != out.width) throw ShapeError("vconcat: widths differ");
        out.height += im.height;
        out.pixels.insert(out.pixels.end(), im.pixels.begin(), im.pixels.end());
    }
    return out;
}

Image quantize8(const Image& image) {
    Image out = image;
    for (auto& v : out.pixels) v = to_byte(v) / 255.0f;
    return out;
}

}  // namespace derain
