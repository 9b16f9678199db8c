#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace vidtune {

/// H x W x C grid of doubles. Row-major, channel innermost:
/// index(y, x, c) = (y * width + x) * channels + c.
class LatentFrame {
public:
    LatentFrame() = default;

    LatentFrame(int height, int width, int channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels) {
        check_dims(height, width, channels);
        values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    LatentFrame(int height, int width, int channels, std::vector<double> values)
        : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
        check_dims(height, width, channels);
        if (values_.size() != static_cast<std::size_t>(height) * width * channels)
            throw std::invalid_argument("LatentFrame: value count does not match dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& at(int y, int x, int c) { return values_[idx(y, x, c)]; }
    double at(int y, int x, int c) const { return values_[idx(y, x, c)]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const LatentFrame& o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    static void check_dims(int h, int w, int c) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("LatentFrame: dimensions must be positive");
    }
    std::size_t idx(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
};

/// H x W grid of doubles, one value per pixel. Used for masks and merge weights.
class PixelGrid {
public:
    PixelGrid() = default;

    PixelGrid(int height, int width, double fill = 0.0)
        : height_(height), width_(width) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("PixelGrid: dimensions must be positive");
        values_.assign(static_cast<std::size_t>(height) * width, fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }

    double& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool same_shape(const PixelGrid& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    bool matches_frame(const LatentFrame& f) const {
        return height_ == f.height() && width_ == f.width();
    }

    bool binary() const {
        for (double v : values_)
            if (v != 0.0 && v != 1.0) return false;
        return true;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

/// Ordered list of same-shape frames.
struct Video {
    std::vector<LatentFrame> frames;

    int length() const { return static_cast<int>(frames.size()); }
};

inline void require_same_shape(const LatentFrame& a, const LatentFrame& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": frame shape mismatch");
}

/// out = ca * a + cb * b, elementwise.
inline LatentFrame combine(double ca, const LatentFrame& a, double cb, const LatentFrame& b) {
    require_same_shape(a, b, "combine");
    LatentFrame out(a.height(), a.width(), a.channels());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = ca * a[i] + cb * b[i];
    return out;
}

inline LatentFrame scale(double c, const LatentFrame& a) {
    LatentFrame out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= c;
    return out;
}

}  // namespace vidtune
