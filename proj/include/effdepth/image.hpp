#pragma once

#include <string>
#include <utility>
#include <vector>

#include "effdepth/grid.hpp"

namespace effdepth {

/// A 1- or 3-channel image with scalar channels in [0, 1], stored as fully
/// valid DepthGrids so crop/resample reuse the grid primitives.
class Image {
public:
    explicit Image(std::vector<DepthGrid> channels)
        : channels_(std::move(channels)) {
        if (channels_.size() != 1 && channels_.size() != 3) {
            throw InvalidParameterError("Image: expected 1 or 3 channels, got " +
                                        std::to_string(channels_.size()));
        }
        for (const DepthGrid& c : channels_) {
            if (c.width() != channels_[0].width() ||
                c.height() != channels_[0].height()) {
                throw DimensionMismatchError("Image: channel size mismatch");
            }
            if (!c.fully_valid()) {
                throw UnsupportedInputError("Image: channels must be fully valid");
            }
        }
    }

    static Image gray(DepthGrid plane) {
        std::vector<DepthGrid> ch;
        ch.push_back(std::move(plane));
        return Image(std::move(ch));
    }

    int width() const { return channels_[0].width(); }
    int height() const { return channels_[0].height(); }
    int channel_count() const { return static_cast<int>(channels_.size()); }
    const DepthGrid& channel(int c) const { return channels_[c]; }

private:
    std::vector<DepthGrid> channels_;
};

inline Image crop(const Image& img, const Rect& r) {
    std::vector<DepthGrid> out;
    out.reserve(img.channel_count());
    for (int c = 0; c < img.channel_count(); ++c) {
        out.push_back(crop(img.channel(c), r));
    }
    return Image(std::move(out));
}

inline Image resize_bilinear(const Image& img, int new_w, int new_h) {
    std::vector<DepthGrid> out;
    out.reserve(img.channel_count());
    for (int c = 0; c < img.channel_count(); ++c) {
        out.push_back(resize_bilinear(img.channel(c), new_w, new_h));
    }
    return Image(std::move(out));
}

} // namespace effdepth
