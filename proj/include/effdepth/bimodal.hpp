#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "effdepth/errors.hpp"
#include "effdepth/grid.hpp"

namespace effdepth {

/// Per-pixel parameters of a two-component Laplacian mixture over disparity:
/// mixing weight pi, mode locations mu1/mu2, diversities b1/b2.
struct BimodalParams {
    float pi = 0.5f;
    float mu1 = 0.0f;
    float b1 = 1.0f;
    float mu2 = 0.0f;
    float b2 = 1.0f;
};

namespace detail {

inline void validate_params(const BimodalParams& p, const std::string& where) {
    const bool finite = std::isfinite(p.pi) && std::isfinite(p.mu1) &&
                        std::isfinite(p.b1) && std::isfinite(p.mu2) &&
                        std::isfinite(p.b2);
    if (!finite) {
        throw InvalidParameterError(where + ": non-finite mixture parameter");
    }
    if (p.pi < 0.0f || p.pi > 1.0f) {
        throw InvalidParameterError(where + ": pi = " + std::to_string(p.pi) +
                                    " outside [0, 1]");
    }
    if (p.b1 <= 0.0f || p.b2 <= 0.0f) {
        throw InvalidParameterError(where + ": diversity must be > 0, got b1 = " +
                                    std::to_string(p.b1) + ", b2 = " +
                                    std::to_string(p.b2));
    }
}

// Mixture density without parameter checks; used by the validated fast paths.
inline double density_unchecked(const BimodalParams& p, double d) {
    const double m1 = 0.5 / p.b1 * std::exp(-std::abs(d - p.mu1) / p.b1);
    const double m2 = 0.5 / p.b2 * std::exp(-std::abs(d - p.mu2) / p.b2);
    return p.pi * m1 + (1.0 - p.pi) * m2;
}

inline float decode_unchecked(const BimodalParams& p) {
    // Argmax of the full mixture density over the two mode locations;
    // ties resolve to mu1.
    return density_unchecked(p, p.mu1) >= density_unchecked(p, p.mu2) ? p.mu1
                                                                      : p.mu2;
}

} // namespace detail

/// Mixture density pi/(2 b1) exp(-|d-mu1|/b1) + (1-pi)/(2 b2) exp(-|d-mu2|/b2).
inline double density(const BimodalParams& p, double d) {
    detail::validate_params(p, "density");
    if (!std::isfinite(d)) {
        throw InvalidParameterError("density: d must be finite");
    }
    return detail::density_unchecked(p, d);
}

/// Hard mode selection: the element of {mu1, mu2} with the larger mixture
/// density, mu1 on ties.
inline float decode(const BimodalParams& p) {
    detail::validate_params(p, "decode");
    return detail::decode_unchecked(p);
}

/// H x W field of mixture parameters. Parameters are validated once at
/// construction so decoding can be a tight unchecked loop.
class BimodalField {
public:
    BimodalField(int width, int height, std::vector<BimodalParams> params)
        : width_(width), height_(height), params_(std::move(params)) {
        if (width_ < 1 || height_ < 1) {
            throw InvalidParameterError("BimodalField: dimensions must be >= 1");
        }
        if (params_.size() != static_cast<std::size_t>(width_) * height_) {
            throw InvalidParameterError("BimodalField: parameter count " +
                                        std::to_string(params_.size()) +
                                        " does not match " + std::to_string(width_) +
                                        "x" + std::to_string(height_));
        }
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const int x = static_cast<int>(i) % width_;
            const int y = static_cast<int>(i) / width_;
            detail::validate_params(params_[i], "BimodalField pixel (" +
                                                    std::to_string(x) + ", " +
                                                    std::to_string(y) + ")");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    const BimodalParams& at(int x, int y) const {
        return params_[static_cast<std::size_t>(y) * width_ + x];
    }
    const std::vector<BimodalParams>& params() const { return params_; }

private:
    int width_;
    int height_;
    std::vector<BimodalParams> params_;
};

/// Per-pixel decode of a whole field into a fully valid disparity grid.
inline DepthGrid decode_field(const BimodalField& field) {
    std::vector<float> out(field.params().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = detail::decode_unchecked(field.params()[i]);
    }
    return DepthGrid(field.width(), field.height(), std::move(out));
}

} // namespace effdepth
