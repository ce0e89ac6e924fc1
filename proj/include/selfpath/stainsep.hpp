#pragma once

#include "selfpath/image.hpp"

#include <array>
#include <string>

namespace selfpath::stainsep {

// Rows are unit optical-density vectors: hematoxylin, eosin, residual.
class StainMatrix {
public:
    // Rows are normalized to unit Euclidean norm; throws NumericError if a
    // row is zero or the matrix is singular.
    explicit StainMatrix(const std::array<std::array<double, 3>, 3>& rows);

    // Standard H&E vectors; residual is the normalized cross product H x E.
    static StainMatrix default_he();

    // 3x3 text file, row-major, whitespace separated. Rows are normalized.
    static StainMatrix load(const std::string& path);
    void save(const std::string& path) const;

    const std::array<std::array<double, 3>, 3>& rows() const { return m_; }
    const std::array<std::array<double, 3>, 3>& inverse() const { return inv_; }

    // 1-norm condition number.
    double cond1() const { return cond1_; }

private:
    std::array<std::array<double, 3>, 3> m_{};
    std::array<std::array<double, 3>, 3> inv_{};
    double cond1_ = 0.0;
};

struct ConcentrationMap {
    Image conc;  // 3 channels: H, E, residual; negatives clipped to 0
    std::array<float, 3> ch_min{};
    std::array<float, 3> ch_max{};
};

// od = -log10(clamp(I, 1/255, 1)). Input intensities in [0,1].
Image rgb_to_od(const Image& image);

// concentrations = od . inverse(M), negatives clipped to 0.
ConcentrationMap deconvolve(const Image& od_image, const StainMatrix& m);

// Hematoxylin channel, min-max scaled to [0,1] per image; a constant
// channel maps to all zeros.
Image hematoxylin_target(const Image& image, const StainMatrix& m);
Image hematoxylin_target(const Image& image);  // default H&E matrix

}  // namespace selfpath::stainsep
