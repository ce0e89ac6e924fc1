#include "selfpath/stainsep.hpp"

#include "selfpath/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace selfpath::stainsep {

namespace {

constexpr double kOdFloor = 1.0 / 255.0;

double norm3(const std::array<double, 3>& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

}  // namespace

StainMatrix::StainMatrix(const std::array<std::array<double, 3>, 3>& rows) {
    m_ = rows;
    for (auto& row : m_) {
        const double n = norm3(row);
        if (n < 1e-12) throw NumericError("stain matrix: zero row");
        for (double& v : row) v /= n;
    }
    const auto& a = m_;
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if (std::abs(det) < 1e-9) throw NumericError("stain matrix: singular (det ~ 0)");
    const double id = 1.0 / det;
    inv_[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * id;
    inv_[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * id;
    inv_[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * id;
    inv_[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * id;
    inv_[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * id;
    inv_[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * id;
    inv_[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * id;
    inv_[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * id;
    inv_[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * id;

    auto norm1 = [](const std::array<std::array<double, 3>, 3>& mat) {
        double best = 0.0;
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i) s += std::abs(mat[i][j]);
            best = std::max(best, s);
        }
        return best;
    };
    cond1_ = norm1(m_) * norm1(inv_);
}

StainMatrix StainMatrix::default_he() {
    return StainMatrix({{{0.650, 0.704, 0.286},
                         {0.072, 0.990, 0.105},
                         // cross(H, E) before normalization
                         {0.704 * 0.105 - 0.286 * 0.990,
                          0.286 * 0.072 - 0.650 * 0.105,
                          0.650 * 0.990 - 0.704 * 0.072}}});
}

StainMatrix StainMatrix::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("stain matrix: cannot open " + path);
    std::array<std::array<double, 3>, 3> rows{};
    for (auto& r : rows)
        for (double& v : r)
            if (!(f >> v)) throw DataError("stain matrix: expected 9 numbers in " + path);
    return StainMatrix(rows);
}

void StainMatrix::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("stain matrix: cannot open " + path);
    f.precision(17);
    for (const auto& r : m_) f << r[0] << " " << r[1] << " " << r[2] << "\n";
}

Image rgb_to_od(const Image& image) {
    Image od(image.h, image.w, image.c);
    for (size_t i = 0; i < image.px.size(); ++i) {
        const double v = std::clamp(static_cast<double>(image.px[i]), kOdFloor, 1.0);
        od.px[i] = static_cast<float>(-std::log10(v));
    }
    return od;
}

ConcentrationMap deconvolve(const Image& od_image, const StainMatrix& m) {
    if (od_image.c != 3) throw DataError("deconvolve: expected a 3-channel OD image");
    ConcentrationMap out;
    out.conc = Image(od_image.h, od_image.w, 3);
    out.ch_min.fill(std::numeric_limits<float>::max());
    out.ch_max.fill(std::numeric_limits<float>::lowest());
    const auto& inv = m.inverse();
    const size_t npix = static_cast<size_t>(od_image.h) * od_image.w;
    for (size_t p = 0; p < npix; ++p) {
        const float* od = &od_image.px[p * 3];
        float* c = &out.conc.px[p * 3];
        for (int j = 0; j < 3; ++j) {
            const double v = od[0] * inv[0][j] + od[1] * inv[1][j] + od[2] * inv[2][j];
            const float cj = static_cast<float>(std::max(v, 0.0));
            c[j] = cj;
            out.ch_min[j] = std::min(out.ch_min[j], cj);
            out.ch_max[j] = std::max(out.ch_max[j], cj);
        }
    }
    return out;
}

Image hematoxylin_target(const Image& image, const StainMatrix& m) {
    const ConcentrationMap cm = deconvolve(rgb_to_od(image), m);
    Image target(image.h, image.w, 1);
    const float lo = cm.ch_min[0];
    const float hi = cm.ch_max[0];
    const float range = hi - lo;
    if (range <= 1e-12f) return target;  // constant map -> all zeros
    const size_t npix = static_cast<size_t>(image.h) * image.w;
    for (size_t p = 0; p < npix; ++p)
        target.px[p] = (cm.conc.px[p * 3] - lo) / range;
    return target;
}

Image hematoxylin_target(const Image& image) {
    static const StainMatrix kDefault = StainMatrix::default_he();
    return hematoxylin_target(image, kDefault);
}

}  // namespace selfpath::stainsep
