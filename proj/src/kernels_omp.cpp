#include "selfpath/kernels.hpp"

#include <algorithm>
#include <cmath>

// OpenMP versions of the reference kernels in kernels_serial.cpp. Work is
// split across independent output slices only; inner loop bodies and their
// order match the serial reference, so outputs are bit-identical for any
// OMP_NUM_THREADS.

namespace selfpath::kernels {

void conv3x3_forward(const float* in, int n, int cin, int h, int w,
                     const float* wgt, const float* bias, int cout, float* out) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int co = 0; co < cout; ++co) {
            float* op = out + (static_cast<size_t>(ni) * cout + co) * plane;
            const float b = bias ? bias[co] : 0.f;
            for (size_t i = 0; i < plane; ++i) op[i] = b;
            for (int ci = 0; ci < cin; ++ci) {
                const float* ip = in + (static_cast<size_t>(ni) * cin + ci) * plane;
                const float* wp = wgt + ((static_cast<size_t>(co) * cin + ci) * 9);
                for (int ky = 0; ky < 3; ++ky) {
                    const int y0 = std::max(0, 1 - ky);
                    const int y1 = std::min(h, h + 1 - ky);
                    for (int kx = 0; kx < 3; ++kx) {
                        const float wv = wp[ky * 3 + kx];
                        const int x0 = std::max(0, 1 - kx);
                        const int x1 = std::min(w, w + 1 - kx);
                        for (int y = y0; y < y1; ++y) {
                            float* orow = op + static_cast<size_t>(y) * w;
                            const float* irow = ip + static_cast<size_t>(y + ky - 1) * w + (kx - 1);
                            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv3x3_backward_input(const float* gout, int n, int cout, int h, int w,
                            const float* wgt, int cin, float* gin) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < cin; ++ci) {
            float* gp = gin + (static_cast<size_t>(ni) * cin + ci) * plane;
            for (size_t i = 0; i < plane; ++i) gp[i] = 0.f;
            for (int co = 0; co < cout; ++co) {
                const float* op = gout + (static_cast<size_t>(ni) * cout + co) * plane;
                const float* wp = wgt + ((static_cast<size_t>(co) * cin + ci) * 9);
                for (int ky = 0; ky < 3; ++ky) {
                    const int y0 = std::max(0, ky - 1);
                    const int y1 = std::min(h, h + ky - 1);
                    for (int kx = 0; kx < 3; ++kx) {
                        const float wv = wp[ky * 3 + kx];
                        const int x0 = std::max(0, kx - 1);
                        const int x1 = std::min(w, w + kx - 1);
                        for (int y = y0; y < y1; ++y) {
                            float* grow = gp + static_cast<size_t>(y) * w;
                            const float* orow = op + static_cast<size_t>(y - ky + 1) * w - (kx - 1);
                            for (int x = x0; x < x1; ++x) grow[x] += wv * orow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv3x3_backward_params(const float* gout, const float* in, int n, int cin,
                             int cout, int h, int w, float* gwgt, float* gbias) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        float bacc = 0.f;
        for (int ni = 0; ni < n; ++ni) {
            const float* op = gout + (static_cast<size_t>(ni) * cout + co) * plane;
            for (size_t i = 0; i < plane; ++i) bacc += op[i];
        }
        gbias[co] += bacc;
        for (int ci = 0; ci < cin; ++ci) {
            float* wp = gwgt + ((static_cast<size_t>(co) * cin + ci) * 9);
            for (int ky = 0; ky < 3; ++ky) {
                const int y0 = std::max(0, 1 - ky);
                const int y1 = std::min(h, h + 1 - ky);
                for (int kx = 0; kx < 3; ++kx) {
                    const int x0 = std::max(0, 1 - kx);
                    const int x1 = std::min(w, w + 1 - kx);
                    float acc = 0.f;
                    for (int ni = 0; ni < n; ++ni) {
                        const float* op = gout + (static_cast<size_t>(ni) * cout + co) * plane;
                        const float* ip = in + (static_cast<size_t>(ni) * cin + ci) * plane;
                        for (int y = y0; y < y1; ++y) {
                            const float* orow = op + static_cast<size_t>(y) * w;
                            const float* irow = ip + static_cast<size_t>(y + ky - 1) * w + (kx - 1);
                            for (int x = x0; x < x1; ++x) acc += orow[x] * irow[x];
                        }
                    }
                    wp[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

void dense_forward(const float* in, int n, int din,
                   const float* wgt, const float* bias, int dout, float* out) {
#pragma omp parallel for schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        const float* ip = in + static_cast<size_t>(ni) * din;
        float* op = out + static_cast<size_t>(ni) * dout;
        for (int o = 0; o < dout; ++o) {
            const float* wp = wgt + static_cast<size_t>(o) * din;
            float acc = bias ? bias[o] : 0.f;
            for (int d = 0; d < din; ++d) acc += ip[d] * wp[d];
            op[o] = acc;
        }
    }
}

void dense_backward_input(const float* gout, int n, int dout,
                          const float* wgt, int din, float* gin) {
#pragma omp parallel for schedule(static)
    for (int ni = 0; ni < n; ++ni) {
        const float* op = gout + static_cast<size_t>(ni) * dout;
        float* gp = gin + static_cast<size_t>(ni) * din;
        for (int d = 0; d < din; ++d) gp[d] = 0.f;
        for (int o = 0; o < dout; ++o) {
            const float g = op[o];
            const float* wp = wgt + static_cast<size_t>(o) * din;
            for (int d = 0; d < din; ++d) gp[d] += g * wp[d];
        }
    }
}

void dense_backward_params(const float* gout, const float* in, int n, int din,
                           int dout, float* gwgt, float* gbias) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < dout; ++o) {
        float* wp = gwgt + static_cast<size_t>(o) * din;
        float bacc = 0.f;
        for (int ni = 0; ni < n; ++ni) {
            const float g = gout[static_cast<size_t>(ni) * dout + o];
            bacc += g;
            const float* ip = in + static_cast<size_t>(ni) * din;
            for (int d = 0; d < din; ++d) wp[d] += g * ip[d];
        }
        gbias[o] += bacc;
    }
}

void avgpool2_forward(const float* in, int n, int c, int h, int w, float* out) {
    const int oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float* ip = in + static_cast<size_t>(p) * h * w;
        float* op = out + static_cast<size_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const float* r0 = ip + static_cast<size_t>(2 * y) * w;
            const float* r1 = r0 + w;
            for (int x = 0; x < ow; ++x)
                op[static_cast<size_t>(y) * ow + x] =
                    0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
        }
    }
}

void avgpool2_backward(const float* gout, int n, int c, int h, int w, float* gin) {
    const int oh = h / 2, ow = w / 2;
    (void)oh;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float* op = gout + static_cast<size_t>(p) * (h / 2) * ow;
        float* gp = gin + static_cast<size_t>(p) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                gp[static_cast<size_t>(y) * w + x] =
                    0.25f * op[static_cast<size_t>(y / 2) * ow + x / 2];
    }
}

void upsample2_forward(const float* in, int n, int c, int h, int w, float* out) {
    const int oh = h * 2, ow = w * 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float* ip = in + static_cast<size_t>(p) * h * w;
        float* op = out + static_cast<size_t>(p) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                op[static_cast<size_t>(y) * ow + x] = ip[static_cast<size_t>(y / 2) * w + x / 2];
    }
}

void upsample2_backward(const float* gout, int n, int c, int h, int w, float* gin) {
    const int ow = w * 2;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float* op = gout + static_cast<size_t>(p) * (h * 2) * ow;
        float* gp = gin + static_cast<size_t>(p) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float* o00 = op + static_cast<size_t>(2 * y) * ow + 2 * x;
                gp[static_cast<size_t>(y) * w + x] = o00[0] + o00[1] + o00[ow] + o00[ow + 1];
            }
    }
}

void gap_forward(const float* in, int n, int c, int h, int w, float* out) {
    const size_t plane = static_cast<size_t>(h) * w;
    const float inv = 1.f / static_cast<float>(plane);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float* ip = in + static_cast<size_t>(p) * plane;
        float acc = 0.f;
        for (size_t i = 0; i < plane; ++i) acc += ip[i];
        out[p] = acc * inv;
    }
}

void gap_backward(const float* gout, int n, int c, int h, int w, float* gin) {
    const size_t plane = static_cast<size_t>(h) * w;
    const float inv = 1.f / static_cast<float>(plane);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n * c; ++p) {
        const float g = gout[p] * inv;
        float* gp = gin + static_cast<size_t>(p) * plane;
        for (size_t i = 0; i < plane; ++i) gp[i] = g;
    }
}

void relu_forward(const float* in, size_t m, float* out) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        out[i] = in[i] > 0.f ? in[i] : 0.f;
}

void relu_backward(const float* gout, const float* in, size_t m, float* gin) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        gin[i] = in[i] > 0.f ? gout[i] : 0.f;
}

void sigmoid_forward(const float* in, size_t m, float* out) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        out[i] = 1.f / (1.f + std::exp(-in[i]));
}

void sigmoid_backward(const float* gout, const float* out, size_t m, float* gin) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        gin[i] = gout[i] * out[i] * (1.f - out[i]);
}

void resize_bilinear_hwc(const float* in, int h, int w, int c,
                         float* out, int oh, int ow) {
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const float wy = static_cast<float>(fy - y0);
        int y1 = y0 + 1;
        y0 = std::clamp(y0, 0, h - 1);
        y1 = std::clamp(y1, 0, h - 1);
        for (int x = 0; x < ow; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const float wx = static_cast<float>(fx - x0);
            int x1 = x0 + 1;
            x0 = std::clamp(x0, 0, w - 1);
            x1 = std::clamp(x1, 0, w - 1);
            const float* p00 = in + (static_cast<size_t>(y0) * w + x0) * c;
            const float* p01 = in + (static_cast<size_t>(y0) * w + x1) * c;
            const float* p10 = in + (static_cast<size_t>(y1) * w + x0) * c;
            const float* p11 = in + (static_cast<size_t>(y1) * w + x1) * c;
            float* op = out + (static_cast<size_t>(y) * ow + x) * c;
            for (int ch = 0; ch < c; ++ch) {
                const float top = p00[ch] + wx * (p01[ch] - p00[ch]);
                const float bot = p10[ch] + wx * (p11[ch] - p10[ch]);
                op[ch] = top + wy * (bot - top);
            }
        }
    }
}

}  // namespace selfpath::kernels
