#pragma once

#include <cstddef>

// Compute kernels for the training stack. Layout is NCHW row-major unless a
// function says otherwise. Every kernel exists twice: the OpenMP-parallel
// version under selfpath::kernels (used by the model), and a plain serial
// reference under selfpath::kernels::serial kept for testing and the
// kernel_bench comparison target. Parallel versions assign each output
// element to exactly one thread and keep the serial inner-loop order, so
// both sides produce bit-identical results for any thread count.

namespace selfpath::kernels {

// 3x3 convolution, stride 1, zero padding 1.
void conv3x3_forward(const float* in, int n, int cin, int h, int w,
                     const float* wgt, const float* bias, int cout, float* out);
void conv3x3_backward_input(const float* gout, int n, int cout, int h, int w,
                            const float* wgt, int cin, float* gin);
// Accumulates into gwgt/gbias.
void conv3x3_backward_params(const float* gout, const float* in, int n, int cin,
                             int cout, int h, int w, float* gwgt, float* gbias);

// Fully connected: out[n,o] = sum_d in[n,d] * wgt[o,d] + bias[o].
void dense_forward(const float* in, int n, int din,
                   const float* wgt, const float* bias, int dout, float* out);
void dense_backward_input(const float* gout, int n, int dout,
                          const float* wgt, int din, float* gin);
void dense_backward_params(const float* gout, const float* in, int n, int din,
                           int dout, float* gwgt, float* gbias);

// 2x2 average pooling, stride 2 (h, w are input dims, must be even).
void avgpool2_forward(const float* in, int n, int c, int h, int w, float* out);
void avgpool2_backward(const float* gout, int n, int c, int h, int w, float* gin);

// 2x nearest-neighbour upsampling (h, w are input dims).
void upsample2_forward(const float* in, int n, int c, int h, int w, float* out);
void upsample2_backward(const float* gout, int n, int c, int h, int w, float* gin);

// Global average pooling over the spatial plane: [n,c,h,w] -> [n,c].
void gap_forward(const float* in, int n, int c, int h, int w, float* out);
void gap_backward(const float* gout, int n, int c, int h, int w, float* gin);

void relu_forward(const float* in, size_t m, float* out);
void relu_backward(const float* gout, const float* in, size_t m, float* gin);

void sigmoid_forward(const float* in, size_t m, float* out);
// gin from gout and the forward *outputs*.
void sigmoid_backward(const float* gout, const float* out, size_t m, float* gin);

// Bilinear resize on an interleaved HWC image (half-pixel centers, clamped).
void resize_bilinear_hwc(const float* in, int h, int w, int c,
                         float* out, int oh, int ow);

namespace serial {

void conv3x3_forward(const float* in, int n, int cin, int h, int w,
                     const float* wgt, const float* bias, int cout, float* out);
void conv3x3_backward_input(const float* gout, int n, int cout, int h, int w,
                            const float* wgt, int cin, float* gin);
void conv3x3_backward_params(const float* gout, const float* in, int n, int cin,
                             int cout, int h, int w, float* gwgt, float* gbias);
void dense_forward(const float* in, int n, int din,
                   const float* wgt, const float* bias, int dout, float* out);
void dense_backward_input(const float* gout, int n, int dout,
                          const float* wgt, int din, float* gin);
void dense_backward_params(const float* gout, const float* in, int n, int din,
                           int dout, float* gwgt, float* gbias);
void avgpool2_forward(const float* in, int n, int c, int h, int w, float* out);
void avgpool2_backward(const float* gout, int n, int c, int h, int w, float* gin);
void upsample2_forward(const float* in, int n, int c, int h, int w, float* out);
void upsample2_backward(const float* gout, int n, int c, int h, int w, float* gin);
void gap_forward(const float* in, int n, int c, int h, int w, float* out);
void gap_backward(const float* gout, int n, int c, int h, int w, float* gin);
void relu_forward(const float* in, size_t m, float* out);
void relu_backward(const float* gout, const float* in, size_t m, float* gin);
void sigmoid_forward(const float* in, size_t m, float* out);
void sigmoid_backward(const float* gout, const float* out, size_t m, float* gin);
void resize_bilinear_hwc(const float* in, int h, int w, int c,
                         float* out, int oh, int ow);

}  // namespace serial

}  // namespace selfpath::kernels
