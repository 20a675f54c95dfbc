#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace umafd::kernels {

/// Geometry of a single-sample 3D convolution over (C, T, H, W) volumes with
/// symmetric zero padding of kernel/2 along each axis.
struct Conv3dGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::array<std::size_t, 3> in_dims{};  // T, H, W
  std::array<std::size_t, 3> kernel{3, 3, 3};
  std::array<std::size_t, 3> stride{1, 1, 1};

  std::size_t pad(std::size_t axis) const { return kernel[axis] / 2; }
  std::size_t out_dim(std::size_t axis) const {
    return (in_dims[axis] + 2 * pad(axis) - kernel[axis]) / stride[axis] + 1;
  }
  std::size_t in_volume() const { return in_dims[0] * in_dims[1] * in_dims[2]; }
  std::size_t out_volume() const { return out_dim(0) * out_dim(1) * out_dim(2); }
  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t patch_size() const { return in_channels * kernel_volume(); }
  std::size_t weight_size() const { return out_channels * patch_size(); }
};

// Serial reference: direct nested loops, kept for tests and benchmarks.
void conv3d_forward_reference(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, std::span<double> y);
void conv3d_backward_reference(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                               std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                               std::span<double> db);

// Parallel path: output positions are split into tiles of whole rows; each
// tile builds its own im2col block in cache and runs a small GEMM. Every output
// element is reduced by one thread in a fixed order, and weight gradients are
// summed over tiles in tile order, so results do not depend on the thread count.
void im2col(const Conv3dGeometry& g, std::span<const double> x, std::span<double> col);
void col2im(const Conv3dGeometry& g, std::span<const double> col, std::span<double> dx);

void conv3d_forward(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);

/// Accumulates into dw and db; overwrites dx when non-empty.
void conv3d_backward(const Conv3dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db);

}  // namespace umafd::kernels
