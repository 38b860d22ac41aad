#pragma once

#include <complex>
#include <span>
#include <vector>

namespace splinekernel {

/// Unnormalised DFT X_k = sum_j x_j e^{-2 pi i jk/n}; the inverse flag flips
/// the exponent sign (still unnormalised).
std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x, bool inverse = false);

/// Two-dimensional DFT of a row-major rows x cols array.
std::vector<std::complex<double>> fft_2d(std::span<const std::complex<double>> x, int rows, int cols,
                                         bool inverse = false);

}  // namespace splinekernel
