#include "splinekernel/fft.hpp"

#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace splinekernel {

namespace {

// The FFTW planner is not thread-safe; plan execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>> run(std::span<const std::complex<double>> x, int rank, const int* dims,
                                      bool inverse) {
    std::vector<std::complex<double>> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(x.size());
    if (x.empty()) return out;
    auto* pin = reinterpret_cast<fftw_complex*>(in.data());
    auto* pout = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft(rank, dims, pin, pout, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    if (!plan) throw std::runtime_error("fft: planning failed");
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

}  // namespace

std::vector<std::complex<double>> fft(std::span<const std::complex<double>> x, bool inverse) {
    const int n = static_cast<int>(x.size());
    return run(x, 1, &n, inverse);
}

std::vector<std::complex<double>> fft_2d(std::span<const std::complex<double>> x, int rows, int cols, bool inverse) {
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != x.size())
        throw std::invalid_argument("fft_2d: shape does not match data");
    const int dims[2] = {rows, cols};
    return run(x, 2, dims, inverse);
}

}  // namespace splinekernel
