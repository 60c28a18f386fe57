#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>

namespace tomodiff::detail {

/// fftw_malloc'ed complex buffer.
struct FftwBuffer {
    explicit FftwBuffer(std::size_t n);
    ~FftwBuffer();
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;

    fftw_complex* get() const noexcept { return ptr; }
    std::complex<double>* as_complex() const noexcept { return reinterpret_cast<std::complex<double>*>(ptr); }

    fftw_complex* ptr;
    std::size_t size;
};

/// In-place complex plan pair (forward/backward, unnormalized) for a 1D or 2D
/// grid. Planning is serialized; execution through execute() is thread-safe
/// on any fftw_malloc'ed buffer of the planned size.
class FftPlan {
public:
    FftPlan(std::size_t rows, std::size_t cols); // rows == 1 for 1D
    ~FftPlan();
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    void forward(fftw_complex* buf) const;
    void backward(fftw_complex* buf) const;
    std::size_t size() const noexcept { return rows_ * cols_; }

private:
    std::size_t rows_;
    std::size_t cols_;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

} // namespace tomodiff::detail
