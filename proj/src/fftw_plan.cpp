#include "fftw_plan.hpp"

#include <mutex>
#include <new>

namespace tomodiff::detail {
namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

FftwBuffer::FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)), size(n) {
    if (!ptr) throw std::bad_alloc();
}

FftwBuffer::~FftwBuffer() { fftw_free(ptr); }

FftPlan::FftPlan(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    FftwBuffer tmp(rows * cols);
    std::lock_guard lock(planner_mutex());
    if (rows == 1) {
        fwd_ = fftw_plan_dft_1d(static_cast<int>(cols), tmp.get(), tmp.get(), FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(cols), tmp.get(), tmp.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
        fwd_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), tmp.get(), tmp.get(), FFTW_FORWARD,
                                FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), tmp.get(), tmp.get(), FFTW_BACKWARD,
                                FFTW_ESTIMATE);
    }
}

FftPlan::~FftPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
}

void FftPlan::forward(fftw_complex* buf) const { fftw_execute_dft(fwd_, buf, buf); }
void FftPlan::backward(fftw_complex* buf) const { fftw_execute_dft(bwd_, buf, buf); }

} // namespace tomodiff::detail
