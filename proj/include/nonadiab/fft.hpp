#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>

#include "nonadiab/error.hpp"

namespace nonadiab {

namespace detail {
// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
struct FftwPlanDestroy {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};
}  // namespace detail

/// Batched 1D complex transforms of length n over `batch` contiguous rows,
/// operating in place on an owned buffer. Backward is unnormalized.
class BatchedFft {
public:
    BatchedFft(std::size_t n, std::size_t batch) : n_(n), batch_(batch) {
        buffer_.reset(fftw_alloc_complex(n * batch));
        if (!buffer_) throw NumericalAbort("fftw allocation failed");
        const int len = static_cast<int>(n);
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_.reset(fftw_plan_many_dft(1, &len, static_cast<int>(batch), buffer_.get(), nullptr, 1, len,
                                          buffer_.get(), nullptr, 1, len, FFTW_FORWARD, FFTW_ESTIMATE));
        backward_.reset(fftw_plan_many_dft(1, &len, static_cast<int>(batch), buffer_.get(), nullptr, 1, len,
                                           buffer_.get(), nullptr, 1, len, FFTW_BACKWARD, FFTW_ESTIMATE));
        if (!forward_ || !backward_) throw NumericalAbort("fftw planning failed");
    }

    std::size_t length() const { return n_; }
    std::size_t batch() const { return batch_; }

    std::span<std::complex<double>> row(std::size_t r) {
        return {reinterpret_cast<std::complex<double>*>(buffer_.get()) + r * n_, n_};
    }

    void forward() { fftw_execute(forward_.get()); }
    void backward() { fftw_execute(backward_.get()); }

private:
    std::size_t n_;
    std::size_t batch_;
    std::unique_ptr<fftw_complex, detail::FftwFree> buffer_;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDestroy> forward_;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDestroy> backward_;
};

}  // namespace nonadiab
