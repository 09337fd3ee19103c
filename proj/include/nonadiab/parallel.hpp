#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace nonadiab {

/// Fixed-size worker pool. The calling thread participates as worker 0, so a
/// pool of size 1 runs everything inline. Jobs must not nest on the same pool.
class WorkerPool {
public:
    explicit WorkerPool(std::size_t threads = 1) : size_(std::max<std::size_t>(1, threads)) {
        for (std::size_t w = 1; w < size_; ++w) {
            workers_.emplace_back([this, w](std::stop_token stop) { worker_loop(stop, w); });
        }
    }

    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            for (auto& t : workers_) t.request_stop();
        }
        wake_.notify_all();
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    std::size_t size() const { return size_; }

    /// Calls fn(i) for i in [0, n), statically chunked by worker.
    template <class Fn>
    void parallel_for(std::size_t n, Fn&& fn) {
        if (size_ == 1 || n < 2) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        dispatch([&](std::size_t worker) {
            const std::size_t chunk = (n + size_ - 1) / size_;
            const std::size_t begin = std::min(n, worker * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }

    /// Calls fn(i) for i in [0, n) with dynamic scheduling; for coarse tasks
    /// of uneven cost such as independent runs of a scan.
    template <class Fn>
    void run_tasks(std::size_t n, Fn&& fn) {
        if (size_ == 1 || n < 2) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        dispatch([&](std::size_t) {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }

private:
    void dispatch(const std::function<void(std::size_t)>& job) {
        {
            std::lock_guard lock(mutex_);
            job_ = &job;
            pending_ = size_ - 1;
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        run_guarded(job, 0);
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

    void run_guarded(const std::function<void(std::size_t)>& job, std::size_t worker) {
        try {
            job(worker);
        } catch (...) {
            std::lock_guard lock(mutex_);
            if (!error_) error_ = std::current_exception();
        }
    }

    void worker_loop(std::stop_token stop, std::size_t worker) {
        std::size_t seen = 0;
        while (true) {
            const std::function<void(std::size_t)>* job = nullptr;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stop.stop_requested() || generation_ != seen; });
                if (stop.stop_requested()) return;
                seen = generation_;
                job = job_;
            }
            run_guarded(*job, worker);
            {
                std::lock_guard lock(mutex_);
                --pending_;
            }
            done_.notify_one();
        }
    }

    std::size_t size_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t pending_ = 0;
    std::size_t generation_ = 0;
    std::exception_ptr error_;
    std::vector<std::jthread> workers_;  // last member: joined before the rest is destroyed
};

/// Thread count from NONADIAB_THREADS, else 1.
inline std::size_t threads_from_environment() {
    if (const char* env = std::getenv("NONADIAB_THREADS")) {
        try {
            const long value = std::stol(env);
            if (value > 0) return static_cast<std::size_t>(value);
        } catch (const std::exception&) {
        }
    }
    return 1;
}

}  // namespace nonadiab
