#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <thread>
#include <vector>

namespace dumpy {

/// Fixed-size worker pool. A pool of size 0 or 1 runs everything inline on the
/// calling thread, which makes single-worker pipelines strictly sequential.
class ThreadPool {
public:
    explicit ThreadPool(unsigned threads);
    ~ThreadPool();
    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    [[nodiscard]] unsigned size() const { return size_; }

    std::future<void> submit(std::function<void()> task);

    /// Runs fn(i) for i in [0, n), items pulled dynamically by the workers.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

private:
    void worker_loop();

    unsigned size_;
    std::vector<std::jthread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::packaged_task<void()>> queue_;
    bool stop_ = false;
};

}  // namespace dumpy
