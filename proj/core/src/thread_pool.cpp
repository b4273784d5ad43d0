#include "dumpy/thread_pool.hpp"

#include <atomic>

namespace dumpy {

ThreadPool::ThreadPool(unsigned threads) : size_(threads == 0 ? 1 : threads) {
    if (size_ <= 1) return;
    threads_.reserve(size_);
    for (unsigned i = 0; i < size_; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    threads_.clear();
}

std::future<void> ThreadPool::submit(std::function<void()> task) {
    std::packaged_task<void()> pt(std::move(task));
    auto fut = pt.get_future();
    if (threads_.empty()) {
        pt();
        return fut;
    }
    {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(pt));
    }
    cv_.notify_one();
    return fut;
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads_.empty() || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const std::size_t tasks = std::min<std::size_t>(size_, n);
    std::vector<std::future<void>> futs;
    futs.reserve(tasks);
    for (std::size_t t = 0; t < tasks; ++t) {
        futs.push_back(submit([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        }));
    }
    for (auto& f : futs) f.get();
}

void ThreadPool::worker_loop() {
    for (;;) {
        std::packaged_task<void()> task;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (stop_ && queue_.empty()) return;
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

}  // namespace dumpy
