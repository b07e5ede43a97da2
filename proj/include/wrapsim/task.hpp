#pragma once

#include <coroutine>
#include <exception>
#include <type_traits>
#include <utility>

namespace wrapsim {

// Lazily-started coroutine task with continuation chaining. Simulated-thread
// code is written as ordinary sequential functions returning Co<T>; every
// scheduling point suspends back into the engine loop.
template <class T>
class Co;

namespace detail {

struct FinalAwaiter {
  bool await_ready() noexcept { return false; }
  template <class P>
  std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
    auto cont = h.promise().continuation;
    return cont ? cont : std::noop_coroutine();
  }
  void await_resume() noexcept {}
};

struct PromiseBase {
  std::coroutine_handle<> continuation;
  std::exception_ptr error;

  std::suspend_always initial_suspend() noexcept { return {}; }
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() { error = std::current_exception(); }
};

template <class T>
struct CoPromise : PromiseBase {
  T result{};
  Co<T> get_return_object();
  void return_value(T v) { result = std::move(v); }
};

template <>
struct CoPromise<void> : PromiseBase {
  Co<void> get_return_object();
  void return_void() {}
};

}  // namespace detail

template <class T = void>
class [[nodiscard]] Co {
 public:
  using promise_type = detail::CoPromise<T>;

  explicit Co(std::coroutine_handle<promise_type> h) : h_(h) {}
  Co(Co&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Co(const Co&) = delete;
  Co& operator=(const Co&) = delete;
  ~Co() {
    if (h_) h_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiter) noexcept {
    h_.promise().continuation = awaiter;
    return h_;
  }
  T await_resume() {
    if (h_.promise().error) std::rethrow_exception(h_.promise().error);
    if constexpr (!std::is_void_v<T>) return std::move(h_.promise().result);
  }

 private:
  std::coroutine_handle<promise_type> h_;
};

namespace detail {
template <class T>
Co<T> CoPromise<T>::get_return_object() {
  return Co<T>(std::coroutine_handle<CoPromise<T>>::from_promise(*this));
}
inline Co<void> CoPromise<void>::get_return_object() {
  return Co<void>(std::coroutine_handle<CoPromise<void>>::from_promise(*this));
}
}  // namespace detail

// Root task of one simulated thread. Owned by the engine; resumed one
// scheduling point at a time via the leaf handle recorded at suspension.
class ThreadTask {
 public:
  struct promise_type {
    bool done = false;

    ThreadTask get_return_object() {
      return ThreadTask(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    void return_void() { done = true; }
    void unhandled_exception() { std::terminate(); }
  };

  ThreadTask() = default;
  explicit ThreadTask(std::coroutine_handle<promise_type> h) : h_(h) {}
  ThreadTask(ThreadTask&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  ThreadTask& operator=(ThreadTask&& o) noexcept {
    if (this != &o) {
      if (h_) h_.destroy();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  ThreadTask(const ThreadTask&) = delete;
  ~ThreadTask() {
    if (h_) h_.destroy();
  }

  std::coroutine_handle<> handle() const { return h_; }
  bool finished() const { return !h_ || h_.promise().done; }

 private:
  std::coroutine_handle<promise_type> h_;
};

}  // namespace wrapsim
