#pragma once

#include <functional>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm {

// Ordered record of primitive applications. Ops record themselves on the
// tape made active by a TapeScope; with no active tape nothing is recorded.
// One training step owns one tape.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse order,
  // accumulating into the grad buffer of every requires_grad tensor.
  void backward(Tensor<T> loss);

  // Drops recorded entries (and the activations they retain). Parameter
  // values are untouched.
  void clear();
  std::size_t size() const { return entries_.size(); }

  static Tape* active() { return active_; }

 private:
  struct Entry {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;

  static inline thread_local Tape* active_ = nullptr;
  template <typename>
  friend class TapeScope;
};

template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_) { Tape<T>::active_ = &tape; }
  ~TapeScope() { Tape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Records `fn` if a tape is active and any input requires grad; marks the
// output as requiring grad in that case.
template <typename T>
void record_op(std::initializer_list<Tensor<T>> inputs, Tensor<T>& output,
               typename Tape<T>::BackwardFn fn) {
  auto* tape = Tape<T>::active();
  if (!tape) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  output.set_requires_grad(true);
  tape->record(std::vector<Tensor<T>>(inputs), output, std::move(fn));
}

}  // namespace xssm
