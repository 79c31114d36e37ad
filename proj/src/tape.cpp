#include "xssm/tape.hpp"

#include <stdexcept>

namespace xssm {

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn) {
  auto& out = output.impl();
  if (out.producer != nullptr) {
    throw std::logic_error("tape: tensor recorded as the output of two entries");
  }
  out.producer = this;
  out.producer_index = entries_.size();
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(Tensor<T> loss) {
  if (loss.numel() != 1) {
    throw ShapeError("tape: backward needs a scalar output, got " + shape_str(loss.shape()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (const auto& in : entries_[i].inputs) {
      const auto& impl = in.impl();
      if (impl.producer == this && impl.producer_index >= i) {
        throw std::logic_error("tape: cycle detected at entry " + std::to_string(i));
      }
    }
  }
  loss.grad_mut()[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->fn();
  }
}

template <typename T>
void Tape<T>::clear() {
  for (auto& e : entries_) e.output.impl().producer = nullptr;
  entries_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace xssm
