#include "kcal/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "kcal/error.hpp"

namespace kcal {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill, bool requires_grad)
    : s_(std::make_shared<TensorStorage<T>>()) {
  check_shape(shape);
  s_->data.assign(numel(shape), fill);
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<TensorStorage<T>>()) {
  check_shape(shape);
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(values);
  s_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, value, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return s_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor out(s_->shape, s_->data, s_->requires_grad);
  out.s_->grad = s_->grad;
  return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(s_->shape, s_->data, false);
}

namespace {
template <typename T>
thread_local BasicTape<T>* g_active_tape = nullptr;
}

template <typename T>
BasicTape<T>::~BasicTape() {
  if (g_active_tape<T> == this) g_active_tape<T> = nullptr;
}

template <typename T>
void BasicTape<T>::record(const char* op, BasicTensor<T> output, BackwardFn fn) {
  output.set_requires_grad(true);
  entries_.push_back(Entry{op, std::move(output), std::move(fn)});
}

template <typename T>
void BasicTape<T>::backward(const BasicTensor<T>& loss, const std::function<void(std::size_t)>& visit) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  bool on_tape = false;
  for (auto& e : entries_) {
    e.output.grad();
    e.output.zero_grad();
    if (e.output.storage() == loss.storage()) on_tape = true;
  }
  if (!on_tape) throw ContractError("backward(): loss was not produced on this tape");
  BasicTensor<T> seed = loss;
  seed.grad()[0] = T(1);
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (visit) visit(i);
    entries_[i].fn();
  }
}

template <typename T>
void BasicTape<T>::clear() {
  entries_.clear();
  entries_.shrink_to_fit();
}

template <typename T>
BasicTape<T>* BasicTape<T>::active() noexcept {
  return g_active_tape<T>;
}

template <typename T>
BasicTape<T>::Scope::Scope(BasicTape& tape) noexcept : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
BasicTape<T>::Scope::~Scope() {
  g_active_tape<T> = previous_;
}

template <typename T>
BasicTape<T>::Pause::Pause() noexcept : previous_(g_active_tape<T>) {
  g_active_tape<T> = nullptr;
}

template <typename T>
BasicTape<T>::Pause::~Pause() {
  g_active_tape<T> = previous_;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  auto* tape = BasicTape<T>::active();
  if (tape == nullptr) throw ContractError("backward(): no active tape");
  tape->backward(loss);
}

template <typename T>
bool needs_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
  if (BasicTape<T>::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const BasicTensor<T>* t) { return t && t->defined() && t->requires_grad(); });
}

Parameter::Parameter(Tensor initial)
    : value(std::move(initial)), adam_m(value.size(), 0.0f), adam_v(value.size(), 0.0f) {
  value.set_requires_grad(true);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);
template bool needs_grad<float>(std::initializer_list<const BasicTensor<float>*>);
template bool needs_grad<double>(std::initializer_list<const BasicTensor<double>*>);

}  // namespace kcal
