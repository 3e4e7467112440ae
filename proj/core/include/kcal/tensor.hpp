#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kcal {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
};

/// Dense row-major N-d array with an optional gradient buffer.
///
/// Copies are shallow: two BasicTensor objects may refer to the same storage,
/// the same way the tape refers to recorded inputs and outputs. Use clone() for
/// a deep copy and detach() to cut a value out of the gradient path.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0), bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t size() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T& operator[](std::size_t i) { return s_->data[i]; }
  const T& operator[](std::size_t i) const { return s_->data[i]; }
  T item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }
  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient buffer; allocated (zero-filled) on first access. The buffer
  /// belongs to the shared storage, so const handles may accumulate into it.
  std::span<T> grad() const;
  void zero_grad();

  BasicTensor clone() const;
  BasicTensor detach() const;

  TensorStorage<T>* storage() const noexcept { return s_.get(); }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Ordered record of differentiable operations.
///
/// Operations executed while a tape is active (see Scope) append one entry
/// each. backward() replays the entries in exact reverse order.
template <typename T>
class BasicTape {
 public:
  using BackwardFn = std::function<void()>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;
  ~BasicTape();

  void record(const char* op, BasicTensor<T> output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded input.
  /// Intermediate gradients are reset first; leaf gradients accumulate.
  /// `visit`, when set, receives each entry index in the order replayed.
  void backward(const BasicTensor<T>& loss,
                const std::function<void(std::size_t)>& visit = {});

  void clear();
  std::size_t size() const noexcept { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_.at(i).op; }

  static BasicTape* active() noexcept;

  /// Makes a tape the active one for the current thread until destruction.
  class Scope {
   public:
    explicit Scope(BasicTape& tape) noexcept;
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    BasicTape* previous_;
  };

  /// Suspends recording on the current thread.
  class Pause {
   public:
    Pause() noexcept;
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    BasicTape* previous_;
  };

 private:
  struct Entry {
    const char* op;
    BasicTensor<T> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

/// Runs backward on the active tape.
template <typename T>
void backward(const BasicTensor<T>& loss);

/// True when an op with these inputs should be recorded on the active tape.
template <typename T>
bool needs_grad(std::initializer_list<const BasicTensor<T>*> inputs);

/// Trainable tensor plus its Adam moment buffers.
struct Parameter {
  Tensor value;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor initial);
};

}  // namespace kcal
