#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace salibi {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Dense f64 tensor with optional reverse-mode gradient tracking.
// The compute graph is recorded define-by-run: each op that produces a
// grad-tracked output attaches its parents and a backward closure to the
// output node. backward() replays the record in reverse topological order
// and then clears it. Single-threaded; see module docs.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // same size as data when requires_grad

    // graph record
    std::vector<TensorImplPtr> parents;
    std::function<void(TensorImpl&)> backward_fn;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t rank() const { return impl_->shape.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }
    double value() const; // scalar access, throws if numel != 1
    double at(std::size_t i) const { return impl_->data[i]; }

    bool requires_grad() const { return impl_->requires_grad; }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    // copy of the values with no graph attachment
    Tensor detach() const;

    TensorImplPtr impl() const { return impl_; }
    TensorImpl* raw() const { return impl_.get(); }

private:
    TensorImplPtr impl_;
};

// Populates grads of every requires_grad tensor reachable from `loss`,
// then clears the recorded graph. `loss` must be scalar.
void backward(const Tensor& loss);

} // namespace salibi
