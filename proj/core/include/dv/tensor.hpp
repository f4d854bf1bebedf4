#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dv/errors.hpp"

namespace dv {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

// Dense row-major tensor of doubles. Storage is shared between tensors
// produced by metadata-only operations (reshape), so treat the buffer of any
// tensor received from elsewhere as immutable; only mutate buffers you
// allocated yourself.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape dims);
    Tensor(Shape dims, double fill);

    // allocates without writing; every element must be assigned before use
    static Tensor uninit(Shape dims);
    static Tensor zeros(Shape dims) { return Tensor(std::move(dims), 0.0); }
    static Tensor full(Shape dims, double v) { return Tensor(std::move(dims), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
    static Tensor from(Shape dims, std::vector<double> values);

    const Shape& dims() const { return dims_; }
    int ndim() const { return static_cast<int>(dims_.size()); }
    int64_t dim(int i) const { return dims_.at(static_cast<size_t>(i)); }
    int64_t size() const { return numel_; }
    bool empty() const { return numel_ == 0; }

    double* data() { return storage_.get(); }
    const double* data() const { return storage_.get(); }
    double& operator[](int64_t i) { return storage_.get()[i]; }
    double operator[](int64_t i) const { return storage_.get()[i]; }

    bool same_shape(const Tensor& o) const { return shape_eq(dims_, o.dims_); }

    // Shares storage; element count must match.
    Tensor reshaped(Shape dims) const;
    // Deep copy with its own storage.
    Tensor clone() const;

    void fill(double v);
    void add_(const Tensor& o);          // elementwise in-place add
    void axpy_(double a, const Tensor& o);  // this += a * o
    void scale_(double a);

    double max_abs() const;
    double max_abs_diff(const Tensor& o) const;
    bool all_finite() const;
    bool bitwise_equal(const Tensor& o) const;
    double sum() const;

  private:
    Shape dims_;
    int64_t numel_ = 0;
    std::shared_ptr<double[]> storage_;
};

}  // namespace dv
