#include "dv/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace dv {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

bool shape_eq(const Shape& a, const Shape& b) {
    return a == b;
}

namespace {
void check_dims(const Shape& dims) {
    for (int64_t d : dims)
        if (d <= 0) throw invalid_argument("tensor dimension must be positive, got " + shape_str(dims));
}
}  // namespace

Tensor Tensor::uninit(Shape dims) {
    check_dims(dims);
    Tensor t;
    t.dims_ = std::move(dims);
    t.numel_ = shape_numel(t.dims_);
    t.storage_ = std::shared_ptr<double[]>(new double[static_cast<size_t>(t.numel_)]);
    return t;
}

Tensor::Tensor(Shape dims) : Tensor(std::move(dims), 0.0) {}

Tensor::Tensor(Shape dims, double fill) {
    *this = uninit(std::move(dims));
    this->fill(fill);
}

Tensor Tensor::from(Shape dims, std::vector<double> values) {
    Tensor t = uninit(std::move(dims));
    if (t.numel_ != static_cast<int64_t>(values.size()))
        throw invalid_argument("tensor init size mismatch: shape " + shape_str(t.dims_) + " vs " +
                               std::to_string(values.size()) + " values");
    std::copy(values.begin(), values.end(), t.data());
    return t;
}

Tensor Tensor::reshaped(Shape dims) const {
    if (shape_numel(dims) != numel_)
        throw invalid_argument("reshape " + shape_str(dims_) + " -> " + shape_str(dims) + " changes element count");
    Tensor t;
    t.dims_ = std::move(dims);
    t.numel_ = numel_;
    t.storage_ = storage_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t = uninit(dims_);
    std::memcpy(t.data(), data(), sizeof(double) * static_cast<size_t>(numel_));
    return t;
}

void Tensor::fill(double v) {
    double* a = data();
    for (int64_t i = 0; i < numel_; ++i) a[i] = v;
}

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o)) throw invalid_argument("add_: shape mismatch " + shape_str(dims_) + " vs " + shape_str(o.dims_));
    double* a = data();
    const double* b = o.data();
    for (int64_t i = 0; i < numel_; ++i) a[i] += b[i];
}

void Tensor::axpy_(double s, const Tensor& o) {
    if (!same_shape(o)) throw invalid_argument("axpy_: shape mismatch");
    double* a = data();
    const double* b = o.data();
    for (int64_t i = 0; i < numel_; ++i) a[i] += s * b[i];
}

void Tensor::scale_(double s) {
    double* a = data();
    for (int64_t i = 0; i < numel_; ++i) a[i] *= s;
}

double Tensor::max_abs() const {
    double m = 0.0;
    const double* a = data();
    for (int64_t i = 0; i < numel_; ++i) m = std::max(m, std::fabs(a[i]));
    return m;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) throw invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    const double* a = data();
    const double* b = o.data();
    for (int64_t i = 0; i < numel_; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

bool Tensor::all_finite() const {
    const double* a = data();
    for (int64_t i = 0; i < numel_; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
    if (!same_shape(o)) return false;
    return std::memcmp(data(), o.data(), sizeof(double) * static_cast<size_t>(numel_)) == 0;
}

double Tensor::sum() const {
    double s = 0.0;
    const double* a = data();
    for (int64_t i = 0; i < numel_; ++i) s += a[i];
    return s;
}

}  // namespace dv
