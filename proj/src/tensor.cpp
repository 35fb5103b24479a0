#include "lka/tensor.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace lka {

DType dtype_from_name(const std::string& name) {
    if (name == "float32" || name == "f32") return DType::F32;
    if (name == "float64" || name == "f64") return DType::F64;
    if (name == "uint8" || name == "u8") return DType::U8;
    throw std::invalid_argument("unknown dtype name: " + name);
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

void validate_shape(const Shape& s) {
    if (s.empty()) throw std::invalid_argument("tensor shape must be non-empty");
    for (auto d : s) {
        if (d < 1) throw std::invalid_argument("tensor dims must be >= 1, got " + shape_str(s));
    }
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    validate_shape(shape_);
    numel_ = shape_numel(shape_);
    data_.resize(static_cast<std::size_t>(numel_) * dtype_size(dtype_));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, DType dtype, double value) {
    Tensor t(std::move(shape), dtype);
    for (std::int64_t i = 0; i < t.numel_; ++i) t.set(i, value);
    return t;
}

Tensor Tensor::from_f32(Shape shape, std::span<const float> data) {
    Tensor t(std::move(shape), DType::F32);
    if (std::ssize(data) != t.numel_)
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.data(), data.data(), data.size_bytes());
    return t;
}

Tensor Tensor::from_f64(Shape shape, std::span<const double> data) {
    Tensor t(std::move(shape), DType::F64);
    if (std::ssize(data) != t.numel_)
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.data(), data.data(), data.size_bytes());
    return t;
}

Tensor Tensor::from_u8(Shape shape, std::span<const std::uint8_t> data) {
    Tensor t(std::move(shape), DType::U8);
    if (std::ssize(data) != t.numel_)
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.data(), data.data(), data.size_bytes());
    return t;
}

Tensor Tensor::from_values(Shape shape, DType dtype, std::span<const double> data) {
    Tensor t(std::move(shape), dtype);
    if (std::ssize(data) != t.numel_)
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(t.shape_));
    for (std::int64_t i = 0; i < t.numel_; ++i) t.set(i, data[static_cast<std::size_t>(i)]);
    return t;
}

void Tensor::check_dtype(DType want) const {
    if (dtype_ != want)
        throw std::invalid_argument(std::string("dtype mismatch: tensor is ") + dtype_name(dtype_) +
                                    ", requested " + dtype_name(want));
}

std::span<float> Tensor::f32() {
    check_dtype(DType::F32);
    return {reinterpret_cast<float*>(data_.data()), static_cast<std::size_t>(numel_)};
}
std::span<const float> Tensor::f32() const {
    check_dtype(DType::F32);
    return {reinterpret_cast<const float*>(data_.data()), static_cast<std::size_t>(numel_)};
}
std::span<double> Tensor::f64() {
    check_dtype(DType::F64);
    return {reinterpret_cast<double*>(data_.data()), static_cast<std::size_t>(numel_)};
}
std::span<const double> Tensor::f64() const {
    check_dtype(DType::F64);
    return {reinterpret_cast<const double*>(data_.data()), static_cast<std::size_t>(numel_)};
}
std::span<std::uint8_t> Tensor::u8() {
    check_dtype(DType::U8);
    return {reinterpret_cast<std::uint8_t*>(data_.data()), static_cast<std::size_t>(numel_)};
}
std::span<const std::uint8_t> Tensor::u8() const {
    check_dtype(DType::U8);
    return {reinterpret_cast<const std::uint8_t*>(data_.data()), static_cast<std::size_t>(numel_)};
}

double Tensor::get(std::int64_t flat) const {
    switch (dtype_) {
    case DType::F32: return static_cast<double>(f32()[static_cast<std::size_t>(flat)]);
    case DType::F64: return f64()[static_cast<std::size_t>(flat)];
    case DType::U8: return static_cast<double>(u8()[static_cast<std::size_t>(flat)]);
    }
    throw std::logic_error("bad dtype");
}

void Tensor::set(std::int64_t flat, double v) {
    switch (dtype_) {
    case DType::F32: f32()[static_cast<std::size_t>(flat)] = static_cast<float>(v); return;
    case DType::F64: f64()[static_cast<std::size_t>(flat)] = v; return;
    case DType::U8: u8()[static_cast<std::size_t>(flat)] = static_cast<std::uint8_t>(v); return;
    }
    throw std::logic_error("bad dtype");
}

bool Tensor::all_finite() const {
    if (dtype_ == DType::U8) return true;
    if (dtype_ == DType::F32) {
        for (float v : f32())
            if (!std::isfinite(v)) return false;
        return true;
    }
    for (double v : f64())
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype_) return *this;
    Tensor out = Tensor::zeros(shape_, dt);
    for (std::int64_t i = 0; i < numel_; ++i) out.set(i, get(i));
    return out;
}

Tensor make_tensor(Shape shape, DType dtype, double fill) { return Tensor::full(std::move(shape), dtype, fill); }

Tensor make_tensor(Shape shape, DType dtype, std::span<const double> data) {
    return Tensor::from_values(std::move(shape), dtype, data);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
    auto ab = a.bytes();
    auto bb = b.bytes();
    return ab.size() == bb.size() && std::memcmp(ab.data(), bb.data(), ab.size()) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.get(i) - b.get(i)));
    return m;
}

double max_rel_diff(const Tensor& a, const Tensor& b, double floor) {
    if (!same_shape(a, b)) throw std::invalid_argument("max_rel_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double x = a.get(i), y = b.get(i);
        const double denom = std::max({std::abs(x), std::abs(y), floor});
        m = std::max(m, std::abs(x - y) / denom);
    }
    return m;
}

void assert_finite(const Tensor& t, const char* context) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite values in ") + context);
}

} // namespace lka
