#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lka {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

inline std::size_t dtype_size(DType dt) {
    switch (dt) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    }
    throw std::invalid_argument("unknown dtype");
}

inline const char* dtype_name(DType dt) {
    switch (dt) {
    case DType::F32: return "float32";
    case DType::F64: return "float64";
    case DType::U8: return "uint8";
    }
    return "?";
}

DType dtype_from_name(const std::string& name);

inline bool is_float_dtype(DType dt) { return dt == DType::F32 || dt == DType::F64; }

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);
void validate_shape(const Shape& s);

/// Dense row-major N-d array over a contiguous buffer. Copy is a deep copy;
/// kernels build outputs from scratch and never alias inputs.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dtype = DType::F32);
    static Tensor full(Shape shape, DType dtype, double value);
    static Tensor zeros_like(const Tensor& t) { return zeros(t.shape_, t.dtype_); }
    static Tensor from_f32(Shape shape, std::span<const float> data);
    static Tensor from_f64(Shape shape, std::span<const double> data);
    static Tensor from_u8(Shape shape, std::span<const std::uint8_t> data);
    /// Converting factory: `data` is cast element-wise into `dtype`.
    static Tensor from_values(Shape shape, DType dtype, std::span<const double> data);

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return numel_; }
    DType dtype() const { return dtype_; }
    bool empty() const { return numel_ == 0; }

    std::span<float> f32();
    std::span<const float> f32() const;
    std::span<double> f64();
    std::span<const double> f64() const;
    std::span<std::uint8_t> u8();
    std::span<const std::uint8_t> u8() const;

    std::span<std::byte> bytes() { return {data_.data(), data_.size()}; }
    std::span<const std::byte> bytes() const { return {data_.data(), data_.size()}; }

    /// dtype-erased element access (convenience for IO, tests, CLI glue).
    double get(std::int64_t flat) const;
    void set(std::int64_t flat, double v);

    bool all_finite() const;
    Tensor astype(DType dt) const;

private:
    Tensor(Shape shape, DType dtype);
    void check_dtype(DType want) const;

    Shape shape_;
    std::int64_t numel_ = 0;
    DType dtype_ = DType::F32;
    std::vector<std::byte> data_;
};

/// Factories matching the library's construction contract: a fill constant or
/// an explicit buffer whose length must equal the shape product.
Tensor make_tensor(Shape shape, DType dtype, double fill);
Tensor make_tensor(Shape shape, DType dtype, std::span<const double> data);

bool bitwise_equal(const Tensor& a, const Tensor& b);
bool same_shape(const Tensor& a, const Tensor& b);

/// Largest |a-b| over all elements (tensors must share shape; float dtypes).
double max_abs_diff(const Tensor& a, const Tensor& b);
/// max |a-b| / max(|a|,|b|,floor) over all elements.
double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-12);

void assert_finite(const Tensor& t, const char* context);

} // namespace lka
