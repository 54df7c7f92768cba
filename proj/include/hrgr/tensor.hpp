#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hrgr/error.hpp"

namespace hrgr {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kIndex = 2 };

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::string to_string(DType dtype);
std::size_t element_width(DType dtype);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array. Index tensors hold 1-based region/node labels.
//
// Tensors have value semantics; reshaping only rewrites the shape. Every
// float64 kernel in the library reads and writes through f64().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::kFloat64);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor filled(Shape shape, double value);
  static Tensor from_f32(Shape shape, std::vector<float> values);
  // Throws ValidationError if any label is 0.
  static Tensor from_index(Shape shape, std::vector<std::uint32_t> labels);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return shape_numel(shape_); }
  DType dtype() const { return dtype_; }
  bool empty() const { return shape_.empty(); }

  std::span<double> f64();
  std::span<const double> f64() const;
  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<std::uint32_t> idx();
  std::span<const std::uint32_t> idx() const;

  // Rank-2 float64 element access.
  double& operator()(std::size_t r, std::size_t c) { return f64()[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return f64()[r * shape_[1] + c]; }

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  Tensor to_f64() const;
  Tensor to_f32() const;

  // Same shape, dtype and bit pattern.
  bool bit_equal(const Tensor& other) const;

 private:
  void check_numel(const Shape& shape) const;

  Shape shape_;
  DType dtype_ = DType::kFloat64;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint32_t>> data_ =
      std::vector<double>{};
};

// Convenience for tests and small constants: a rows x cols float64 matrix.
Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

// ---- linear algebra (float64 unless noted) ---------------------------------
//
// Every reduction runs sequentially in ascending index order so results are
// reproducible bit for bit. Build flags disable FMA contraction for the same
// reason.

// a[p x q] * b[q x r]; float32 or float64, both operands the same dtype.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b for a[q x p], b[q x r].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T for a[p x q], b[r x q].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
// a += s * b, shapes must match exactly.
void axpy(Tensor& a, double s, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

// Rows [begin, end) of a rank-2 tensor.
Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t end);
// Concatenate rank-2 tensors along rows.
Tensor vstack(std::span<const Tensor> parts);
// Column sums of a rank-2 tensor.
Tensor column_sums(const Tensor& a);

// Exact GeLU x * Phi(x) and its derivative Phi(x) + x * phi(x).
double gelu(double x);
double gelu_grad(double x);
Tensor gelu(const Tensor& a);

void require_shape(const Tensor& t, const Shape& expected, const char* what);
void require_rank(const Tensor& t, std::size_t rank, const char* what);
void require_f64(const Tensor& t, const char* what);

// Nearest-neighbour resize of an h x w index map; source coordinate is
// floor(out * in / out_size) on each axis.
Tensor resize_nearest_index(const Tensor& map, std::size_t target_h, std::size_t target_w);

// ---- .hrgt container --------------------------------------------------------
//
// "HRGT" | version u8 = 1 | dtype u8 | ndim u8 | dims u64 LE x ndim | payload LE
inline constexpr std::uint8_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void save(const Tensor& t, const std::filesystem::path& path);
Tensor load(const std::filesystem::path& path);

}  // namespace hrgr
