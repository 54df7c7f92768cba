#include "hrgr/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

namespace hrgr {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return "float32";
    case DType::kFloat64: return "float64";
    case DType::kIndex: return "uint32-index";
  }
  return "unknown";
}

std::size_t element_width(DType dtype) {
  switch (dtype) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kIndex: return 4;
  }
  return 0;
}

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_dims(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  validate_dims(shape_);
  const auto n = shape_numel(shape_);
  switch (dtype_) {
    case DType::kFloat32: data_ = std::vector<float>(n, 0.0f); break;
    case DType::kFloat64: data_ = std::vector<double>(n, 0.0); break;
    // zero is not a valid label; a fresh index tensor is filled with 1
    case DType::kIndex: data_ = std::vector<std::uint32_t>(n, 1u); break;
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  validate_dims(shape_);
  if (values.size() != shape_numel(shape_)) {
    throw ShapeError("payload of " + std::to_string(values.size()) + " values does not match shape " +
                     to_string(shape_));
  }
  data_ = std::move(values);
}

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  Tensor t;
  validate_dims(shape);
  t.shape_ = std::move(shape);
  t.dtype_ = DType::kFloat32;
  t.check_numel(t.shape_);
  if (values.size() != t.numel()) throw ShapeError("float32 payload does not match shape " + to_string(t.shape_));
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::from_index(Shape shape, std::vector<std::uint32_t> labels) {
  Tensor t;
  validate_dims(shape);
  t.shape_ = std::move(shape);
  t.dtype_ = DType::kIndex;
  if (labels.size() != t.numel()) throw ShapeError("index payload does not match shape " + to_string(t.shape_));
  if (std::find(labels.begin(), labels.end(), 0u) != labels.end()) {
    throw ValidationError("index tensors hold 1-based labels; found 0");
  }
  t.data_ = std::move(labels);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

namespace {

template <class T>
const std::vector<T>& storage(const auto& data, DType dtype, DType want) {
  if (dtype != want) {
    throw ValidationError("tensor has dtype " + to_string(dtype) + ", expected " + to_string(want));
  }
  return std::get<std::vector<T>>(data);
}

}  // namespace

std::span<double> Tensor::f64() {
  return const_cast<std::vector<double>&>(storage<double>(data_, dtype_, DType::kFloat64));
}
std::span<const double> Tensor::f64() const { return storage<double>(data_, dtype_, DType::kFloat64); }
std::span<float> Tensor::f32() {
  return const_cast<std::vector<float>&>(storage<float>(data_, dtype_, DType::kFloat32));
}
std::span<const float> Tensor::f32() const { return storage<float>(data_, dtype_, DType::kFloat32); }
std::span<std::uint32_t> Tensor::idx() {
  return const_cast<std::vector<std::uint32_t>&>(storage<std::uint32_t>(data_, dtype_, DType::kIndex));
}
std::span<const std::uint32_t> Tensor::idx() const {
  return storage<std::uint32_t>(data_, dtype_, DType::kIndex);
}

void Tensor::check_numel(const Shape& shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  validate_dims(shape);
  check_numel(shape);
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::to_f64() const {
  if (dtype_ == DType::kFloat64) return *this;
  std::vector<double> out(numel());
  if (dtype_ == DType::kFloat32) {
    std::copy(f32().begin(), f32().end(), out.begin());
  } else {
    std::copy(idx().begin(), idx().end(), out.begin());
  }
  return Tensor(shape_, std::move(out));
}

Tensor Tensor::to_f32() const {
  if (dtype_ == DType::kFloat32) return *this;
  std::vector<float> out(numel());
  if (dtype_ == DType::kFloat64) {
    std::transform(f64().begin(), f64().end(), out.begin(), [](double v) { return static_cast<float>(v); });
  } else {
    std::transform(idx().begin(), idx().end(), out.begin(), [](std::uint32_t v) { return static_cast<float>(v); });
  }
  return from_f32(shape_, std::move(out));
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  return std::visit(
      [&](const auto& mine) {
        using V = std::decay_t<decltype(mine)>;
        const auto& theirs = std::get<V>(other.data_);
        return mine.size() == theirs.size() &&
               std::memcmp(mine.data(), theirs.data(), mine.size() * sizeof(typename V::value_type)) == 0;
      },
      data_);
}

Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

// ---- linear algebra ---------------------------------------------------------

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
  }
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                     to_string(t.shape()));
  }
}

void require_f64(const Tensor& t, const char* what) {
  if (t.dtype() != DType::kFloat64) {
    throw ValidationError(std::string(what) + ": expected float64, got " + to_string(t.dtype()));
  }
}

namespace {

template <class T>
void matmul_kernel(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t p, std::size_t q,
                   std::size_t r) {
  // i-k-j order: each c[i][j] still accumulates k = 0, 1, ..., q-1 in sequence.
  for (std::size_t i = 0; i < p; ++i) {
    T* crow = c.data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const T aik = a[i * q + k];
      const T* brow = b.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  require_f64(a, what);
  require_f64(b, what);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  if (a.dtype() != b.dtype()) {
    throw ValidationError("matmul: dtype mismatch " + to_string(a.dtype()) + " vs " + to_string(b.dtype()));
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (a.dtype() == DType::kFloat32) {
    Tensor c({p, r}, DType::kFloat32);
    matmul_kernel<float>(a.f32(), b.f32(), c.f32(), p, q, r);
    return c;
  }
  if (a.dtype() != DType::kFloat64) throw ValidationError("matmul: index tensors are not numeric operands");
  Tensor c({p, r});
  matmul_kernel<double>(a.f64(), b.f64(), c.f64(), p, q, r);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_tn lhs");
  require_rank(b, 2, "matmul_tn rhs");
  require_f64(a, "matmul_tn lhs");
  require_f64(b, "matmul_tn rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul_tn: row counts disagree, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t q = a.dim(0), p = a.dim(1), r = b.dim(1);
  Tensor c({p, r});
  auto av = a.f64();
  auto bv = b.f64();
  auto cv = c.f64();
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t i = 0; i < p; ++i) {
      const double aki = av[k * p + i];
      double* crow = cv.data() + i * r;
      const double* brow = bv.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt lhs");
  require_rank(b, 2, "matmul_nt rhs");
  require_f64(a, "matmul_nt lhs");
  require_f64(b, "matmul_nt rhs");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: column counts disagree, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(0);
  Tensor c({p, r});
  auto av = a.f64();
  auto bv = b.f64();
  auto cv = c.f64();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < q; ++k) acc += av[i * q + k] * bv[j * q + k];
      cv[i * r + j] = acc;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor t({cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = a(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  Tensor c = a;
  auto cv = c.f64();
  auto bv = b.f64();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] += bv[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  Tensor c = a;
  auto cv = c.f64();
  auto bv = b.f64();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (auto& v : c.f64()) v *= s;
  return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same(a, b, "hadamard");
  Tensor c = a;
  auto cv = c.f64();
  auto bv = b.f64();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

void axpy(Tensor& a, double s, const Tensor& b) {
  check_same(a, b, "axpy");
  auto av = a.f64();
  auto bv = b.f64();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += s * bv[i];
}

double dot(const Tensor& a, const Tensor& b) {
  check_same(a, b, "dot");
  auto av = a.f64();
  auto bv = b.f64();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.f64()) acc += v;
  return acc;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.f64()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same(a, b, "max_abs_diff");
  auto av = a.f64();
  auto bv = b.f64();
  double m = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

bool all_finite(const Tensor& a) {
  auto v = a.f64();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "row_slice");
  if (begin > end || end > a.dim(0) || begin == end) {
    throw ShapeError("row_slice: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") for shape " + to_string(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  auto src = a.f64();
  return Tensor({end - begin, cols},
                std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                    src.begin() + static_cast<std::ptrdiff_t>(end * cols)));
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("vstack: no parts");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_rank(p, 2, "vstack part");
    if (p.dim(1) != cols) throw ShapeError("vstack: column mismatch " + to_string(p.shape()));
    rows += p.dim(0);
    out.insert(out.end(), p.f64().begin(), p.f64().end());
  }
  return Tensor({rows, cols}, std::move(out));
}

Tensor column_sums(const Tensor& a) {
  require_rank(a, 2, "column_sums");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor s({cols});
  auto sv = s.f64();
  auto av = a.f64();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) sv[j] += av[i * cols + j];
  return s;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& a) {
  Tensor c = a;
  for (auto& v : c.f64()) v = gelu(v);
  return c;
}

Tensor resize_nearest_index(const Tensor& map, std::size_t target_h, std::size_t target_w) {
  require_rank(map, 2, "resize_nearest_index");
  if (map.dtype() != DType::kIndex) throw ValidationError("resize_nearest_index: expected an index tensor");
  if (target_h == 0 || target_w == 0) throw ShapeError("resize_nearest_index: target sizes must be >= 1");
  const std::size_t h = map.dim(0), w = map.dim(1);
  auto src = map.idx();
  std::vector<std::uint32_t> out(target_h * target_w);
  for (std::size_t y = 0; y < target_h; ++y) {
    const std::size_t sy = y * h / target_h;
    for (std::size_t x = 0; x < target_w; ++x) {
      const std::size_t sx = x * w / target_w;
      out[y * target_w + x] = src[sy * w + sx];
    }
  }
  return Tensor::from_index({target_h, target_w}, std::move(out));
}

// ---- .hrgt container --------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'R', 'G', 'T'};
constexpr std::size_t kMaxRank = 255;

template <class U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.empty()) throw ValidationError("encode_tensor: cannot encode an empty tensor");
  if (t.rank() > kMaxRank) throw ValidationError("encode_tensor: rank exceeds 255");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  out.reserve(out.size() + t.numel() * element_width(t.dtype()));
  switch (t.dtype()) {
    case DType::kFloat32:
      for (float v : t.f32()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
      break;
    case DType::kFloat64:
      for (double v : t.f64()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      break;
    case DType::kIndex:
      for (auto v : t.idx()) put_le<std::uint32_t>(out, v);
      break;
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixedHeader = 7;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("hrgt: bad magic, expected \"HRGT\"");
  }
  if (bytes.size() < kFixedHeader) throw TruncatedPayloadError("hrgt: truncated header");
  if (bytes[4] != kTensorFileVersion) {
    throw UnsupportedVersionError("hrgt: unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 2) throw BadDTypeError("hrgt: unknown dtype code " + std::to_string(bytes[5]));
  const auto dtype = static_cast<DType>(bytes[5]);
  const std::size_t ndim = bytes[6];
  if (ndim == 0) throw FormatError("hrgt: rank 0 is not supported");
  if (bytes.size() < kFixedHeader + 8 * ndim) throw TruncatedPayloadError("hrgt: truncated dimension table");
  Shape shape(ndim);
  const std::uint8_t* p = bytes.data() + kFixedHeader;
  for (std::size_t i = 0; i < ndim; ++i, p += 8) {
    const auto d = get_le<std::uint64_t>(p);
    if (d == 0) throw FormatError("hrgt: zero-sized dimension");
    shape[i] = d;
  }
  const std::size_t n = shape_numel(shape);
  const std::size_t width = element_width(dtype);
  const std::size_t header = kFixedHeader + 8 * ndim;
  if (n > (bytes.size() - header) / width || bytes.size() - header != n * width) {
    throw TruncatedPayloadError("hrgt: payload holds " + std::to_string(bytes.size() - header) +
                                " bytes, shape " + to_string(shape) + " needs " + std::to_string(n * width));
  }
  switch (dtype) {
    case DType::kFloat32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i, p += 4) v[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
      return Tensor::from_f32(std::move(shape), std::move(v));
    }
    case DType::kFloat64: {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i, p += 8) v[i] = std::bit_cast<double>(get_le<std::uint64_t>(p));
      return Tensor(std::move(shape), std::move(v));
    }
    case DType::kIndex: {
      std::vector<std::uint32_t> v(n);
      for (std::size_t i = 0; i < n; ++i, p += 4) v[i] = get_le<std::uint32_t>(p);
      return Tensor::from_index(std::move(shape), std::move(v));
    }
  }
  throw BadDTypeError("hrgt: unknown dtype");
}

void save(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ValidationError("failed writing " + path.string());
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace hrgr
