#include "wsense/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "wsense/errors.hpp"

namespace wsense {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(data));
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index of rank " + std::to_string(index.size()) +
                         " into tensor of shape " + to_string(shape_));
  }
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) {
      throw DimensionError("index out of range on axis " + std::to_string(i) + " of shape " +
                           to_string(shape_));
    }
    flat = flat * shape_[i] + index[i];
  }
  return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const std::string& context) {
  if (!t.all_finite()) throw ValueError(context + ": non-finite value in result");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out(Shape{m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

namespace {

double apply(EwOp op, double x, double y) {
  switch (op) {
    case EwOp::add: return x + y;
    case EwOp::sub: return x - y;
    case EwOp::mul: return x * y;
    case EwOp::div: return x / y;
    case EwOp::max: return std::max(x, y);
  }
  return 0.0;
}

}  // namespace

Tensor ew(EwOp op, const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size()) {
    throw DimensionError("cannot broadcast " + to_string(bs) + " into " + to_string(as));
  }
  // Strides of b expressed on a's axes; replicated axes get stride 0.
  const std::size_t lead = as.size() - bs.size();
  std::vector<std::size_t> stride(as.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = bs.size(); i-- > 0;) {
    if (bs[i] != as[lead + i] && bs[i] != 1) {
      throw DimensionError("cannot broadcast " + to_string(bs) + " into " + to_string(as));
    }
    stride[lead + i] = bs[i] == 1 ? 0 : s;
    s *= bs[i];
  }

  Tensor out(as);
  std::vector<std::size_t> idx(as.size(), 0);
  std::size_t boff = 0;
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    out[flat] = apply(op, a[flat], b[boff]);
    for (std::size_t ax = as.size(); ax-- > 0;) {
      ++idx[ax];
      boff += stride[ax];
      if (idx[ax] < as[ax]) break;
      boff -= stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  require_finite(out, "elementwise op");
  return out;
}

Tensor ew(EwOp op, const Tensor& a, double b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b);
  require_finite(out, "elementwise op");
  return out;
}

Tensor reduce(ReduceKind kind, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t len = s[axis];
  if (len == 0) throw DimensionError("reduce over zero-length axis " + std::to_string(axis));

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  Tensor out(out_shape);

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* base = x.raw() + o * len * inner + in;
      double acc = base[0];
      for (std::size_t k = 1; k < len; ++k) {
        const double v = base[k * inner];
        acc = kind == ReduceKind::max ? std::max(acc, v) : acc + v;
      }
      if (kind == ReduceKind::mean) acc /= static_cast<double>(len);
      out[o * inner + in] = acc;
    }
  }
  return out;
}

namespace {

constexpr char kTensorMagic[4] = {'W', 'S', 'N', 'T'};
constexpr char kSetMagic[4] = {'W', 'S', 'N', 'S'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError("truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return v;
}

void expect_magic(std::istream& in, const char (&magic)[4]) {
  char got[4];
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + std::string(magic, 4));
  }
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, 4);
  put_u64(out, t.rank());
  for (auto e : t.shape()) put_u64(out, e);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("tensor write failed");
}

Tensor read_tensor(std::istream& in) {
  expect_magic(in, kTensorMagic);
  const std::uint64_t rank = get_u64(in);
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_u64(in);
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = std::bit_cast<double>(get_u64(in));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

void write_tensor_set(std::ostream& out, const TensorSet& set) {
  out.write(kSetMagic, 4);
  put_u64(out, set.size());
  for (const auto& [name, t] : set) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw IoError("tensor set write failed");
}

TensorSet read_tensor_set(std::istream& in) {
  expect_magic(in, kSetMagic);
  const std::uint64_t count = get_u64(in);
  TensorSet set;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u64(in);
    if (len > 4096) throw FormatError("implausible tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw FormatError("truncated tensor set");
    }
    set.emplace(std::move(name), read_tensor(in));
  }
  return set;
}

void save_tensor_set(const std::filesystem::path& path, const TensorSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor_set(out, set);
}

TensorSet load_tensor_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor_set(in);
}

}  // namespace wsense
