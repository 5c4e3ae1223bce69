#include "panconf/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>

#include "panconf/errors.hpp"

namespace panconf {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'M', 'C', 'T', '1'};
constexpr std::size_t kMaxRank = 4;

std::uint64_t checked_product(const Tensor::Shape& shape) {
  std::uint64_t total = 1;
  for (auto dim : shape) {
    if (dim != 0 && total > std::numeric_limits<std::uint64_t>::max() / dim) {
      throw FormatError("tensor dimensions overflow");
    }
    total *= dim;
  }
  return total;
}

void check_shape(const Tensor::Shape& shape, std::size_t value_count) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw std::invalid_argument("tensor rank must be in [1, 4], got " + std::to_string(shape.size()));
  }
  std::uint64_t total = 1;
  for (auto dim : shape) total *= dim;
  if (total != value_count) {
    throw std::invalid_argument("tensor shape holds " + std::to_string(total) + " values but " +
                                std::to_string(value_count) + " were given");
  }
}

std::size_t dtype_width(DType dtype) {
  switch (dtype) {
    case DType::f32:
    case DType::u32:
      return 4;
    case DType::u8:
      return 1;
  }
  throw std::invalid_argument("unsupported dtype");
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  auto bits = std::bit_cast<Bits>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
T load_le(const std::uint8_t* src) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<Bits>(static_cast<Bits>(src[i]) << (8 * i));
  }
  return std::bit_cast<T>(bits);
}

template <typename T>
std::vector<T> load_payload(std::span<const std::uint8_t> bytes, std::size_t count) {
  std::vector<T> out(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count != 0) std::memcpy(out.data(), bytes.data(), count * sizeof(T));
  } else {
    for (std::size_t i = 0; i < count; ++i) out[i] = load_le<T>(bytes.data() + i * sizeof(T));
  }
  return out;
}

}  // namespace

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::f32:
      return "f32";
    case DType::u32:
      return "u32";
    case DType::u8:
      return "u8";
  }
  return "unknown";
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_, size());
}

Tensor::Tensor(Shape shape, std::vector<std::uint32_t> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_, size());
}

Tensor::Tensor(Shape shape, std::vector<std::uint8_t> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_, size());
}

Tensor Tensor::zeros(DType dtype, Shape shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  switch (dtype) {
    case DType::f32:
      return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
    case DType::u32:
      return Tensor(std::move(shape), std::vector<std::uint32_t>(n, 0u));
    case DType::u8:
      return Tensor(std::move(shape), std::vector<std::uint8_t>(n, 0u));
  }
  throw std::invalid_argument("unsupported dtype");
}

DType Tensor::dtype() const noexcept { return static_cast<DType>(data_.index()); }

std::size_t Tensor::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

std::span<const float> Tensor::f32() const { return std::get<std::vector<float>>(data_); }
std::span<float> Tensor::f32() { return std::get<std::vector<float>>(data_); }
std::span<const std::uint32_t> Tensor::u32() const { return std::get<std::vector<std::uint32_t>>(data_); }
std::span<std::uint32_t> Tensor::u32() { return std::get<std::vector<std::uint32_t>>(data_); }
std::span<const std::uint8_t> Tensor::u8() const { return std::get<std::vector<std::uint8_t>>(data_); }
std::span<std::uint8_t> Tensor::u8() { return std::get<std::vector<std::uint8_t>>(data_); }

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  if (dtype() != other.dtype() || shape_ != other.shape_) return false;
  return std::visit(
      [&](const auto& mine) {
        using V = std::decay_t<decltype(mine)>;
        const auto& theirs = std::get<V>(other.data_);
        return mine.empty() ||
               std::memcmp(mine.data(), theirs.data(), mine.size() * sizeof(typename V::value_type)) == 0;
      },
      data_);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  const auto dtype = tensor.dtype();
  const auto width = dtype_width(dtype);
  if (tensor.rank() == 0 || tensor.rank() > kMaxRank) {
    throw std::invalid_argument("tensor rank must be in [1, 4]");
  }

  std::vector<std::uint8_t> out;
  out.reserve(kMagic.size() + 2 + 8 * tensor.rank() + width * tensor.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (auto dim : tensor.shape()) append_le<std::uint64_t>(out, dim);

  switch (dtype) {
    case DType::f32:
      for (float v : tensor.f32()) append_le<float>(out, v);
      break;
    case DType::u32:
      for (std::uint32_t v : tensor.u32()) append_le<std::uint32_t>(out, v);
      break;
    case DType::u8: {
      auto payload = tensor.u8();
      out.insert(out.end(), payload.begin(), payload.end());
      break;
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 2 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("bad magic: not an .mct tensor");
  }
  const auto tag = bytes[4];
  if (tag > static_cast<std::uint8_t>(DType::u8)) {
    throw FormatError("unsupported dtype tag " + std::to_string(tag));
  }
  const auto dtype = static_cast<DType>(tag);
  const std::size_t rank = bytes[5];
  if (rank == 0 || rank > kMaxRank) {
    throw FormatError("tensor rank must be in [1, 4], got " + std::to_string(rank));
  }
  std::size_t offset = 6;
  if (bytes.size() < offset + 8 * rank) throw FormatError("truncated tensor header");

  Tensor::Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = load_le<std::uint64_t>(bytes.data() + offset);
    offset += 8;
  }
  const auto count = checked_product(shape);
  const auto width = dtype_width(dtype);
  if (count > std::numeric_limits<std::uint64_t>::max() / width) throw FormatError("tensor dimensions overflow");
  const auto payload_bytes = count * width;
  const auto available = bytes.size() - offset;
  if (available < payload_bytes) {
    throw FormatError("truncated payload: header claims " + std::to_string(count) + " values, file holds " +
                      std::to_string(available / width));
  }
  if (available > payload_bytes) throw FormatError("trailing bytes after tensor payload");

  auto payload = bytes.subspan(offset);
  switch (dtype) {
    case DType::f32:
      return Tensor(std::move(shape), load_payload<float>(payload, count));
    case DType::u32:
      return Tensor(std::move(shape), load_payload<std::uint32_t>(payload, count));
    case DType::u8:
      return Tensor(std::move(shape), std::vector<std::uint8_t>(payload.begin(), payload.end()));
  }
  throw FormatError("unsupported dtype");
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Plane PlaneStack::plane(std::size_t i) const {
  Plane out;
  out.height = height;
  out.width = width;
  const auto src = slice(i);
  out.values.assign(src.begin(), src.end());
  return out;
}

Tensor to_tensor(const Plane& plane) {
  return Tensor({plane.height, plane.width}, std::vector<float>(plane.values.begin(), plane.values.end()));
}

Tensor to_tensor(const PlaneStack& stack) {
  return Tensor({stack.count, stack.height, stack.width},
                std::vector<float>(stack.values.begin(), stack.values.end()));
}

Plane plane_from_tensor(const Tensor& tensor) {
  if (tensor.dtype() != DType::f32 || tensor.rank() != 2) {
    throw std::invalid_argument("expected a rank-2 f32 tensor");
  }
  Plane out(tensor.shape()[0], tensor.shape()[1]);
  auto src = tensor.f32();
  std::copy(src.begin(), src.end(), out.values.begin());
  return out;
}

PlaneStack stack_from_tensor(const Tensor& tensor) {
  if (tensor.dtype() != DType::f32 || tensor.rank() != 3) {
    throw std::invalid_argument("expected a rank-3 f32 tensor");
  }
  PlaneStack out(tensor.shape()[0], tensor.shape()[1], tensor.shape()[2]);
  auto src = tensor.f32();
  std::copy(src.begin(), src.end(), out.values.begin());
  return out;
}

}  // namespace panconf
