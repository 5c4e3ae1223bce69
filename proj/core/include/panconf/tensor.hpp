#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace panconf {

enum class DType : std::uint8_t { f32 = 0, u32 = 1, u8 = 2 };

std::string_view dtype_name(DType dtype);

/// Dense row-major tensor of rank 1..4 holding f32, u32 or u8 values.
class Tensor {
 public:
  using Shape = std::vector<std::uint64_t>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values);
  Tensor(Shape shape, std::vector<std::uint32_t> values);
  Tensor(Shape shape, std::vector<std::uint8_t> values);

  static Tensor zeros(DType dtype, Shape shape);

  DType dtype() const noexcept;
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept;

  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const std::uint32_t> u32() const;
  std::span<std::uint32_t> u32();
  std::span<const std::uint8_t> u8() const;
  std::span<std::uint8_t> u8();

  /// Same dtype, shape and payload bytes (NaN payloads compare by bits).
  bool bitwise_equal(const Tensor& other) const noexcept;

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<std::uint32_t>, std::vector<std::uint8_t>> data_;
};

// `.mct` layout: "MCT1", u8 dtype tag, u8 rank, rank x u64 dims, payload.
// Every multi-byte field is little-endian regardless of host byte order.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// H x W real-valued map.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// N x H x W stack of planes, laid out (index, row, col).
struct PlaneStack {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  PlaneStack() = default;
  PlaneStack(std::size_t n, std::size_t h, std::size_t w, double fill = 0.0)
      : count(n), height(h), width(w), values(n * h * w, fill) {}

  std::size_t plane_size() const noexcept { return height * width; }
  std::span<double> slice(std::size_t i) { return {values.data() + i * plane_size(), plane_size()}; }
  std::span<const double> slice(std::size_t i) const {
    return {values.data() + i * plane_size(), plane_size()};
  }
  double& at(std::size_t i, std::size_t r, std::size_t c) {
    return values[(i * height + r) * width + c];
  }
  double at(std::size_t i, std::size_t r, std::size_t c) const {
    return values[(i * height + r) * width + c];
  }
  Plane plane(std::size_t i) const;
};

Tensor to_tensor(const Plane& plane);
Tensor to_tensor(const PlaneStack& stack);
Plane plane_from_tensor(const Tensor& tensor);
PlaneStack stack_from_tensor(const Tensor& tensor);

}  // namespace panconf
