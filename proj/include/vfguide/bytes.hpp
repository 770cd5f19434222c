#pragma once

// Endian-explicit scalar packing shared by the mesh file format and the wire codec.

#include <boost/endian/conversion.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

namespace vfg::bytes {

enum class Order { Big, Little };

template <class U>
U to_order(U v, Order o) {
  return o == Order::Big ? boost::endian::native_to_big(v) : boost::endian::native_to_little(v);
}

template <class U>
U from_order(U v, Order o) {
  return o == Order::Big ? boost::endian::big_to_native(v) : boost::endian::little_to_native(v);
}

class Writer {
 public:
  explicit Writer(Order o, std::vector<std::uint8_t>& out) : order_(o), out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(to_order(v, order_)); }
  void u32(std::uint32_t v) { put(to_order(v, order_)); }
  void u64(std::uint64_t v) { put(to_order(v, order_)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const std::uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  template <class U>
  void put(U v) {
    std::uint8_t b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    out_.insert(out_.end(), b, b + sizeof(U));
  }

  Order order_;
  std::vector<std::uint8_t>& out_;
};

/// Bounds-checked reader; every getter returns false once the input runs out.
class Reader {
 public:
  Reader(Order o, std::span<const std::uint8_t> in) : order_(o), in_(in) {}

  bool u8(std::uint8_t& v) { return get(v); }
  bool u16(std::uint16_t& v) { return get(v) && (v = from_order(v, order_), true); }
  bool u32(std::uint32_t& v) { return get(v) && (v = from_order(v, order_), true); }
  bool u64(std::uint64_t& v) { return get(v) && (v = from_order(v, order_), true); }
  bool f64(double& v) {
    std::uint64_t u;
    if (!u64(u)) return false;
    v = std::bit_cast<double>(u);
    return true;
  }
  bool raw(std::span<std::uint8_t> dst) {
    if (remaining() < dst.size()) return false;
    std::memcpy(dst.data(), in_.data() + pos_, dst.size());
    pos_ += dst.size();
    return true;
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  template <class U>
  bool get(U& v) {
    if (remaining() < sizeof(U)) return false;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return true;
  }

  Order order_;
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace vfg::bytes
