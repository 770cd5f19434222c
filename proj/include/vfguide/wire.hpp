#pragma once

// Fixed-header binary messages for the peer network. All numeric fields are
// big-endian; the CRC-32 covers the body only.
//
//   u16 version | u8 type | char[16] name | u64 timestamp_ns | u32 body_len | u32 crc32 | body

#include <boost/crc.hpp>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vfguide/bytes.hpp"
#include "vfguide/error.hpp"
#include "vfguide/frames.hpp"
#include "vfguide/geometry.hpp"

namespace vfg::wire {

inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 35;
inline constexpr std::size_t kNameSize = 16;
inline constexpr std::uint32_t kMaxBody = 16u << 20;
inline constexpr std::uint16_t kDefaultPort = 18944;
inline constexpr double kRotationTolerance = 1e-6;

enum class MsgType : std::uint8_t { Transform = 1, Mesh = 2, Status = 3, Force = 4 };

constexpr std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::Transform: return "TRANSFORM";
    case MsgType::Mesh: return "MESH";
    case MsgType::Status: return "STATUS";
    case MsgType::Force: return "FORCE";
  }
  return "?";
}

struct MeshBody {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  static MeshBody from(const FixtureMesh& m) { return {m.vertices, m.triangles}; }
  bool operator==(const MeshBody&) const = default;
};

enum class StatusCode : std::uint16_t { Ok = 0, Keepalive = 1, Error = 2, Subscribe = 3 };

struct StatusBody {
  std::uint16_t code = 0;
  std::string text;  // UTF-8
  bool operator==(const StatusBody&) const = default;
};

struct ForceBody {
  Vec3 newtons = Vec3::Zero();
  bool operator==(const ForceBody&) const = default;
};

using Body = std::variant<RigidTransform, MeshBody, StatusBody, ForceBody>;

struct Message {
  std::string name;
  std::uint64_t timestamp_ns = 0;
  Body body;

  MsgType type() const { return static_cast<MsgType>(body.index() + 1); }
  bool operator==(const Message&) const = default;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> data) {
  boost::crc_32_type c;
  c.process_bytes(data.data(), data.size());
  return c.checksum();
}

namespace detail {

inline bool printable_name(std::string_view s) {
  for (char ch : s)
    if (ch < 0x20 || ch > 0x7e) return false;
  return true;
}

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    int n = c < 0x80 ? 0 : (c >> 5) == 0x6 ? 1 : (c >> 4) == 0xe ? 2 : (c >> 3) == 0x1e ? 3 : -1;
    if (n < 0 || (n == 1 && c < 0xc2) || (n == 3 && c > 0xf4)) return false;
    if (n > 0 && i + static_cast<std::size_t>(n) >= s.size()) return false;
    std::uint32_t cp = n == 0 ? c : c & (0x3f >> n);
    for (int k = 1; k <= n; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc >> 6) != 0x2) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if ((n == 2 && (cp < 0x800 || (cp >= 0xd800 && cp <= 0xdfff))) || (n == 3 && (cp < 0x10000 || cp > 0x10ffff)))
      return false;
    i += static_cast<std::size_t>(n) + 1;
  }
  return true;
}

inline void encode_body(bytes::Writer& w, const Body& body) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, RigidTransform>) {
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) w.f64(b.rotation()(r, c));
            w.f64(b.translation()[r]);
          }
        } else if constexpr (std::is_same_v<T, MeshBody>) {
          w.u32(static_cast<std::uint32_t>(b.vertices.size()));
          w.u32(static_cast<std::uint32_t>(b.triangles.size()));
          for (const auto& v : b.vertices)
            for (int i = 0; i < 3; ++i) w.f64(v[i]);
          for (const auto& t : b.triangles)
            for (auto i : t) w.u32(i);
        } else if constexpr (std::is_same_v<T, StatusBody>) {
          w.u16(b.code);
          w.u16(static_cast<std::uint16_t>(b.text.size()));
          w.raw({reinterpret_cast<const std::uint8_t*>(b.text.data()), b.text.size()});
        } else {
          for (int i = 0; i < 3; ++i) w.f64(b.newtons[i]);
        }
      },
      body);
}

inline std::optional<Body> decode_body(MsgType type, std::span<const std::uint8_t> in) {
  bytes::Reader r(bytes::Order::Big, in);
  switch (type) {
    case MsgType::Transform: {
      if (in.size() != 96) return std::nullopt;
      Mat3 rot;
      Vec3 t;
      for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) r.f64(rot(i, c));
        r.f64(t[i]);
      }
      if (!is_rotation(rot, kRotationTolerance) || !t.allFinite()) return std::nullopt;
      return RigidTransform::with_tolerance(rot, t, kRotationTolerance);
    }
    case MsgType::Mesh: {
      std::uint32_t nv = 0, nt = 0;
      if (!r.u32(nv) || !r.u32(nt)) return std::nullopt;
      if (8 + 24ull * nv + 12ull * nt != in.size()) return std::nullopt;
      MeshBody m;
      m.vertices.resize(nv);
      m.triangles.resize(nt);
      for (auto& v : m.vertices) {
        for (int i = 0; i < 3; ++i) r.f64(v[i]);
        if (!v.allFinite()) return std::nullopt;
      }
      for (auto& t : m.triangles)
        for (auto& i : t) {
          r.u32(i);
          if (i >= nv) return std::nullopt;
        }
      return m;
    }
    case MsgType::Status: {
      StatusBody s;
      std::uint16_t len = 0;
      if (!r.u16(s.code) || !r.u16(len) || r.remaining() != len) return std::nullopt;
      s.text.assign(reinterpret_cast<const char*>(in.data() + 4), len);
      if (!valid_utf8(s.text)) return std::nullopt;
      return s;
    }
    case MsgType::Force: {
      if (in.size() != 24) return std::nullopt;
      ForceBody f;
      for (int i = 0; i < 3; ++i) r.f64(f.newtons[i]);
      if (!f.newtons.allFinite()) return std::nullopt;
      return f;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Throws NameTooLong, OversizeBody or InvalidArgument (non-printable name,
/// non-finite values, status text that is not UTF-8 or too long).
inline std::vector<std::uint8_t> encode(const Message& m) {
  if (m.name.size() > kNameSize) throw Error(Errc::NameTooLong, "name '" + m.name + "' exceeds 16 bytes");
  if (!detail::printable_name(m.name)) throw Error(Errc::InvalidArgument, "name must be printable ASCII");
  if (const auto* s = std::get_if<StatusBody>(&m.body)) {
    if (s->text.size() > 0xffff) throw Error(Errc::OversizeBody, "status text exceeds 65535 bytes");
    if (!detail::valid_utf8(s->text)) throw Error(Errc::InvalidArgument, "status text is not UTF-8");
  }
  if (const auto* f = std::get_if<ForceBody>(&m.body); f && !f->newtons.allFinite())
    throw Error(Errc::InvalidArgument, "force is not finite");
  if (const auto* mesh = std::get_if<MeshBody>(&m.body)) {
    const std::uint64_t size = 8 + 24ull * mesh->vertices.size() + 12ull * mesh->triangles.size();
    if (size > kMaxBody) throw Error(Errc::OversizeBody, "mesh body of " + std::to_string(size) + " bytes exceeds 16 MiB");
    for (const auto& t : mesh->triangles)
      for (auto i : t)
        if (i >= mesh->vertices.size()) throw Error(Errc::InvalidArgument, "triangle index out of range");
    for (const auto& v : mesh->vertices)
      if (!v.allFinite()) throw Error(Errc::InvalidArgument, "mesh vertex is not finite");
  }

  std::vector<std::uint8_t> body;
  bytes::Writer bw(bytes::Order::Big, body);
  detail::encode_body(bw, m.body);

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + body.size());
  bytes::Writer w(bytes::Order::Big, out);
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(m.type()));
  std::array<std::uint8_t, kNameSize> name{};
  std::copy(m.name.begin(), m.name.end(), name.begin());
  w.raw(name);
  w.u64(m.timestamp_ns);
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.u32(crc32(body));
  w.raw(body);
  return out;
}

struct DecodeResult {
  std::optional<Message> message;
  Errc error = Errc::RuntimeError;  // meaningful only without a message
  std::size_t consumed = 0;         // bytes to drop; 0 means "need more input"
  bool ok() const { return message.has_value(); }
};

/// Decodes one frame from the front of `in` without throwing. On Truncated
/// `consumed` is 0. Other failures consume the whole frame when its length is
/// trustworthy, otherwise the header only.
inline DecodeResult try_decode(std::span<const std::uint8_t> in) {
  DecodeResult res;
  if (in.size() < kHeaderSize) {
    res.error = Errc::Truncated;
    return res;
  }
  bytes::Reader r(bytes::Order::Big, in);
  std::uint16_t version = 0;
  std::uint8_t type = 0;
  std::array<std::uint8_t, kNameSize> name{};
  std::uint64_t ts = 0;
  std::uint32_t len = 0, crc = 0;
  r.u16(version);
  r.u8(type);
  r.raw(name);
  r.u64(ts);
  r.u32(len);
  r.u32(crc);
  if (version != kVersion) {
    res.error = Errc::BadMagicOrVersion;
    res.consumed = kHeaderSize;
    return res;
  }
  if (len > kMaxBody) {
    res.error = Errc::OversizeBody;
    res.consumed = kHeaderSize;
    return res;
  }
  if (in.size() < kHeaderSize + len) {
    res.error = Errc::Truncated;
    return res;
  }
  res.consumed = kHeaderSize + len;
  const auto body = in.subspan(kHeaderSize, len);
  if (crc32(body) != crc) {
    res.error = Errc::ChecksumMismatch;
    return res;
  }
  std::size_t name_len = 0;
  while (name_len < kNameSize && name[name_len] != 0) ++name_len;
  for (std::size_t i = name_len; i < kNameSize; ++i)
    if (name[i] != 0) name_len = kNameSize + 1;
  const std::string name_str(reinterpret_cast<const char*>(name.data()), std::min(name_len, kNameSize));
  if (name_len > kNameSize || !detail::printable_name(name_str) || type < 1 || type > 4) {
    res.error = Errc::MalformedHeader;
    return res;
  }
  auto parsed = detail::decode_body(static_cast<MsgType>(type), body);
  if (!parsed) {
    res.error = Errc::MalformedBody;
    return res;
  }
  res.message = Message{name_str, ts, std::move(*parsed)};
  return res;
}

/// Decodes exactly one frame; throws on any error or trailing bytes.
inline Message decode(std::span<const std::uint8_t> in) {
  auto r = try_decode(in);
  if (!r.ok()) throw Error(r.error, "cannot decode wire message");
  if (r.consumed != in.size()) throw Error(Errc::MalformedBody, "trailing bytes after message");
  return std::move(*r.message);
}

/// Reassembles frames from a byte stream, dropping and counting bad ones.
class StreamDecoder {
 public:
  void feed(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

  std::optional<Message> next() {
    while (true) {
      auto r = try_decode({buf_.data() + pos_, buf_.size() - pos_});
      if (r.consumed == 0) {
        compact();
        return std::nullopt;
      }
      pos_ += r.consumed;
      if (r.ok()) return std::move(r.message);
      ++errors_;
      last_error_ = r.error;
    }
  }

  std::uint64_t errors() const { return errors_; }
  Errc last_error() const { return last_error_; }
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  void compact() {
    if (pos_ == 0) return;
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::uint64_t errors_ = 0;
  Errc last_error_ = Errc::RuntimeError;
};

inline Message transform_message(std::string name, std::uint64_t ts, const RigidTransform& t) { return {std::move(name), ts, t}; }
inline Message mesh_message(std::string name, std::uint64_t ts, const FixtureMesh& m) { return {std::move(name), ts, MeshBody::from(m)}; }
inline Message force_message(std::string name, std::uint64_t ts, const Vec3& f) { return {std::move(name), ts, ForceBody{f}}; }
inline Message status_message(std::string name, std::uint64_t ts, StatusCode code, std::string text) {
  return {std::move(name), ts, StatusBody{static_cast<std::uint16_t>(code), std::move(text)}};
}

inline std::string to_hex(std::span<const std::uint8_t> b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto c : b) {
    s.push_back(kDigits[c >> 4]);
    s.push_back(kDigits[c & 15]);
  }
  return s;
}

inline std::vector<std::uint8_t> from_hex(std::string_view s) {
  std::vector<std::uint8_t> out;
  int hi = -1;
  for (char ch : s) {
    int v = ch >= '0' && ch <= '9' ? ch - '0' : ch >= 'a' && ch <= 'f' ? ch - 'a' + 10 : ch >= 'A' && ch <= 'F' ? ch - 'A' + 10 : -1;
    if (v < 0) {
      if (std::isspace(static_cast<unsigned char>(ch))) continue;
      throw Error(Errc::InvalidArgument, std::string("bad hex digit '") + ch + "'");
    }
    if (hi < 0) {
      hi = v;
    } else {
      out.push_back(static_cast<std::uint8_t>(hi << 4 | v));
      hi = -1;
    }
  }
  if (hi >= 0) throw Error(Errc::InvalidArgument, "odd number of hex digits");
  return out;
}

}  // namespace vfg::wire
