#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "wire_util.hpp"

using namespace vfg;
using namespace vfg::wire;
using namespace vfg::testing;

namespace {

void push_be(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_f64(std::vector<std::uint8_t>& out, double d) { push_be(out, std::bit_cast<std::uint64_t>(d), 8); }

}  // namespace

TEST(Crc32, CheckValueAndAgreementWithBitwiseOracle) {
  const std::string s = "123456789";
  const std::span<const std::uint8_t> b(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  EXPECT_EQ(crc32(b), 0xCBF43926u);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(i * 7));
    for (auto& x : v) x = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(crc32(v), crc32_bitwise(v));
  }
}

TEST(WireEncode, IdentityTransformMatchesHandBuiltBytes) {
  std::vector<std::uint8_t> body;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) push_f64(body, r == c ? 1.0 : 0.0);
    push_f64(body, 0.0);
  }
  std::vector<std::uint8_t> expect;
  push_be(expect, 1, 2);
  push_be(expect, 1, 1);
  for (char c : std::string("Ref")) expect.push_back(static_cast<std::uint8_t>(c));
  expect.resize(expect.size() + 13, 0);
  push_be(expect, 0, 8);
  push_be(expect, 96, 4);
  push_be(expect, crc32_bitwise(body), 4);
  expect.insert(expect.end(), body.begin(), body.end());

  const auto got = encode(transform_message("Ref", 0, RigidTransform::identity()));
  EXPECT_EQ(got, expect);
  EXPECT_EQ(got.size(), 35u + 96u);
}

TEST(WireEncode, GoldenFixturesAreStable) {
  const auto cases = golden_cases();
  for (const auto& [file, msg] : cases) {
    const auto golden = from_hex(read_fixture(file));
    EXPECT_EQ(encode(msg), golden) << file;
    EXPECT_EQ(decode(golden), msg) << file;
  }
}

TEST(WireEncode, SizesFollowTheLayout) {
  EXPECT_EQ(encode(transform_message("CauteryTip", 7, RigidTransform::identity())).size(), 131u);
  const auto tetra = convex_hull(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)});
  const auto bytes = encode(mesh_message("Hull", 0, tetra));
  EXPECT_EQ(bytes.size() - kHeaderSize, 8u + 4u * 24u + 4u * 12u);
  EXPECT_EQ(bytes.size() - kHeaderSize, 152u);
  EXPECT_EQ(encode(force_message("F", 0, Vec3(1, 2, 3))).size(), 35u + 24u);
  EXPECT_EQ(encode(status_message("S", 0, StatusCode::Ok, "abc")).size(), 35u + 7u);
}

TEST(WireEncode, Errors) {
  try {
    encode(transform_message("ThisNameIsTooLong", 0, {}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NameTooLong);
  }
  EXPECT_NO_THROW(encode(transform_message(std::string(16, 'x'), 0, {})));
  EXPECT_THROW(encode(transform_message("tab\there", 0, {})), Error);
  MeshBody big;
  big.vertices.resize((kMaxBody / 24) + 1);
  try {
    encode(Message{"big", 0, big});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OversizeBody);
  }
  EXPECT_THROW(encode(force_message("F", 0, Vec3(NAN, 0, 0))), Error);
  EXPECT_THROW(encode(status_message("S", 0, StatusCode::Ok, "\xff")), Error);
  EXPECT_THROW(encode(Message{"m", 0, MeshBody{{Vec3::Zero()}, {{0, 0, 1}}}}), Error);
}

TEST(WireDecode, RoundTripRandomMessages) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const auto m = random_message(rng);
    const auto b = encode(m);
    ASSERT_EQ(decode(b), m) << i;
    ASSERT_EQ(encode(decode(b)), b);
  }
}

TEST(WireDecode, DistinctErrors) {
  const auto good = encode(transform_message("Ref", 3, RigidTransform::from_axis_angle(Vec3(1, 1, 0), 0.3)));
  auto corrupt = good;
  corrupt[kHeaderSize + 17] ^= 0x01;
  EXPECT_EQ(try_decode(corrupt).error, Errc::ChecksumMismatch);
  EXPECT_EQ(try_decode({good.data(), 20}).error, Errc::Truncated);
  EXPECT_EQ(try_decode({good.data(), good.size() - 1}).error, Errc::Truncated);
  EXPECT_EQ(try_decode({good.data(), good.size() - 1}).consumed, 0u);
  auto v2 = good;
  v2[1] = 2;
  EXPECT_EQ(try_decode(v2).error, Errc::BadMagicOrVersion);
  auto type9 = good;
  type9[2] = 9;
  EXPECT_EQ(try_decode(type9).error, Errc::MalformedHeader);
  auto huge = good;
  huge[27] = 0x7f;
  EXPECT_EQ(try_decode(huge).error, Errc::OversizeBody);
  auto name = good;
  name[3 + 5] = 'x';  // text after the zero padding
  EXPECT_EQ(try_decode(name).error, Errc::MalformedHeader);
  try {
    decode(corrupt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ChecksumMismatch);
  }
}

TEST(WireDecode, RotationToleranceIsOneMicro) {
  auto b = encode(transform_message("T", 0, RigidTransform::identity()));
  auto set_r00 = [&](double v) {
    auto c = b;
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) c[kHeaderSize + i] = static_cast<std::uint8_t>(u >> (56 - 8 * i));
    fix_crc(c);
    return c;
  };
  const auto slightly = try_decode(set_r00(1.0 + 1e-7));
  ASSERT_TRUE(slightly.ok());
  EXPECT_EQ(std::get<RigidTransform>(slightly.message->body).rotation()(0, 0), 1.0 + 1e-7);
  EXPECT_EQ(try_decode(set_r00(1.0 + 1e-5)).error, Errc::MalformedBody);
  EXPECT_EQ(try_decode(set_r00(-1.0)).error, Errc::MalformedBody);
}

TEST(WireDecode, MalformedBodies) {
  auto mesh = encode(Message{"m", 0, MeshBody{{Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()}, {{0, 1, 2}}}});
  auto bad_index = mesh;
  bad_index[bad_index.size() - 1] = 3;
  fix_crc(bad_index);
  EXPECT_EQ(try_decode(bad_index).error, Errc::MalformedBody);
  auto bad_count = mesh;
  bad_count[kHeaderSize + 3] = 200;
  fix_crc(bad_count);
  EXPECT_EQ(try_decode(bad_count).error, Errc::MalformedBody);
  auto status = encode(status_message("s", 0, StatusCode::Ok, "hello"));
  status[kHeaderSize + 3] = 9;
  fix_crc(status);
  EXPECT_EQ(try_decode(status).error, Errc::MalformedBody);
}

TEST(StreamDecoder, ReassemblesSplitFramesAndSkipsBadOnes) {
  std::mt19937_64 rng(9);
  std::vector<Message> sent;
  std::vector<std::uint8_t> stream;
  for (int i = 0; i < 300; ++i) {
    sent.push_back(random_message(rng));
    auto b = encode(sent.back());
    if (i % 50 == 25) {
      b[b.size() - 1] ^= 0x40;
      sent.pop_back();
    }
    stream.insert(stream.end(), b.begin(), b.end());
  }
  StreamDecoder dec;
  std::vector<Message> got;
  std::uniform_int_distribution<std::size_t> chunk(1, 97);
  for (std::size_t pos = 0; pos < stream.size();) {
    const std::size_t n = std::min(chunk(rng), stream.size() - pos);
    dec.feed({stream.data() + pos, n});
    pos += n;
    while (auto m = dec.next()) got.push_back(std::move(*m));
  }
  EXPECT_EQ(got, sent);
  EXPECT_EQ(dec.errors(), 6u);
  EXPECT_EQ(dec.last_error(), Errc::ChecksumMismatch);
  EXPECT_EQ(dec.buffered(), 0u);
}

TEST(WireDecode, MutatedInputsNeverCrash) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> op(0, 5);
  std::size_t decoded = 0;
  for (int i = 0; i < 20000; ++i) {
    auto b = encode(random_message(rng));
    std::uniform_int_distribution<std::size_t> pos(0, b.size() - 1);
    switch (op(rng)) {
      case 0: b[pos(rng)] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
      case 1: b[pos(rng)] = static_cast<std::uint8_t>(rng()); fix_crc(b); break;
      case 2: b.resize(pos(rng)); break;
      case 3: b.insert(b.begin() + static_cast<std::ptrdiff_t>(pos(rng)), static_cast<std::uint8_t>(rng())); break;
      case 4: for (auto& x : b) x = static_cast<std::uint8_t>(rng()); break;
      default: if (b.size() > kHeaderSize) b[kHeaderSize + pos(rng) % (b.size() - kHeaderSize)] ^= 0xff; fix_crc(b);
    }
    const auto r = try_decode(b);
    if (r.ok()) {
      ++decoded;
      EXPECT_LE(r.consumed, b.size());
    }
  }
  EXPECT_GT(decoded, 0u);
}
