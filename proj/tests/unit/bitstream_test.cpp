#include "doctest.h"

#include <chrono>
#include <random>

#include "metabit/bitstream/h264.hpp"
#include "support/bit_writer.hpp"
#include "support/fixtures.hpp"

using namespace metabit;
using namespace metabit::bitstream;
using metabit::testing::BitWriter;

namespace {

BitReader reader_for(const std::vector<std::uint8_t>& b) { return BitReader(b); }

std::vector<std::uint8_t> bits(const char* s) {
  BitWriter w;
  for (; *s; ++s) w.put_bit(*s == '1');
  return w.bytes();
}

NalUnit make_nal(std::uint8_t type, std::uint8_t ref_idc, const BitWriter& w) {
  NalUnit n;
  n.type = type;
  n.ref_idc = ref_idc;
  n.payload = w.bytes();
  return n;
}

// Baseline-profile SPS for a width x height (multiples of 16) picture.
NalUnit synthetic_sps(int width_mbs, int height_mbs, int profile = 66, int crop_bottom = 0) {
  BitWriter w;
  w.put_bits(profile, 8);
  w.put_bits(0, 8);
  w.put_bits(30, 8);
  w.put_ue(0);  // sps id
  if (profile == 100) {
    w.put_ue(1);  // chroma_format_idc
    w.put_ue(0);
    w.put_ue(0);
    w.put_bit(0);
    w.put_bit(0);
  }
  w.put_ue(0);  // log2_max_frame_num_minus4
  w.put_ue(2);  // poc type 2
  w.put_ue(1);  // max_num_ref_frames
  w.put_bit(0);
  w.put_ue(width_mbs - 1);
  w.put_ue(height_mbs - 1);
  w.put_bit(1);  // frame_mbs_only
  w.put_bit(1);
  if (crop_bottom) {
    w.put_bit(1);
    w.put_ue(0);
    w.put_ue(0);
    w.put_ue(0);
    w.put_ue(crop_bottom);
  } else {
    w.put_bit(0);
  }
  w.put_bit(0);  // vui
  w.finish();
  return make_nal(kNalSps, 3, w);
}

NalUnit synthetic_pps(int init_qp_minus26, int slice_groups = 0) {
  BitWriter w;
  w.put_ue(0);
  w.put_ue(0);
  w.put_bit(0);  // CAVLC
  w.put_bit(0);
  w.put_ue(slice_groups);
  if (slice_groups) {
    w.finish();
    return make_nal(kNalPps, 3, w);
  }
  w.put_ue(0);
  w.put_ue(0);
  w.put_bit(0);
  w.put_bits(0, 2);
  w.put_se(init_qp_minus26);
  w.put_se(0);
  w.put_se(0);
  w.put_bit(1);
  w.put_bit(0);
  w.put_bit(0);
  w.finish();
  return make_nal(kNalPps, 3, w);
}

NalUnit synthetic_slice(int slice_type, int qp_delta, bool idr, int first_mb = 0) {
  BitWriter w;
  w.put_ue(first_mb);
  w.put_ue(slice_type);
  w.put_ue(0);         // pps id
  w.put_bits(0, 4);    // frame_num
  if (idr) w.put_ue(0);
  if (slice_type % 5 == 0) {
    w.put_bit(0);  // override
    w.put_bit(0);  // ref list modification
  }
  if (idr) {
    w.put_bit(0);
    w.put_bit(0);
  } else {
    w.put_bit(0);
  }
  w.put_se(qp_delta);
  w.put_ue(0);  // disable_deblocking_filter_idc and onward; ignored
  w.finish();
  return make_nal(idr ? kNalSliceIdr : kNalSliceNonIdr, 3, w);
}

std::vector<std::uint8_t> to_stream(const std::vector<NalUnit>& units) {
  return metabit::testing::join_annexb(units);
}

std::string type_string(const std::vector<GopInfo>& gops) {
  std::string s;
  for (const auto& g : gops)
    for (const auto& f : g.frames) s += frame_type_char(f.frame_type);
  return s;
}

}  // namespace

TEST_CASE("Exp-Golomb decoding of short codes") {
  auto b = bits("1" "010" "00100" "011");
  auto br = reader_for(b);
  CHECK(br.read_ue() == 0);
  CHECK(br.read_ue() == 1);
  CHECK(br.read_ue() == 3);
  CHECK(br.read_ue() == 2);

  auto s = bits("1" "010" "011" "00100");
  auto sr = reader_for(s);
  CHECK(sr.read_se() == 0);
  CHECK(sr.read_se() == 1);
  CHECK(sr.read_se() == -1);
  CHECK(sr.read_se() == 2);
}

TEST_CASE("Exp-Golomb round trip over 0..1000 and signed range") {
  BitWriter w;
  for (std::uint32_t n = 0; n <= 1000; ++n) w.put_ue(n);
  for (std::int32_t n = -500; n <= 500; ++n) w.put_se(n);
  w.put_ue(0xFFFFFFFEu);
  auto br = reader_for(w.bytes());
  for (std::uint32_t n = 0; n <= 1000; ++n) REQUIRE(br.read_ue() == n);
  for (std::int32_t n = -500; n <= 500; ++n) REQUIRE(br.read_se() == n);
  CHECK(br.read_ue() == 0xFFFFFFFEu);
}

TEST_CASE("bit reader underflow and overlong codes") {
  auto b = bits("00000001");  // prefix of 7 zeros, no suffix bits left
  auto br = reader_for(b);
  CHECK_THROWS_AS(br.read_ue(), BitUnderflow);
  std::vector<std::uint8_t> zeros(8, 0);
  auto zr = reader_for(zeros);
  CHECK_THROWS_AS(zr.read_ue(), BitstreamError);
  std::vector<std::uint8_t> one{0xFF};
  auto r1 = reader_for(one);
  CHECK_THROWS_AS(r1.read_bits(9), BitUnderflow);
  CHECK(r1.read_bits(8) == 0xFF);
  CHECK_THROWS_AS(r1.read_flag(), BitUnderflow);
}

TEST_CASE("split_annexb: start codes and header fields") {
  const std::vector<std::uint8_t> bytes{0, 0, 0, 1, 0x67, 0x42, 0x00, 0x1e, 0, 0, 1, 0x68, 0xce, 0x38, 0x80};
  auto units = split_annexb(bytes);
  REQUIRE(units.size() == 2);
  CHECK(units[0].type == 7);
  CHECK(units[0].ref_idc == 3);
  CHECK(units[0].start_code_size == 4);
  CHECK(units[0].payload == std::vector<std::uint8_t>{0x42, 0x00, 0x1e});
  CHECK(units[1].type == 8);
  CHECK(units[1].start_code_size == 3);
  CHECK(units[1].offset == 11);
  CHECK_FALSE(units[1].truncated);
}

TEST_CASE("split_annexb: emulation prevention removed") {
  CHECK(unescape_rbsp(std::vector<std::uint8_t>{0, 0, 3, 0}) == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(unescape_rbsp(std::vector<std::uint8_t>{0, 0, 3, 1, 0, 0, 3, 3}) ==
        std::vector<std::uint8_t>{0, 0, 1, 0, 0, 3});
  const std::vector<std::uint8_t> bytes{0, 0, 1, 0x06, 0x05, 0, 0, 3, 0, 0x80};
  auto units = split_annexb(bytes);
  REQUIRE(units.size() == 1);
  CHECK(units[0].payload == std::vector<std::uint8_t>{0x05, 0, 0, 0, 0x80});
}

TEST_CASE("split_annexb: errors and edge cases") {
  CHECK(split_annexb(std::vector<std::uint8_t>{}).empty());
  const std::vector<std::uint8_t> junk{0x12, 0x34, 0x56, 0x78};
  CHECK_THROWS_WITH_AS(split_annexb(junk), doctest::Contains("not Annex-B"), BitstreamError);
  const std::vector<std::uint8_t> forbidden{0, 0, 1, 0xE7, 0x10};
  CHECK_THROWS_AS(split_annexb(forbidden), BitstreamError);
  const std::vector<std::uint8_t> cut{0, 0, 1, 0x67, 0x42, 0, 0, 0, 1};
  auto units = split_annexb(cut);
  REQUIRE(units.size() == 2);
  CHECK(units.back().truncated);
  CHECK_FALSE(units.front().truncated);
  CHECK_THROWS_AS(scan_stream(cut), BitstreamError);
}

TEST_CASE("emulation-prevention round trip on random payloads") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> len(1, 64), small(0, 4), any(0, 255);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<NalUnit> units;
    const int count = 1 + trial % 5;
    for (int u = 0; u < count; ++u) {
      NalUnit n;
      n.type = static_cast<std::uint8_t>(1 + u % 12);
      n.ref_idc = static_cast<std::uint8_t>(u % 4);
      // Zeros before a start code are only attributable as trailing bytes
      // when that start code is the 4-byte form.
      const bool after_padding = !units.empty() && units.back().trailing_zero_bytes > 0;
      n.start_code_size = after_padding || (trial + u) % 2 ? 4 : 3;
      const int l = len(rng);
      for (int i = 0; i < l; ++i) {
        // Bias toward zeros and small values so escapes are frequent.
        n.payload.push_back(static_cast<std::uint8_t>(any(rng) < 128 ? small(rng) % 4 : any(rng)));
      }
      n.payload.back() |= 0x80;  // stop bit
      n.trailing_zero_bytes = (u + 1 < count && trial % 7 == 0) ? 2 : 0;
      units.push_back(std::move(n));
    }
    const auto stream = to_stream(units);
    const auto parsed = split_annexb(stream);
    REQUIRE(parsed.size() == units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
      REQUIRE(parsed[i].payload == units[i].payload);
      REQUIRE(parsed[i].trailing_zero_bytes == units[i].trailing_zero_bytes);
    }
    REQUIRE(to_stream(parsed) == stream);
  }
}

TEST_CASE("split/join round trip is byte exact on encoder output") {
  for (const char* name : {"cif_testsrc.h264", "cif_mandel.h264", "hd_testsrc2.h264", "cif_streaming.h264"}) {
    CAPTURE(name);
    const auto bytes = metabit::testing::read_bytes(metabit::testing::data_path(name));
    const auto units = split_annexb(bytes);
    for (const auto& u : units) {
      // No 00 00 0x (x <= 3) survives unescaping uninterpreted as an escape.
      CHECK_FALSE(u.truncated);
    }
    CHECK(metabit::testing::join_annexb(units) == bytes);
  }
}

TEST_CASE("synthetic parameter sets and slice headers") {
  const auto sps = parse_sps(synthetic_sps(22, 18));
  CHECK(sps.width == 352);
  CHECK(sps.height == 288);
  CHECK(sps.log2_max_frame_num == 4);
  const auto hd = parse_sps(synthetic_sps(120, 68, 100, 4));
  CHECK(hd.width == 1920);
  CHECK(hd.height == 1080);

  const auto pps = parse_pps(synthetic_pps(0));
  CHECK(pps.base_qp() == 26);
  CHECK(pps.pic_init_qp_minus26 == 0);

  const auto s = parse_slice_header(synthetic_slice(7, 9, true), sps, pps);
  CHECK(s.frame_type == FrameType::kI);
  CHECK(s.slice_qp == 35);
  CHECK(s.idr);
  const auto p = parse_slice_header(synthetic_slice(5, -4, false), sps, pps);
  CHECK(p.frame_type == FrameType::kP);
  CHECK(p.slice_qp == 22);
  const auto p0 = parse_slice_header(synthetic_slice(0, 0, false), sps, pps);
  CHECK(p0.frame_type == FrameType::kP);
  CHECK(parse_slice_header(synthetic_slice(2, 0, false), sps, pps).frame_type == FrameType::kI);

  CHECK_THROWS_WITH_AS(parse_slice_header(synthetic_slice(1, 0, false), sps, pps),
                       doctest::Contains("B-frames"), UnsupportedStream);
  CHECK_THROWS_WITH_AS(parse_slice_header(synthetic_slice(6, 0, false), sps, pps),
                       doctest::Contains("B-frames"), UnsupportedStream);
  CHECK_THROWS_AS(parse_slice_header(synthetic_slice(3, 0, false), sps, pps), UnsupportedStream);
  CHECK_THROWS_AS(parse_slice_header(synthetic_slice(4, 0, false), sps, pps), UnsupportedStream);
  CHECK_THROWS_WITH_AS(parse_pps(synthetic_pps(0, 2)), doctest::Contains("slice groups"), UnsupportedStream);
  CHECK_THROWS_AS(parse_slice_header(synthetic_slice(7, 30, true), sps, pps), BitstreamError);
  CHECK_THROWS_AS(parse_sps(synthetic_pps(0)), BitstreamError);
}

TEST_CASE("scan_gop_structure on synthetic streams") {
  CHECK(scan_gop_structure(std::vector<std::uint8_t>{}).empty());

  std::vector<NalUnit> units{synthetic_sps(4, 4), synthetic_pps(0)};
  for (int f = 0; f < 14; ++f) units.push_back(synthetic_slice(f % 7 == 0 ? 7 : 5, f, f % 7 == 0));
  auto gops = scan_gop_structure(to_stream(units));
  REQUIRE(gops.size() == 2);
  CHECK(type_string(gops) == "IPPPPPPIPPPPPP");
  CHECK(gops[1].frames[3].slice_qp == 26 + 10);

  // Two slices per picture: an I+P picture counts as P and keeps the first QP.
  std::vector<NalUnit> multi{synthetic_sps(4, 4), synthetic_pps(0)};
  multi.push_back(synthetic_slice(7, 1, true, 0));
  multi.push_back(synthetic_slice(7, 2, true, 8));
  multi.push_back(synthetic_slice(2, 3, false, 0));
  multi.push_back(synthetic_slice(5, 4, false, 8));
  auto mg = scan_stream(to_stream(multi));
  REQUIRE(mg.picture_count == 2);
  REQUIRE(mg.gops.size() == 1);
  CHECK(mg.gops[0].frames[0].slice_count == 2);
  CHECK(mg.gops[0].frames[1].frame_type == FrameType::kP);
  CHECK(mg.gops[0].frames[1].slice_qp == 29);

  std::vector<NalUnit> no_pps{synthetic_sps(4, 4), synthetic_slice(7, 0, true)};
  CHECK_THROWS_WITH_AS(scan_stream(to_stream(no_pps)), doctest::Contains("missing PPS"), BitstreamError);

  std::vector<NalUnit> with_b{synthetic_sps(4, 4), synthetic_pps(0), synthetic_slice(7, 0, true),
                              synthetic_slice(1, 0, false)};
  CHECK_THROWS_AS(scan_stream(to_stream(with_b)), UnsupportedStream);
}

TEST_CASE("x264 GOP-7 fixtures: period-7 I/P pattern, QP range, dimensions") {
  struct Clip {
    const char* name;
    int width, height;
  };
  for (const Clip& c : {Clip{"cif_testsrc", 352, 288}, Clip{"cif_mandel", 352, 288},
                        Clip{"hd_testsrc2", 1920, 1080}}) {
    CAPTURE(c.name);
    const auto bytes = metabit::testing::read_bytes(metabit::testing::data_path(std::string(c.name) + ".h264"));
    const auto summary = scan_stream(bytes);
    REQUIRE(summary.sps);
    CHECK(summary.sps->width == c.width);
    CHECK(summary.sps->height == c.height);
    const std::string types = type_string(summary.gops);
    CHECK(types == metabit::testing::read_types(metabit::testing::data_path(std::string(c.name) + ".types")));
    REQUIRE(types.size() == 21);
    for (std::size_t i = 0; i < types.size(); ++i) CHECK(types[i] == (i % 7 == 0 ? 'I' : 'P'));
    REQUIRE(summary.gops.size() == 3);
    for (const auto& g : summary.gops) {
      CHECK(g.frames.size() == 7);
      for (const auto& f : g.frames) {
        CHECK(f.slice_qp >= 0);
        CHECK(f.slice_qp <= 51);
      }
    }
  }
}

TEST_CASE("single-I streaming fixture yields one GOP") {
  const auto bytes = metabit::testing::read_bytes(metabit::testing::data_path("cif_streaming.h264"));
  const auto gops = scan_gop_structure(bytes);
  REQUIRE(gops.size() == 1);
  CHECK(gops[0].frames.size() == 21);
  CHECK(type_string(gops) ==
        metabit::testing::read_types(metabit::testing::data_path("cif_streaming.types")));
}

TEST_CASE("scan time is linear: ~10 MB stream under one second") {
  const auto clip = metabit::testing::read_bytes(metabit::testing::data_path("hd_testsrc2.h264"));
  std::vector<std::uint8_t> big;
  while (big.size() < 10u * 1024 * 1024) big.insert(big.end(), clip.begin(), clip.end());
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = scan_stream(big);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("scanned " << big.size() << " bytes in " << secs << " s");
  CHECK(summary.picture_count % 21 == 0);
  CHECK(secs < 1.0);
}
