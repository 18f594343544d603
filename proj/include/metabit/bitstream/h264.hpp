#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "metabit/bitstream/annexb.hpp"
#include "metabit/common/frame_type.hpp"

namespace metabit::bitstream {

// Raised for syntax the header parser deliberately does not handle; the
// message names the feature.
class UnsupportedStream : public BitstreamError {
 public:
  explicit UnsupportedStream(const std::string& feature)
      : BitstreamError("unsupported stream: " + feature) {}
};

struct SpsInfo {
  int sps_id = 0;
  int profile_idc = 0;
  int level_idc = 0;
  int chroma_format_idc = 1;
  bool separate_colour_plane = false;
  int bit_depth_luma = 8;
  int log2_max_frame_num = 4;
  int pic_order_cnt_type = 0;
  int log2_max_poc_lsb = 4;
  bool delta_pic_order_always_zero = false;
  bool frame_mbs_only = true;
  int width_in_mbs = 0;
  int height_in_map_units = 0;
  int width = 0;   // luma samples after cropping
  int height = 0;
};

struct PpsInfo {
  int pps_id = 0;
  int sps_id = 0;
  bool entropy_coding_mode = false;
  bool bottom_field_pic_order_in_frame_present = false;
  int num_ref_idx_l0_default_active = 1;
  int num_ref_idx_l1_default_active = 1;
  bool weighted_pred = false;
  int weighted_bipred_idc = 0;
  int pic_init_qp_minus26 = 0;
  int pic_init_qs_minus26 = 0;
  int chroma_qp_index_offset = 0;
  bool deblocking_filter_control_present = false;
  bool constrained_intra_pred = false;
  bool redundant_pic_cnt_present = false;

  int base_qp() const { return 26 + pic_init_qp_minus26; }
};

struct SliceInfo {
  FrameType frame_type = FrameType::kI;
  int slice_qp = 26;
  int frame_num = 0;
  int first_mb = 0;
  int pps_id = 0;
  bool idr = false;
  int slice_count = 1;  // slices folded into this picture by scan_gop_structure
};

SpsInfo parse_sps(const NalUnit& nal);
PpsInfo parse_pps(const NalUnit& nal);
SliceInfo parse_slice_header(const NalUnit& nal, const SpsInfo& sps, const PpsInfo& pps);

struct GopInfo {
  std::vector<SliceInfo> frames;  // one entry per picture, decode order
};

struct StreamSummary {
  std::optional<SpsInfo> sps;  // the first active SPS
  std::vector<GopInfo> gops;
  std::size_t nal_count = 0;
  std::size_t picture_count = 0;
};

// One SliceInfo per picture, grouped into GOPs that start at each I picture.
// A picture is I only if all of its slices are I; it reports its first
// slice's QP.
StreamSummary scan_stream(std::span<const std::uint8_t> bytes);
std::vector<GopInfo> scan_gop_structure(std::span<const std::uint8_t> bytes);

}  // namespace metabit::bitstream
