#include "metabit/bitstream/h264.hpp"

#include <string>

namespace metabit::bitstream {

namespace {

bool has_chroma_format_syntax(int profile_idc) {
  switch (profile_idc) {
    case 100: case 110: case 122: case 244: case 44:
    case 83: case 86: case 118: case 128: case 138: case 139: case 134: case 135:
      return true;
    default:
      return false;
  }
}

void skip_scaling_list(BitReader& br, int size) {
  int last = 8, next = 8;
  for (int j = 0; j < size; ++j) {
    if (next != 0) {
      const int delta = br.read_se();
      if (delta < -128 || delta > 127) throw BitstreamError("delta_scale out of range");
      next = (last + delta + 256) % 256;
    }
    last = next == 0 ? last : next;
  }
}

void expect_type(const NalUnit& nal, std::uint8_t type, const char* what) {
  if (nal.type != type) {
    throw BitstreamError(std::string(what) + ": expected NAL type " + std::to_string(type) +
                         ", got " + std::to_string(nal.type));
  }
}

}  // namespace

SpsInfo parse_sps(const NalUnit& nal) {
  expect_type(nal, kNalSps, "parse_sps");
  BitReader br(nal.payload);
  SpsInfo s;
  s.profile_idc = static_cast<int>(br.read_bits(8));
  br.skip_bits(8);  // constraint flags, reserved bits
  s.level_idc = static_cast<int>(br.read_bits(8));
  s.sps_id = static_cast<int>(br.read_ue());
  if (s.sps_id > 31) throw BitstreamError("seq_parameter_set_id out of range");
  if (has_chroma_format_syntax(s.profile_idc)) {
    s.chroma_format_idc = static_cast<int>(br.read_ue());
    if (s.chroma_format_idc == 3) s.separate_colour_plane = br.read_flag();
    s.bit_depth_luma = 8 + static_cast<int>(br.read_ue());
    br.read_ue();  // bit_depth_chroma_minus8
    br.read_flag();  // qpprime_y_zero_transform_bypass_flag
    if (br.read_flag()) {  // seq_scaling_matrix_present_flag
      const int lists = s.chroma_format_idc != 3 ? 8 : 12;
      for (int i = 0; i < lists; ++i) {
        if (br.read_flag()) skip_scaling_list(br, i < 6 ? 16 : 64);
      }
    }
  }
  if (s.chroma_format_idc != 1) {
    throw UnsupportedStream("chroma_format_idc " + std::to_string(s.chroma_format_idc) +
                            " (only 4:2:0 is handled)");
  }
  s.log2_max_frame_num = static_cast<int>(br.read_ue()) + 4;
  if (s.log2_max_frame_num > 16) throw BitstreamError("log2_max_frame_num_minus4 out of range");
  s.pic_order_cnt_type = static_cast<int>(br.read_ue());
  if (s.pic_order_cnt_type == 0) {
    s.log2_max_poc_lsb = static_cast<int>(br.read_ue()) + 4;
    if (s.log2_max_poc_lsb > 16) throw BitstreamError("log2_max_pic_order_cnt_lsb_minus4 out of range");
  } else if (s.pic_order_cnt_type == 1) {
    s.delta_pic_order_always_zero = br.read_flag();
    br.read_se();  // offset_for_non_ref_pic
    br.read_se();  // offset_for_top_to_bottom_field
    const std::uint32_t cycle = br.read_ue();
    if (cycle > 255) throw BitstreamError("num_ref_frames_in_pic_order_cnt_cycle out of range");
    for (std::uint32_t i = 0; i < cycle; ++i) br.read_se();
  } else if (s.pic_order_cnt_type != 2) {
    throw BitstreamError("pic_order_cnt_type " + std::to_string(s.pic_order_cnt_type) + " invalid");
  }
  br.read_ue();    // max_num_ref_frames
  br.read_flag();  // gaps_in_frame_num_value_allowed_flag
  s.width_in_mbs = static_cast<int>(br.read_ue()) + 1;
  s.height_in_map_units = static_cast<int>(br.read_ue()) + 1;
  s.frame_mbs_only = br.read_flag();
  if (!s.frame_mbs_only) {
    throw UnsupportedStream("interlaced coding (frame_mbs_only_flag = 0)");
  }
  br.read_flag();  // direct_8x8_inference_flag
  int crop_left = 0, crop_right = 0, crop_top = 0, crop_bottom = 0;
  if (br.read_flag()) {
    crop_left = static_cast<int>(br.read_ue());
    crop_right = static_cast<int>(br.read_ue());
    crop_top = static_cast<int>(br.read_ue());
    crop_bottom = static_cast<int>(br.read_ue());
  }
  // 4:2:0 progressive: CropUnitX = SubWidthC = 2, CropUnitY = SubHeightC = 2.
  s.width = s.width_in_mbs * 16 - 2 * (crop_left + crop_right);
  s.height = s.height_in_map_units * 16 - 2 * (crop_top + crop_bottom);
  if (s.width <= 0 || s.height <= 0) throw BitstreamError("cropping removes the whole picture");
  return s;
}

PpsInfo parse_pps(const NalUnit& nal) {
  expect_type(nal, kNalPps, "parse_pps");
  BitReader br(nal.payload);
  PpsInfo p;
  p.pps_id = static_cast<int>(br.read_ue());
  if (p.pps_id > 255) throw BitstreamError("pic_parameter_set_id out of range");
  p.sps_id = static_cast<int>(br.read_ue());
  p.entropy_coding_mode = br.read_flag();
  p.bottom_field_pic_order_in_frame_present = br.read_flag();
  if (br.read_ue() != 0) throw UnsupportedStream("slice groups (num_slice_groups_minus1 > 0)");
  p.num_ref_idx_l0_default_active = static_cast<int>(br.read_ue()) + 1;
  p.num_ref_idx_l1_default_active = static_cast<int>(br.read_ue()) + 1;
  if (p.num_ref_idx_l0_default_active > 32 || p.num_ref_idx_l1_default_active > 32) {
    throw BitstreamError("num_ref_idx_default_active out of range");
  }
  p.weighted_pred = br.read_flag();
  p.weighted_bipred_idc = static_cast<int>(br.read_bits(2));
  p.pic_init_qp_minus26 = br.read_se();
  if (p.pic_init_qp_minus26 < -26 || p.pic_init_qp_minus26 > 25) {
    throw BitstreamError("pic_init_qp_minus26 " + std::to_string(p.pic_init_qp_minus26) +
                         " outside [-26, 25]");
  }
  p.pic_init_qs_minus26 = br.read_se();
  p.chroma_qp_index_offset = br.read_se();
  p.deblocking_filter_control_present = br.read_flag();
  p.constrained_intra_pred = br.read_flag();
  p.redundant_pic_cnt_present = br.read_flag();
  return p;
}

SliceInfo parse_slice_header(const NalUnit& nal, const SpsInfo& sps, const PpsInfo& pps) {
  if (nal.type != kNalSliceNonIdr && nal.type != kNalSliceIdr) {
    throw BitstreamError("parse_slice_header: NAL type " + std::to_string(nal.type) +
                         " is not a coded slice");
  }
  BitReader br(nal.payload);
  SliceInfo s;
  s.idr = nal.type == kNalSliceIdr;
  s.first_mb = static_cast<int>(br.read_ue());
  const std::uint32_t slice_type = br.read_ue();
  if (slice_type > 9) throw BitstreamError("slice_type " + std::to_string(slice_type) + " invalid");
  switch (slice_type % 5) {
    case 0: s.frame_type = FrameType::kP; break;
    case 2: s.frame_type = FrameType::kI; break;
    case 1: throw UnsupportedStream("B-frames (encode with bframes=0)");
    case 3: throw UnsupportedStream("SP slices");
    default: throw UnsupportedStream("SI slices");
  }
  const bool is_p = s.frame_type == FrameType::kP;
  if (s.idr && is_p) throw BitstreamError("IDR picture contains a P slice");
  s.pps_id = static_cast<int>(br.read_ue());
  if (s.pps_id != pps.pps_id) {
    throw BitstreamError("slice references PPS " + std::to_string(s.pps_id) + ", given PPS " +
                         std::to_string(pps.pps_id));
  }
  if (sps.separate_colour_plane) br.read_bits(2);  // colour_plane_id
  s.frame_num = static_cast<int>(br.read_bits(sps.log2_max_frame_num));
  if (s.idr) br.read_ue();  // idr_pic_id
  if (sps.pic_order_cnt_type == 0) {
    br.read_bits(sps.log2_max_poc_lsb);
    if (pps.bottom_field_pic_order_in_frame_present) br.read_se();
  } else if (sps.pic_order_cnt_type == 1 && !sps.delta_pic_order_always_zero) {
    br.read_se();
    if (pps.bottom_field_pic_order_in_frame_present) br.read_se();
  }
  if (pps.redundant_pic_cnt_present) br.read_ue();

  int num_ref_l0 = pps.num_ref_idx_l0_default_active;
  if (is_p) {
    if (br.read_flag()) {  // num_ref_idx_active_override_flag
      num_ref_l0 = static_cast<int>(br.read_ue()) + 1;
      if (num_ref_l0 > 32) throw BitstreamError("num_ref_idx_l0_active_minus1 out of range");
    }
    // ref_pic_list_modification for list 0
    if (br.read_flag()) {
      for (int guard = 0;; ++guard) {
        if (guard > 64) throw BitstreamError("unterminated ref_pic_list_modification");
        const std::uint32_t idc = br.read_ue();
        if (idc == 3) break;
        if (idc > 3) throw BitstreamError("modification_of_pic_nums_idc invalid");
        br.read_ue();
      }
    }
    if (pps.weighted_pred) {
      br.read_ue();  // luma_log2_weight_denom
      br.read_ue();  // chroma_log2_weight_denom (ChromaArrayType != 0)
      for (int i = 0; i < num_ref_l0; ++i) {
        if (br.read_flag()) {
          br.read_se();
          br.read_se();
        }
        if (br.read_flag()) {
          for (int j = 0; j < 4; ++j) br.read_se();
        }
      }
    }
  }
  if (nal.ref_idc != 0) {  // dec_ref_pic_marking
    if (s.idr) {
      br.read_flag();  // no_output_of_prior_pics_flag
      br.read_flag();  // long_term_reference_flag
    } else if (br.read_flag()) {  // adaptive_ref_pic_marking_mode_flag
      for (int guard = 0;; ++guard) {
        if (guard > 64) throw BitstreamError("unterminated memory_management_control_operation list");
        const std::uint32_t op = br.read_ue();
        if (op == 0) break;
        if (op > 6) throw BitstreamError("memory_management_control_operation invalid");
        if (op == 1 || op == 3) br.read_ue();
        if (op == 2) br.read_ue();
        if (op == 3 || op == 6) br.read_ue();
        if (op == 4) br.read_ue();
      }
    }
  }
  if (pps.entropy_coding_mode && is_p) br.read_ue();  // cabac_init_idc
  const int delta = br.read_se();
  s.slice_qp = pps.base_qp() + delta;
  if (s.slice_qp < 0 || s.slice_qp > 51) {
    throw BitstreamError("slice QP " + std::to_string(s.slice_qp) + " outside [0, 51]");
  }
  return s;
}

StreamSummary scan_stream(std::span<const std::uint8_t> bytes) {
  StreamSummary summary;
  const auto units = split_annexb(bytes);
  summary.nal_count = units.size();
  std::map<int, SpsInfo> sps_by_id;
  std::map<int, PpsInfo> pps_by_id;
  std::optional<SliceInfo> picture;

  auto flush = [&] {
    if (!picture) return;
    if (picture->frame_type == FrameType::kI || summary.gops.empty()) summary.gops.emplace_back();
    summary.gops.back().frames.push_back(*picture);
    ++summary.picture_count;
    picture.reset();
  };

  for (const auto& nal : units) {
    if (nal.truncated) {
      throw BitstreamError("truncated NAL unit at byte offset " + std::to_string(nal.offset));
    }
    switch (nal.type) {
      case kNalSps: {
        auto sps = parse_sps(nal);
        if (!summary.sps) summary.sps = sps;
        sps_by_id[sps.sps_id] = sps;
        break;
      }
      case kNalPps: {
        auto pps = parse_pps(nal);
        pps_by_id[pps.pps_id] = pps;
        break;
      }
      case kNalSliceNonIdr:
      case kNalSliceIdr: {
        // The PPS id is the third syntax element; peek it to pick parameter sets.
        BitReader peek(nal.payload);
        peek.read_ue();
        peek.read_ue();
        const int pps_id = static_cast<int>(peek.read_ue());
        auto pit = pps_by_id.find(pps_id);
        if (pit == pps_by_id.end()) {
          throw BitstreamError("slice at byte offset " + std::to_string(nal.offset) +
                               " references missing PPS " + std::to_string(pps_id));
        }
        auto sit = sps_by_id.find(pit->second.sps_id);
        if (sit == sps_by_id.end()) {
          throw BitstreamError("PPS " + std::to_string(pps_id) + " references missing SPS " +
                               std::to_string(pit->second.sps_id));
        }
        SliceInfo slice = parse_slice_header(nal, sit->second, pit->second);
        if (slice.first_mb == 0 || !picture) {
          flush();
          picture = slice;
        } else {
          ++picture->slice_count;
          if (slice.frame_type != FrameType::kI) picture->frame_type = FrameType::kP;
        }
        break;
      }
      default:
        break;  // SEI, AUD, filler and others carry nothing needed here
    }
  }
  flush();
  return summary;
}

std::vector<GopInfo> scan_gop_structure(std::span<const std::uint8_t> bytes) {
  return scan_stream(bytes).gops;
}

}  // namespace metabit::bitstream
