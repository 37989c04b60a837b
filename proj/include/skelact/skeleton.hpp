#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "skelact/graph.hpp"
#include "skelact/tensor.hpp"

namespace skelact {

enum class Label { Asd, Td, Unlabeled };

std::string label_to_string(Label label);  // "ASD" / "TD" / "" for unlabeled

struct Joint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

struct SkeletonFrame {
  std::array<Joint, kJointCount> joints;
};

struct SkeletonSequence {
  std::string session_id;
  double fps = 0.0;
  Label label = Label::Unlabeled;
  std::vector<SkeletonFrame> frames;
};

// Body-part split: m = 1 upper body, m = 2 head. Joint sets must be
// disjoint, nonempty subsets of 0..16.
struct PartAssignment {
  std::vector<int> upper_body;
  std::vector<int> head;

  static PartAssignment defaults();  // head 0-4, upper body 5-12
  void validate() const;
};

// Session file: one UTF-8 text line of metadata followed by one line per
// frame of 17 [x, y, confidence] triples. Doubles survive a round trip
// exactly, and write_session(parse_session(s)) reproduces the bytes the
// writer emits.
SkeletonSequence parse_session(std::istream& in);
void write_session(const SkeletonSequence& seq, std::ostream& out);
SkeletonSequence read_session_file(const std::filesystem::path& path);
void write_session_file(const SkeletonSequence& seq, const std::filesystem::path& path);

// Per-part normalization: each coordinate channel of the part is centered
// and scaled by the population standard deviation taken across all frames
// and part joints (guarded by +1e-8). Returns a [T, |part|, 2] tensor.
Tensor normalize_part(const SkeletonSequence& seq, const std::vector<int>& part_joints);

// Joints with confidence below `threshold` copy the nearest valid earlier
// frame (or the first later one at the sequence start); their confidence is
// reset to zero. A joint valid nowhere raises DataError naming the joint.
SkeletonSequence impute_low_confidence(const SkeletonSequence& seq, double threshold);

// Uniform resampling to `t_out` frames: index i maps to floor(i*T_in/t_out).
SkeletonSequence sample_frames(const SkeletonSequence& seq, int t_out);

struct StreamPair {
  Tensor head;        // [T, |head|, 2]
  Tensor upper_body;  // [T, |upper|, 2]
};

// Restricts the sequence to each part's joints and normalizes each part
// independently.
StreamPair split_streams(const SkeletonSequence& seq, const PartAssignment& parts);

}  // namespace skelact
