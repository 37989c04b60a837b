#include "skelact/skeleton.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace skelact {

using nlohmann::json;

std::string label_to_string(Label label) {
  switch (label) {
    case Label::Asd:
      return "ASD";
    case Label::Td:
      return "TD";
    case Label::Unlabeled:
      return "";
  }
  return "";
}

PartAssignment PartAssignment::defaults() {
  PartAssignment parts;
  parts.head = {0, 1, 2, 3, 4};
  parts.upper_body = {5, 6, 7, 8, 9, 10, 11, 12};
  return parts;
}

void PartAssignment::validate() const {
  if (head.empty() || upper_body.empty()) {
    throw DataError("part assignment: both joint sets must be nonempty");
  }
  std::array<int, kJointCount> seen{};
  auto mark = [&](const std::vector<int>& joints, const char* name) {
    for (int j : joints) {
      if (j < 0 || j >= kJointCount) {
        throw DataError(std::string("part assignment: ") + name + " joint " + std::to_string(j) +
                        " outside 0..16");
      }
      if (seen[j]++) {
        throw DataError("part assignment: joint " + std::to_string(j) +
                        " appears in both parts");
      }
    }
  };
  mark(head, "head");
  mark(upper_body, "upper body");
}

// ---------------------------------------------------------------------------
// session I/O
// ---------------------------------------------------------------------------

namespace {

Label parse_label(const json& value, int line) {
  if (value.is_null()) return Label::Unlabeled;
  if (value.is_string()) {
    const std::string s = value.get<std::string>();
    if (s == "ASD") return Label::Asd;
    if (s == "TD") return Label::Td;
  }
  throw DataError("line " + std::to_string(line) + ": unknown label " + value.dump() +
                  " (expected \"ASD\", \"TD\" or null)");
}

json label_to_json(Label label) {
  if (label == Label::Unlabeled) return nullptr;
  return label_to_string(label);
}

}  // namespace

SkeletonSequence parse_session(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing metadata record");

  SkeletonSequence seq;
  try {
    const json meta = json::parse(line);
    seq.session_id = meta.at("session_id").get<std::string>();
    seq.fps = meta.at("fps").get<double>();
    seq.label = parse_label(meta.at("label"), 1);
  } catch (const json::exception& e) {
    throw DataError(std::string("line 1: bad metadata record: ") + e.what());
  }
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) {
    throw DataError("line 1: fps must be a positive finite number");
  }

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json frame_json;
    try {
      frame_json = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": bad frame record: " + e.what());
    }
    if (!frame_json.is_array() || frame_json.size() != kJointCount) {
      throw DataError("line " + std::to_string(line_no) + ": expected 17 joints, got " +
                      std::to_string(frame_json.is_array() ? frame_json.size() : 0));
    }
    SkeletonFrame frame;
    for (int j = 0; j < kJointCount; ++j) {
      const json& triple = frame_json[j];
      if (!triple.is_array() || triple.size() != 3) {
        throw DataError("line " + std::to_string(line_no) + ": joint " + std::to_string(j) +
                        " is not an [x, y, confidence] triple");
      }
      Joint joint;
      joint.x = triple[0].get<double>();
      joint.y = triple[1].get<double>();
      joint.confidence = triple[2].get<double>();
      if (!std::isfinite(joint.x) || !std::isfinite(joint.y) || !std::isfinite(joint.confidence)) {
        throw DataError("line " + std::to_string(line_no) + ": non-finite value at joint " +
                        std::to_string(j));
      }
      if (joint.confidence < 0.0 || joint.confidence > 1.0) {
        throw DataError("line " + std::to_string(line_no) + ": confidence outside [0, 1] at joint " +
                        std::to_string(j));
      }
      frame.joints[j] = joint;
    }
    seq.frames.push_back(frame);
  }
  if (seq.frames.size() < 2) {
    throw DataError("session " + seq.session_id + ": needs at least 2 frames, got " +
                    std::to_string(seq.frames.size()));
  }
  return seq;
}

void write_session(const SkeletonSequence& seq, std::ostream& out) {
  json meta;
  meta["session_id"] = seq.session_id;
  meta["fps"] = seq.fps;
  meta["label"] = label_to_json(seq.label);
  out << meta.dump() << '\n';
  for (const SkeletonFrame& frame : seq.frames) {
    json row = json::array();
    for (const Joint& joint : frame.joints) {
      row.push_back(json::array({joint.x, joint.y, joint.confidence}));
    }
    out << row.dump() << '\n';
  }
}

SkeletonSequence read_session_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open session file " + path.string());
  try {
    return parse_session(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_session_file(const SkeletonSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write session file " + path.string());
  write_session(seq, out);
  if (!out) throw DataError("write failed for session file " + path.string());
}

// ---------------------------------------------------------------------------
// preprocessing
// ---------------------------------------------------------------------------

Tensor normalize_part(const SkeletonSequence& seq, const std::vector<int>& part_joints) {
  if (part_joints.empty()) throw DataError("normalize_part: empty joint set");
  const Index t_len = static_cast<Index>(seq.frames.size());
  if (t_len < 2) throw DataError("normalize_part: needs at least 2 frames");
  const Index n = static_cast<Index>(part_joints.size());

  ArrayXd values(t_len * n * 2);
  for (Index t = 0; t < t_len; ++t) {
    for (Index i = 0; i < n; ++i) {
      const Joint& joint = seq.frames[t].joints[part_joints[i]];
      values[t * n * 2 + i * 2 + 0] = joint.x;
      values[t * n * 2 + i * 2 + 1] = joint.y;
    }
  }

  // Channel statistics over all frames and part joints, population variance.
  for (Index channel = 0; channel < 2; ++channel) {
    double sum = 0.0;
    const Index count = t_len * n;
    for (Index k = 0; k < count; ++k) sum += values[k * 2 + channel];
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (Index k = 0; k < count; ++k) {
      const double d = values[k * 2 + channel] - mean;
      sq += d * d;
    }
    const double std_dev = std::sqrt(sq / static_cast<double>(count));
    if (std_dev == 0.0) {
      std::cerr << "skelact: degenerate constant channel in session " << seq.session_id
                << ", normalized to zeros\n";
    }
    // Guarded divisor: inert for healthy channels, keeps constant channels
    // at exactly zero.
    const double scale = 1.0 / std::max(std_dev, 1e-8);
    for (Index k = 0; k < count; ++k) {
      values[k * 2 + channel] = (values[k * 2 + channel] - mean) * scale;
    }
  }
  return Tensor({t_len, n, 2}, std::move(values));
}

SkeletonSequence impute_low_confidence(const SkeletonSequence& seq, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw UsageError("impute_low_confidence: threshold must lie in [0, 1]");
  }
  const int t_len = static_cast<int>(seq.frames.size());
  SkeletonSequence out = seq;
  for (int j = 0; j < kJointCount; ++j) {
    int first_valid = -1;
    for (int t = 0; t < t_len; ++t) {
      if (seq.frames[t].joints[j].confidence >= threshold) {
        first_valid = t;
        break;
      }
    }
    if (first_valid == -1) {
      throw DataError("impute_low_confidence: joint " + std::to_string(j) +
                      " is below threshold in every frame");
    }
    // Frames before the first valid observation borrow it; later gaps copy
    // the most recent valid value.
    int last_valid = -1;
    for (int t = 0; t < t_len; ++t) {
      Joint& joint = out.frames[t].joints[j];
      if (seq.frames[t].joints[j].confidence >= threshold) {
        last_valid = t;
        continue;
      }
      const int source = last_valid >= 0 ? last_valid : first_valid;
      joint.x = seq.frames[source].joints[j].x;
      joint.y = seq.frames[source].joints[j].y;
      joint.confidence = 0.0;
    }
  }
  return out;
}

SkeletonSequence sample_frames(const SkeletonSequence& seq, int t_out) {
  if (seq.frames.empty()) throw DataError("sample_frames: empty sequence");
  if (t_out < 1) throw UsageError("sample_frames: target frame count must be >= 1");
  const int t_in = static_cast<int>(seq.frames.size());
  SkeletonSequence out = seq;
  out.frames.clear();
  out.frames.reserve(t_out);
  for (int i = 0; i < t_out; ++i) {
    const int idx = static_cast<int>((static_cast<long long>(i) * t_in) / t_out);
    out.frames.push_back(seq.frames[idx]);
  }
  return out;
}

StreamPair split_streams(const SkeletonSequence& seq, const PartAssignment& parts) {
  parts.validate();
  StreamPair pair;
  pair.head = normalize_part(seq, parts.head);
  pair.upper_body = normalize_part(seq, parts.upper_body);
  return pair;
}

}  // namespace skelact
