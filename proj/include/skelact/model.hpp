#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "skelact/axlstm.hpp"
#include "skelact/fusion.hpp"
#include "skelact/gcn.hpp"
#include "skelact/graph.hpp"
#include "skelact/rng.hpp"
#include "skelact/skeleton.hpp"

namespace skelact {

// Per-frame feature width produced by each stream encoder and consumed by
// fusion and the recurrent cell.
inline constexpr Index kFeatureDim = 256;

enum class Variant { HeadOnly, BodyOnly, Fused, FusedAttention };

std::string variant_to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string cell_to_string(CellKind c);
CellKind cell_from_string(const std::string& s);
std::string forget_to_string(ForgetGate f);
ForgetGate forget_from_string(const std::string& s);

struct ModelConfig {
  int sampled_frames = 64;      // frames fed to the encoders
  int hidden_channels = 64;     // GCN channel width
  int scales = 3;               // multi-scale partition K for the body stream
  double fusion_lambda = 1.0;   // reinforcement factor
  int attention_window = 16;
  int cell_hidden = 64;         // recurrent hidden size n
  CellKind cell = CellKind::Slstm;
  ForgetGate forget = ForgetGate::Sigmoid;
  double learning_rate = 1e-3;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 1;
  Variant variant = Variant::FusedAttention;
  double impute_threshold = 0.3;
  bool exact_distance_masks = false;  // body stream: exact-hop masks instead of clamped powers
  int threads = 1;
  PartAssignment parts = PartAssignment::defaults();

  void validate() const;
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);
};

struct TwoStreamModel {
  ModelConfig config;

  JointGraph head_graph, body_graph;
  PartitionedGraph head_partition, body_partition;

  StreamEncoderParams head_encoder, body_encoder;  // populated per variant
  FusionParams fusion;
  CellParams cell;
  AttentionParams attention;
  Tensor classifier_w, classifier_b;

  bool has_head_stream() const;
  bool has_body_stream() const;
  bool has_fusion() const;
  bool has_attention() const;

  // Named parameters in a fixed order (initialization, optimization and
  // serialization all follow it).
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  Index parameter_count() const;

  // Copy whose parameters are watched leaves of `tape`.
  TwoStreamModel watched(Tape& tape) const;
};

// Structure with zero parameters, graphs and masks in place.
TwoStreamModel build_model(const ModelConfig& cfg);
// Glorot-uniform weights, zero biases, zero fusion omega.
void init_parameters(TwoStreamModel& model, Rng& rng);

// Preprocessing pipeline: confidence imputation, uniform resampling to the
// configured frame count, per-part normalization.
StreamPair preprocess(const SkeletonSequence& seq, const ModelConfig& cfg);

// Affine map from an embedding to the two class logits (ASD, TD).
Tensor classify(const Tensor& embedding, const Tensor& w, const Tensor& b);

// Log-sum-exp stabilized negative log likelihood; label must be ASD or TD.
Tensor cross_entropy(const Tensor& logits, Label label);

Tensor model_logits(const TwoStreamModel& model, const StreamPair& streams);

// Model container: magic "2SGA", version, named-tensor manifest and data,
// then the config as a trailing UTF-8 record. Byte-stable for identical
// models.
void save_model(const TwoStreamModel& model, const std::filesystem::path& path);
TwoStreamModel load_model(const std::filesystem::path& path);

// Human-readable manifest: every named entry with its shape plus the config.
std::string inspect_model(const std::filesystem::path& path);

}  // namespace skelact
