#include "skelact/model.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace skelact {

using nlohmann::json;

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::HeadOnly:
      return "head-only";
    case Variant::BodyOnly:
      return "body-only";
    case Variant::Fused:
      return "fused";
    case Variant::FusedAttention:
      return "fused+attention";
  }
  return "fused+attention";
}

Variant variant_from_string(const std::string& s) {
  if (s == "head-only") return Variant::HeadOnly;
  if (s == "body-only") return Variant::BodyOnly;
  if (s == "fused") return Variant::Fused;
  if (s == "fused+attention") return Variant::FusedAttention;
  throw UsageError("unknown variant '" + s +
                   "' (expected head-only, body-only, fused or fused+attention)");
}

std::string cell_to_string(CellKind c) { return c == CellKind::Lstm ? "lstm" : "slstm"; }

CellKind cell_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::Lstm;
  if (s == "slstm") return CellKind::Slstm;
  throw UsageError("unknown cell '" + s + "' (expected lstm or slstm)");
}

std::string forget_to_string(ForgetGate f) {
  return f == ForgetGate::Sigmoid ? "sigmoid" : "exp";
}

ForgetGate forget_from_string(const std::string& s) {
  if (s == "sigmoid") return ForgetGate::Sigmoid;
  if (s == "exp") return ForgetGate::Exponential;
  throw UsageError("unknown forget mode '" + s + "' (expected sigmoid or exp)");
}

void ModelConfig::validate() const {
  if (sampled_frames < 2) throw UsageError("config: sampled frames must be >= 2");
  if (hidden_channels < 1) throw UsageError("config: hidden channels must be >= 1");
  if (scales < 1) throw UsageError("config: scales must be >= 1");
  if (!(fusion_lambda > 0.0)) throw UsageError("config: lambda must be positive");
  if (attention_window < 1) throw UsageError("config: attention window must be >= 1");
  if (cell_hidden < 1) throw UsageError("config: cell hidden size must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("config: learning rate must be positive");
  if (epochs < 1) throw UsageError("config: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("config: batch size must be >= 1");
  if (impute_threshold < 0.0 || impute_threshold > 1.0) {
    throw UsageError("config: imputation threshold must lie in [0, 1]");
  }
  if (threads < 1) throw UsageError("config: threads must be >= 1");
  parts.validate();
}

std::string ModelConfig::to_json_string() const {
  json j;
  j["sampled_frames"] = sampled_frames;
  j["hidden_channels"] = hidden_channels;
  j["scales"] = scales;
  j["lambda"] = fusion_lambda;
  j["attention_window"] = attention_window;
  j["cell_hidden"] = cell_hidden;
  j["cell"] = cell_to_string(cell);
  j["forget"] = forget_to_string(forget);
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["variant"] = variant_to_string(variant);
  j["impute_threshold"] = impute_threshold;
  j["exact_distance_masks"] = exact_distance_masks;
  j["threads"] = threads;
  j["parts"] = {{"head", parts.head}, {"upper_body", parts.upper_body}};
  return j.dump();
}

ModelConfig ModelConfig::from_json_string(const std::string& text) {
  ModelConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.sampled_frames = j.at("sampled_frames").get<int>();
    cfg.hidden_channels = j.at("hidden_channels").get<int>();
    cfg.scales = j.at("scales").get<int>();
    cfg.fusion_lambda = j.at("lambda").get<double>();
    cfg.attention_window = j.at("attention_window").get<int>();
    cfg.cell_hidden = j.at("cell_hidden").get<int>();
    cfg.cell = cell_from_string(j.at("cell").get<std::string>());
    cfg.forget = forget_from_string(j.at("forget").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    cfg.impute_threshold = j.at("impute_threshold").get<double>();
    cfg.exact_distance_masks = j.at("exact_distance_masks").get<bool>();
    cfg.threads = j.at("threads").get<int>();
    cfg.parts.head = j.at("parts").at("head").get<std::vector<int>>();
    cfg.parts.upper_body = j.at("parts").at("upper_body").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config record: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// model structure
// ---------------------------------------------------------------------------

bool TwoStreamModel::has_head_stream() const {
  return config.variant != Variant::BodyOnly;
}

bool TwoStreamModel::has_body_stream() const {
  return config.variant != Variant::HeadOnly;
}

bool TwoStreamModel::has_fusion() const {
  return config.variant == Variant::Fused || config.variant == Variant::FusedAttention;
}

bool TwoStreamModel::has_attention() const {
  return config.variant == Variant::FusedAttention;
}

namespace {

constexpr int kBlockCount = 9;

StreamEncoderParams zero_encoder(int channels, int scale_count) {
  StreamEncoderParams enc;
  enc.input_w = Tensor::zeros({2, channels});
  enc.input_b = Tensor::zeros({1, channels});
  for (int b = 0; b < kBlockCount; ++b) {
    GcnLayerParams block;
    for (int k = 0; k < scale_count; ++k) block.weights.push_back(Tensor::zeros({channels, channels}));
    block.bias = Tensor::zeros({1, channels});
    enc.blocks.push_back(std::move(block));
  }
  enc.output_w = Tensor::zeros({channels, kFeatureDim});
  enc.output_b = Tensor::zeros({1, kFeatureDim});
  return enc;
}

CellParams zero_cell(Index input_dim, Index hidden) {
  CellParams p;
  auto weights = [&](Tensor& wx, Tensor& wh, Tensor& b) {
    wx = Tensor::zeros({input_dim, hidden});
    wh = Tensor::zeros({hidden, hidden});
    b = Tensor::zeros({1, hidden});
  };
  weights(p.w_xi, p.w_hi, p.b_i);
  weights(p.w_xf, p.w_hf, p.b_f);
  weights(p.w_xo, p.w_ho, p.b_o);
  weights(p.w_xc, p.w_hc, p.b_c);
  return p;
}

void append_encoder(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                    StreamEncoderParams& enc) {
  out.emplace_back(prefix + ".in_proj.w", &enc.input_w);
  out.emplace_back(prefix + ".in_proj.b", &enc.input_b);
  for (std::size_t b = 0; b < enc.blocks.size(); ++b) {
    const std::string block = prefix + ".block" + (b < 9 ? "0" : "") + std::to_string(b + 1);
    for (std::size_t k = 0; k < enc.blocks[b].weights.size(); ++k) {
      out.emplace_back(block + ".w" + std::to_string(k + 1), &enc.blocks[b].weights[k]);
    }
    out.emplace_back(block + ".b", &enc.blocks[b].bias);
  }
  out.emplace_back(prefix + ".out_proj.w", &enc.output_w);
  out.emplace_back(prefix + ".out_proj.b", &enc.output_b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> TwoStreamModel::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (has_head_stream()) append_encoder(out, "stream.head", head_encoder);
  if (has_body_stream()) append_encoder(out, "stream.body", body_encoder);
  if (has_fusion()) out.emplace_back("fusion.omega", &fusion.omega);
  out.emplace_back("cell.w_xi", &cell.w_xi);
  out.emplace_back("cell.w_hi", &cell.w_hi);
  out.emplace_back("cell.b_i", &cell.b_i);
  out.emplace_back("cell.w_xf", &cell.w_xf);
  out.emplace_back("cell.w_hf", &cell.w_hf);
  out.emplace_back("cell.b_f", &cell.b_f);
  out.emplace_back("cell.w_xo", &cell.w_xo);
  out.emplace_back("cell.w_ho", &cell.w_ho);
  out.emplace_back("cell.b_o", &cell.b_o);
  out.emplace_back("cell.w_xc", &cell.w_xc);
  out.emplace_back("cell.w_hc", &cell.w_hc);
  out.emplace_back("cell.b_c", &cell.b_c);
  if (has_attention()) {
    out.emplace_back("attention.w", &attention.weight);
    out.emplace_back("attention.b", &attention.bias);
  }
  out.emplace_back("classifier.w", &classifier_w);
  out.emplace_back("classifier.b", &classifier_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> TwoStreamModel::parameters() const {
  auto mutable_view = const_cast<TwoStreamModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, tensor] : mutable_view) out.emplace_back(name, tensor);
  return out;
}

Index TwoStreamModel::parameter_count() const {
  Index total = 0;
  for (const auto& [name, tensor] : parameters()) total += tensor->size();
  return total;
}

TwoStreamModel TwoStreamModel::watched(Tape& tape) const {
  TwoStreamModel copy = *this;
  for (auto& [name, tensor] : copy.parameters()) *tensor = tape.watch(*tensor);
  return copy;
}

TwoStreamModel build_model(const ModelConfig& cfg) {
  cfg.validate();
  TwoStreamModel m;
  m.config = cfg;

  m.head_graph = build_part_graph(cfg.parts.head);
  m.body_graph = build_part_graph(cfg.parts.upper_body);
  m.head_partition = distance_partition(m.head_graph);
  m.body_partition = cfg.exact_distance_masks
                         ? exact_distance_partition(m.body_graph, cfg.scales)
                         : multiscale_partition(m.body_graph, cfg.scales);

  if (m.has_head_stream()) {
    m.head_encoder = zero_encoder(cfg.hidden_channels, m.head_partition.scale_count());
  }
  if (m.has_body_stream()) {
    m.body_encoder = zero_encoder(cfg.hidden_channels, m.body_partition.scale_count());
  }
  if (m.has_fusion()) {
    m.fusion.omega = Tensor::zeros({2, 1});
    m.fusion.reinforcement = cfg.fusion_lambda;
  }
  m.cell = zero_cell(kFeatureDim, cfg.cell_hidden);
  if (m.has_attention()) {
    const Index span = kFeatureDim + cfg.cell_hidden;
    m.attention.weight = Tensor::zeros({cfg.attention_window, span});
    m.attention.bias = Tensor::zeros({cfg.attention_window, span});
    m.attention.window = cfg.attention_window;
  }
  m.classifier_w = Tensor::zeros({cfg.cell_hidden, 2});
  m.classifier_b = Tensor::zeros({1, 2});
  return m;
}

void init_parameters(TwoStreamModel& model, Rng& rng) {
  for (auto& [name, tensor] : model.parameters()) {
    const bool is_bias = name.ends_with(".b") || name.ends_with("b_i") || name.ends_with("b_f") ||
                         name.ends_with("b_o") || name.ends_with("b_c");
    const bool is_omega = name == "fusion.omega";
    if (name == "cell.b_f") {
      // positive forget bias, the usual recurrent-memory starting point
      *tensor = Tensor::constant(tensor->shape(), 1.0);
      continue;
    }
    if (is_bias || is_omega) {
      *tensor = Tensor::zeros(tensor->shape());
      continue;
    }
    const Shape& shape = tensor->shape();
    const double fan_in = static_cast<double>(shape.front());
    const double fan_out = static_cast<double>(shape.back());
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    ArrayXd values(tensor->size());
    for (Index i = 0; i < values.size(); ++i) values[i] = rng.uniform(-bound, bound);
    *tensor = Tensor(shape, std::move(values));
  }
}

StreamPair preprocess(const SkeletonSequence& seq, const ModelConfig& cfg) {
  SkeletonSequence imputed = impute_low_confidence(seq, cfg.impute_threshold);
  SkeletonSequence sampled = sample_frames(imputed, cfg.sampled_frames);
  return split_streams(sampled, cfg.parts);
}

Tensor classify(const Tensor& embedding, const Tensor& w, const Tensor& b) {
  if (!embedding.data().isFinite().all()) {
    throw NumericalError("classify: embedding contains non-finite values");
  }
  return add(matmul(embedding, w), b);
}

Tensor cross_entropy(const Tensor& logits, Label label) {
  if (label == Label::Unlabeled) throw DataError("cross_entropy: session is unlabeled");
  if (logits.size() != 2) {
    throw DimensionError("cross_entropy: expected 2 logits, got shape " +
                         shape_to_string(logits.shape()));
  }
  const Index target = label == Label::Asd ? 0 : 1;
  const double shift = logits.data().maxCoeff();
  Tensor shifted = sub(logits, Tensor::scalar(shift));
  Tensor log_norm = log(sum(exp(shifted)));
  return sub(log_norm, element(shifted, target));
}

Tensor model_logits(const TwoStreamModel& model, const StreamPair& streams) {
  Tensor features;
  switch (model.config.variant) {
    case Variant::HeadOnly:
      features = stream_encode(streams.head, model.head_partition, model.head_encoder);
      break;
    case Variant::BodyOnly:
      features = stream_encode(streams.upper_body, model.body_partition, model.body_encoder);
      break;
    case Variant::Fused:
    case Variant::FusedAttention: {
      Tensor head = stream_encode(streams.head, model.head_partition, model.head_encoder);
      Tensor body = stream_encode(streams.upper_body, model.body_partition, model.body_encoder);
      Tensor alpha = fusion_weights(model.fusion);
      features = fuse({head, body}, alpha);
      break;
    }
  }
  Tensor embedding;
  if (model.has_attention()) {
    embedding = axlstm_forward(features, model.config.cell, model.cell, model.config.forget,
                               model.attention);
  } else {
    embedding = run_cell(features, model.config.cell, model.cell, model.config.forget).back();
  }
  return classify(embedding, model.classifier_w, model.classifier_b);
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'2', 'S', 'G', 'A'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("model file: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("model file: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const ArrayXd& values) {
  for (Index i = 0; i < values.size(); ++i) {
    write_u64(out, std::bit_cast<std::uint64_t>(values[i]));
  }
}

ArrayXd read_doubles(std::istream& in, Index count) {
  ArrayXd values(count);
  for (Index i = 0; i < count; ++i) values[i] = std::bit_cast<double>(read_u64(in));
  return values;
}

struct NamedEntry {
  std::string name;
  Shape shape;
};

// Every serialized entry in file order: parameters first, then the
// partition masks per stream and scale.
std::vector<std::pair<std::string, Tensor>> collect_entries(const TwoStreamModel& model) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (const auto& [name, tensor] : model.parameters()) entries.emplace_back(name, *tensor);
  auto masks = [&entries](const std::string& prefix, const PartitionedGraph& pg) {
    for (int k = 0; k < pg.scale_count(); ++k) {
      entries.emplace_back(prefix + ".k" + std::to_string(k + 1),
                           Tensor::from_matrix(pg.masks[k]));
    }
  };
  if (model.has_head_stream()) masks("mask.head", model.head_partition);
  if (model.has_body_stream()) masks("mask.body", model.body_partition);
  return entries;
}

}  // namespace

void save_model(const TwoStreamModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());

  const auto entries = collect_entries(model);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (Index e : tensor.shape()) write_u64(out, static_cast<std::uint64_t>(e));
  }
  for (const auto& [name, tensor] : entries) write_doubles(out, tensor.data());
  const std::string config_text = model.config.to_json_string();
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  if (!out) throw DataError("write failed for model file " + path.string());
}

namespace {

std::vector<std::pair<std::string, Tensor>> read_entries(std::istream& in,
                                                         const std::string& path_text,
                                                         std::string* config_text) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("model file " + path_text + ": bad magic bytes (version error)");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw DataError("model file " + path_text + ": unsupported version " +
                    std::to_string(version) + " (expected " + std::to_string(kFormatVersion) + ")");
  }
  const std::uint32_t count = read_u32(in);
  std::vector<NamedEntry> manifest;
  manifest.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedEntry e;
    const std::uint32_t name_len = read_u32(in);
    e.name.resize(name_len);
    if (!in.read(e.name.data(), name_len)) throw DataError("model file: truncated");
    const std::uint32_t rank = read_u32(in);
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.shape.push_back(static_cast<Index>(read_u64(in)));
    }
    manifest.push_back(std::move(e));
  }
  std::vector<std::pair<std::string, Tensor>> entries;
  entries.reserve(count);
  for (const NamedEntry& e : manifest) {
    ArrayXd values = read_doubles(in, shape_size(e.shape));
    entries.emplace_back(e.name, Tensor(e.shape, std::move(values)));
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  *config_text = rest.str();
  return entries;
}

}  // namespace

TwoStreamModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::string config_text;
  auto entries = read_entries(in, path.string(), &config_text);
  if (config_text.empty()) throw DataError("model file " + path.string() + ": truncated");

  const ModelConfig cfg = ModelConfig::from_json_string(config_text);
  TwoStreamModel model = build_model(cfg);

  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : entries) {
    if (!by_name.emplace(name, tensor).second) {
      throw DataError("model file " + path.string() + ": duplicate entry " + name);
    }
  }
  for (auto& [name, tensor] : model.parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw DataError("model file " + path.string() + ": missing parameter " + name);
    }
    if (it->second.shape() != tensor->shape()) {
      throw DataError("model file " + path.string() + ": parameter " + name + " has shape " +
                      shape_to_string(it->second.shape()) + ", expected " +
                      shape_to_string(tensor->shape()));
    }
    *tensor = it->second;
    by_name.erase(it);
  }
  auto load_masks = [&](const std::string& prefix, PartitionedGraph& pg) {
    for (int k = 0; k < pg.scale_count(); ++k) {
      const std::string name = prefix + ".k" + std::to_string(k + 1);
      auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw DataError("model file " + path.string() + ": missing mask " + name);
      }
      const Tensor& t = it->second;
      if (t.rows() != pg.node_count || t.cols() != pg.node_count) {
        throw DataError("model file " + path.string() + ": mask " + name + " has shape " +
                        shape_to_string(t.shape()));
      }
      pg.masks[k] = Eigen::MatrixXd(t.matrix());
      by_name.erase(it);
    }
  };
  if (model.has_head_stream()) load_masks("mask.head", model.head_partition);
  if (model.has_body_stream()) load_masks("mask.body", model.body_partition);
  if (!by_name.empty()) {
    throw DataError("model file " + path.string() + ": unexpected entry " +
                    by_name.begin()->first);
  }
  return model;
}

std::string inspect_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::string config_text;
  const auto entries = read_entries(in, path.string(), &config_text);

  std::ostringstream out;
  out << "model file: " << path.string() << "\n";
  out << "entries: " << entries.size() << "\n";
  Index total = 0;
  for (const auto& [name, tensor] : entries) {
    out << "  " << name << "  " << shape_to_string(tensor.shape()) << "\n";
    total += tensor.size();
  }
  out << "total values: " << total << "\n";
  out << "config: " << config_text << "\n";
  return out.str();
}

}  // namespace skelact
