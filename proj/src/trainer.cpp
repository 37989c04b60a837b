#include "skelact/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace skelact {

using nlohmann::json;

Metrics Metrics::from_confusion(long asd_as_asd, long asd_as_td, long td_as_asd, long td_as_td) {
  Metrics m;
  m.confusion = {{{asd_as_asd, asd_as_td}, {td_as_asd, td_as_td}}};
  const long total = asd_as_asd + asd_as_td + td_as_asd + td_as_td;
  if (total <= 0) throw DataError("metrics: empty confusion matrix");
  m.accuracy = static_cast<double>(asd_as_asd + td_as_td) / static_cast<double>(total);
  const long asd_total = asd_as_asd + asd_as_td;
  const long td_total = td_as_asd + td_as_td;
  if (asd_total == 0 || td_total == 0) {
    throw DataError("metrics: UAR needs at least one session of each class");
  }
  const double asd_recall = static_cast<double>(asd_as_asd) / static_cast<double>(asd_total);
  const double td_recall = static_cast<double>(td_as_td) / static_cast<double>(td_total);
  m.uar = 0.5 * (asd_recall + td_recall);
  return m;
}

std::string Metrics::to_json_string() const {
  json j;
  j["confusion"] = {{confusion[0][0], confusion[0][1]}, {confusion[1][0], confusion[1][1]}};
  j["accuracy"] = accuracy;
  j["uar"] = uar;
  return j.dump();
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(double lr, std::size_t param_count)
      : lr_(lr), first_(param_count), second_(param_count) {}

  void update(std::vector<std::pair<std::string, Tensor*>>& params,
              const std::vector<ArrayXd>& grads) {
    ++step_;
    const double correction1 = 1.0 - std::pow(kBeta1, step_);
    const double correction2 = 1.0 - std::pow(kBeta2, step_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& value = *params[i].second;
      if (first_[i].size() == 0) {
        first_[i] = ArrayXd::Zero(value.size());
        second_[i] = ArrayXd::Zero(value.size());
      }
      first_[i] = kBeta1 * first_[i] + (1.0 - kBeta1) * grads[i];
      second_[i] = kBeta2 * second_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      const ArrayXd m_hat = first_[i] / correction1;
      const ArrayXd v_hat = second_[i] / correction2;
      ArrayXd updated = value.data() - lr_ * m_hat / (v_hat.sqrt() + kEps);
      value = Tensor(value.shape(), std::move(updated));
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int step_ = 0;
  std::vector<ArrayXd> first_, second_;
};

int predicted_class(const Tensor& logits) {
  return logits.at_flat(0) >= logits.at_flat(1) ? 0 : 1;
}

int label_index(Label label) { return label == Label::Asd ? 0 : 1; }

}  // namespace

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainResult train(const std::vector<SkeletonSequence>& data, const ModelConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty dataset");
  bool has_asd = false, has_td = false;
  for (const SkeletonSequence& seq : data) {
    if (seq.label == Label::Unlabeled) {
      throw DataError("train: session " + seq.session_id + " is unlabeled");
    }
    (seq.label == Label::Asd ? has_asd : has_td) = true;
  }
  if (!has_asd || !has_td) {
    throw DataError("train: dataset must contain both ASD and TD sessions");
  }

  Rng rng(cfg.seed);
  TwoStreamModel model = build_model(cfg);
  init_parameters(model, rng);

  std::vector<StreamPair> inputs;
  inputs.reserve(data.size());
  for (const SkeletonSequence& seq : data) inputs.push_back(preprocess(seq, cfg));

  const int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Adam adam(cfg.learning_rate, model.parameters().size());
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    long correct = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int batch_end = std::min(n, start + cfg.batch_size);
      Tape tape;
      TwoStreamModel watched = model.watched(tape);
      Tensor batch_loss;
      for (int b = start; b < batch_end; ++b) {
        const int idx = order[b];
        Tensor logits = model_logits(watched, inputs[idx]);
        if (predicted_class(logits) == label_index(data[idx].label)) ++correct;
        Tensor loss = cross_entropy(logits, data[idx].label);
        loss_sum += loss.value();
        batch_loss = b == start ? loss : add(batch_loss, loss);
      }
      Tensor mean_loss =
          mul(batch_loss, Tensor::scalar(1.0 / static_cast<double>(batch_end - start)));
      if (!std::isfinite(mean_loss.value())) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      GradientMap grads = tape.backward(mean_loss);

      auto watched_params = watched.parameters();
      auto model_params = model.parameters();
      std::vector<ArrayXd> flat_grads;
      flat_grads.reserve(model_params.size());
      for (auto& [name, tensor] : watched_params) flat_grads.push_back(grads.at(*tensor).data());
      adam.update(model_params, flat_grads);
    }
    result.history.push_back(EpochStats{loss_sum / static_cast<double>(n),
                                        static_cast<double>(correct) / static_cast<double>(n)});
  }
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

Metrics evaluate(const TwoStreamModel& model, const std::vector<SkeletonSequence>& data,
                 int threads) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  for (const SkeletonSequence& seq : data) {
    if (seq.label == Label::Unlabeled) {
      throw DataError("evaluate: session " + seq.session_id + " is unlabeled");
    }
  }
  const int n = static_cast<int>(data.size());
  std::vector<int> predictions(n, -1);
  auto worker = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      StreamPair streams = preprocess(data[i], model.config);
      predictions[i] = predicted_class(model_logits(model, streams));
    }
  };
  if (threads <= 1) {
    worker(0, n);
  } else {
    const int used = std::min(threads, n);
    std::vector<std::thread> pool;
    const int chunk = (n + used - 1) / used;
    for (int t = 0; t < used; ++t) {
      pool.emplace_back(worker, t * chunk, std::min(n, (t + 1) * chunk));
    }
    for (std::thread& t : pool) t.join();
  }

  long counts[2][2] = {{0, 0}, {0, 0}};
  for (int i = 0; i < n; ++i) ++counts[label_index(data[i].label)][predictions[i]];
  return Metrics::from_confusion(counts[0][0], counts[0][1], counts[1][0], counts[1][1]);
}

SplitIndices stratified_split(const std::vector<Label>& labels, double test_fraction, Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("stratified_split: test fraction must lie in (0, 1)");
  }
  SplitIndices split;
  for (Label cls : {Label::Asd, Label::Td}) {
    std::vector<int> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(static_cast<int>(i));
    }
    if (members.empty()) throw DataError("stratified_split: a class has no sessions");
    rng.shuffle(members);
    const int n_test = std::max(
        1, static_cast<int>(std::lround(test_fraction * static_cast<double>(members.size()))));
    if (n_test >= static_cast<int>(members.size())) {
      throw DataError("stratified_split: class too small for the requested split");
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < static_cast<std::size_t>(n_test) ? split.test : split.train).push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

namespace {

std::vector<SkeletonSequence> select(const std::vector<SkeletonSequence>& data,
                                     const std::vector<int>& indices) {
  std::vector<SkeletonSequence> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(data[i]);
  return out;
}

}  // namespace

double AblationReport::mean_accuracy(Variant v, CellKind c) const {
  double sum = 0.0;
  int count = 0;
  for (const AblationRow& row : rows) {
    if (row.variant == v && row.cell == c) {
      sum += row.metrics.accuracy;
      ++count;
    }
  }
  if (count == 0) throw DataError("ablation report: no rows for the requested combination");
  return sum / count;
}

double AblationReport::mean_uar(Variant v, CellKind c) const {
  double sum = 0.0;
  int count = 0;
  for (const AblationRow& row : rows) {
    if (row.variant == v && row.cell == c) {
      sum += row.metrics.uar;
      ++count;
    }
  }
  if (count == 0) throw DataError("ablation report: no rows for the requested combination");
  return sum / count;
}

std::string AblationReport::to_json_string() const {
  json j;
  j["rows"] = json::array();
  for (const AblationRow& row : rows) {
    json r;
    r["variant"] = variant_to_string(row.variant);
    r["cell"] = cell_to_string(row.cell);
    r["seed"] = row.seed;
    r["accuracy"] = row.metrics.accuracy;
    r["uar"] = row.metrics.uar;
    r["confusion"] = {{row.metrics.confusion[0][0], row.metrics.confusion[0][1]},
                      {row.metrics.confusion[1][0], row.metrics.confusion[1][1]}};
    j["rows"].push_back(r);
  }
  json means = json::array();
  std::vector<std::pair<Variant, CellKind>> combos;
  for (const AblationRow& row : rows) {
    const auto combo = std::make_pair(row.variant, row.cell);
    if (std::find(combos.begin(), combos.end(), combo) == combos.end()) combos.push_back(combo);
  }
  for (auto [v, c] : combos) {
    json m;
    m["variant"] = variant_to_string(v);
    m["cell"] = cell_to_string(c);
    m["mean_accuracy"] = mean_accuracy(v, c);
    m["mean_uar"] = mean_uar(v, c);
    means.push_back(m);
  }
  j["means"] = means;
  return j.dump(2);
}

std::string AblationReport::to_table() const {
  std::ostringstream out;
  out << std::left << std::setw(18) << "variant" << std::setw(8) << "cell" << std::setw(8)
      << "seed" << std::setw(10) << "accuracy" << "uar\n";
  for (const AblationRow& row : rows) {
    out << std::left << std::setw(18) << variant_to_string(row.variant) << std::setw(8)
        << cell_to_string(row.cell) << std::setw(8) << row.seed << std::setw(10) << std::fixed
        << std::setprecision(4) << row.metrics.accuracy << std::fixed << std::setprecision(4)
        << row.metrics.uar << "\n";
  }
  return out.str();
}

AblationReport ablate(const std::vector<SkeletonSequence>& data, const ModelConfig& base,
                      const std::vector<Variant>& variants, const std::vector<CellKind>& cells,
                      const std::vector<std::uint64_t>& seeds) {
  if (variants.empty() || cells.empty() || seeds.empty()) {
    throw UsageError("ablate: needs at least one variant, one cell and one seed");
  }
  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const SkeletonSequence& seq : data) labels.push_back(seq.label);

  AblationReport report;
  for (std::uint64_t seed : seeds) {
    Rng split_rng(derive_seed(seed, 0));
    const SplitIndices split = stratified_split(labels, 0.2, split_rng);
    const auto train_set = select(data, split.train);
    const auto test_set = select(data, split.test);
    for (CellKind cell : cells) {
      for (Variant variant : variants) {
        ModelConfig cfg = base;
        cfg.seed = seed;
        cfg.cell = cell;
        cfg.variant = variant;
        TrainResult trained = train(train_set, cfg);
        AblationRow row;
        row.variant = variant;
        row.cell = cell;
        row.seed = seed;
        row.metrics = evaluate(trained.model, test_set, cfg.threads);
        report.rows.push_back(row);
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// whole-model gradient check
// ---------------------------------------------------------------------------

double gradcheck_full_model(std::uint64_t seed, double eps) {
  ModelConfig cfg;
  cfg.sampled_frames = 12;
  cfg.hidden_channels = 8;
  cfg.cell_hidden = 8;
  cfg.scales = 2;
  cfg.attention_window = 4;
  cfg.variant = Variant::FusedAttention;
  cfg.cell = CellKind::Slstm;
  // Two five-node stream graphs: the head chain and a connected arm/torso
  // subset.
  cfg.parts.head = {0, 1, 2, 3, 4};
  cfg.parts.upper_body = {5, 6, 7, 9, 11};

  Rng rng(seed);
  TwoStreamModel model = build_model(cfg);
  init_parameters(model, rng);

  // Random normalized-scale inputs, bounded to keep the check well posed.
  auto random_coords = [&](int nodes) {
    ArrayXd values(cfg.sampled_frames * nodes * 2);
    for (Index i = 0; i < values.size(); ++i) values[i] = rng.uniform(-1.5, 1.5);
    return Tensor({cfg.sampled_frames, nodes, 2}, std::move(values));
  };
  StreamPair streams;
  streams.head = random_coords(5);
  streams.upper_body = random_coords(5);
  const Label target = Label::Asd;

  auto params = model.parameters();
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (auto& [name, tensor] : params) values.push_back(*tensor);

  auto loss_fn = [&model, &streams, target](const std::vector<Tensor>& p) {
    TwoStreamModel probe = model;
    auto probe_params = probe.parameters();
    for (std::size_t i = 0; i < probe_params.size(); ++i) *probe_params[i].second = p[i];
    Tensor logits = model_logits(probe, streams);
    return cross_entropy(logits, target);
  };
  return finite_diff_check(loss_fn, values, eps);
}

}  // namespace skelact
