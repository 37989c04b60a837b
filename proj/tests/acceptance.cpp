// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavier end-to-end checks than the unit suites; expect a
// few minutes of runtime dominated by the ablation criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "naive_recurrence.hpp"
#include "skelact/cli.hpp"
#include "skelact/fusion.hpp"
#include "skelact/gcn.hpp"
#include "skelact/synth.hpp"
#include "skelact/trainer.hpp"

using namespace skelact;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  ArrayXd d(shape_size(shape));
  for (Index i = 0; i < d.size(); ++i) d[i] = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(d));
}

JointGraph random_connected(int n, Rng& rng) {
  JointGraph g;
  g.node_count = n;
  for (int v = 1; v < n; ++v) {
    const int u = static_cast<int>(rng.uniform_int(0, v - 1));
    g.edges.emplace_back(std::min(u, v), std::max(u, v));
  }
  const int extras = static_cast<int>(rng.uniform_int(0, n));
  for (int e = 0; e < extras; ++e) {
    const int a = static_cast<int>(rng.uniform_int(0, n - 1));
    const int b = static_cast<int>(rng.uniform_int(0, n - 1));
    if (a != b) g.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

// Reduced-dimension configuration for the training criteria: small enough to
// fit the runtime budgets, wired exactly like the full model.
ModelConfig acceptance_config() {
  ModelConfig cfg;
  cfg.sampled_frames = 32;
  cfg.hidden_channels = 16;
  cfg.cell_hidden = 16;
  cfg.scales = 3;
  cfg.attention_window = 8;
  cfg.batch_size = 8;
  cfg.learning_rate = 2e-3;
  cfg.epochs = 30;
  cfg.variant = Variant::FusedAttention;
  cfg.cell = CellKind::Slstm;
  return cfg;
}

// --------------------------------------------------------------------------

void criterion_1_gradient_integrity() {
  const auto start = Clock::now();
  double err = 1.0;
  std::string detail;
  bool ok = false;
  try {
    err = gradcheck_full_model(7, 1e-5);
    const double elapsed = seconds_since(start);
    ok = err <= 1e-4 && elapsed < 60.0;
    std::ostringstream text;
    text << "max relative error " << err << ", " << elapsed << " s";
    detail = text.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }
  report(1, "gradient integrity of the full fused+attention model", ok, detail);
}

void criterion_2_graph_conv_equivalence() {
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 4));  // up to 6 nodes
    const JointGraph g = random_connected(n, rng);
    const PartitionedGraph pg = distance_partition(g);
    const Index c_in = 3, c_out = 4;
    GcnLayerParams p;
    p.weights = {random_tensor({c_in, c_out}, rng), random_tensor({c_in, c_out}, rng)};
    p.bias = Tensor::zeros({1, c_out});
    Tensor x = random_tensor({1, n, c_in}, rng);
    const Tensor y = gcn_layer(x, pg, p);

    Eigen::MatrixXd frame(n, c_in);
    for (int i = 0; i < n; ++i) {
      for (Index c = 0; c < c_in; ++c) frame(i, c) = x.at_flat(i * c_in + c);
    }
    const Eigen::MatrixXd oracle = node_aggregation_oracle(
        frame, g, {Eigen::MatrixXd(p.weights[0].matrix()), Eigen::MatrixXd(p.weights[1].matrix())});
    for (int i = 0; i < n; ++i) {
      for (Index c = 0; c < c_out; ++c) {
        worst = std::max(worst,
                         std::abs(y.at_flat(i * c_out + c) - std::max(0.0, oracle(i, c))));
      }
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream text;
  text << "max abs diff " << worst << " over 100 graphs, " << elapsed << " s";
  report(2, "matrix-form vs node-wise graph convolution", worst <= 1e-10 && elapsed < 10.0,
         text.str());
}

void criterion_3_partition_correctness() {
  bool ok = true;
  std::ostringstream detail;
  const PartAssignment parts = PartAssignment::defaults();
  for (const auto& [name, subset] :
       {std::pair<std::string, std::vector<int>>{"head", parts.head},
        std::pair<std::string, std::vector<int>>{"body", parts.upper_body}}) {
    const JointGraph g = build_part_graph(subset);
    const int n = g.node_count;

    // distance strategy
    const PartitionedGraph dist_pg = distance_partition(g);
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    if (!dist_pg.raw_masks[0].isApprox(identity, 0.0)) ok = false;
    const Eigen::MatrixXd sum = dist_pg.raw_masks[0] + dist_pg.raw_masks[1];
    if ((sum - (g.adjacency() + identity)).cwiseAbs().maxCoeff() != 0.0) ok = false;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = 0; j < n; ++j) {
        if (dist_pg.raw_masks[0](i, j) != 0.0 && dist_pg.raw_masks[1](i, j) != 0.0) ok = false;
      }
    }

    // multi-scale strategy against BFS reachability
    const Eigen::MatrixXi hops = shortest_paths(g);
    const PartitionedGraph multi_pg = multiscale_partition(g, 3);
    for (int k = 1; k <= 3 && ok; ++k) {
      const Eigen::MatrixXd& mask = multi_pg.masks[k - 1];
      if (mask.minCoeff() < 0.0 || mask.maxCoeff() > 1.0) ok = false;
      if ((mask - mask.transpose()).cwiseAbs().maxCoeff() > 1e-14) ok = false;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if ((mask(i, j) > 0.0) != (hops(i, j) <= k)) ok = false;
        }
      }
    }
    detail << name << " n=" << n << " ";
  }
  report(3, "distance and multi-scale partition masks", ok, detail.str() + "checked");
}

void criterion_4_fusion_constraints() {
  Rng rng(404);
  bool ok = true;
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    FusionParams fp;
    fp.reinforcement = rng.uniform(1e-6, 10.0);
    // keep lambda * |w0 - w1| below the double-precision saturation point
    // so the strict (0, 1) bounds stay meaningful
    fp.omega = random_tensor({2, 1}, rng, 1.7);
    const Tensor alpha = fusion_weights(fp);
    const double total = alpha.at_flat(0) + alpha.at_flat(1);
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    for (Index i = 0; i < 2; ++i) {
      if (!(alpha.at_flat(i) > 0.0 && alpha.at_flat(i) < 1.0)) ok = false;
    }
    const double shift = rng.uniform(-10.0, 10.0);
    FusionParams shifted = fp;
    shifted.omega = Tensor({2, 1}, ArrayXd(fp.omega.data() + shift));
    const Tensor alpha2 = fusion_weights(shifted);
    worst_shift = std::max({worst_shift, std::abs(alpha.at_flat(0) - alpha2.at_flat(0)),
                            std::abs(alpha.at_flat(1) - alpha2.at_flat(1))});
  }
  FusionParams zero;
  zero.reinforcement = 3.0;
  zero.omega = Tensor::zeros({2, 1});
  const Tensor uniform = fusion_weights(zero);
  if (uniform.at_flat(0) != 0.5 || uniform.at_flat(1) != 0.5) ok = false;
  ok = ok && worst_sum <= 1e-12 && worst_shift <= 1e-12;
  std::ostringstream text;
  text << "max |sum-1| " << worst_sum << ", max shift drift " << worst_shift;
  report(4, "fusion weight constraints over 1000 draws", ok, text.str());
}

void criterion_5_slstm_numerics() {
  Rng rng(505);
  bool ok = true;
  double worst = 0.0;
  const int hidden = 4, input = 3;
  for (int rollout = 0; rollout < 1000 && ok; ++rollout) {
    CellParams p;
    auto set = [&](Tensor& wx, Tensor& wh, Tensor& b) {
      wx = random_tensor({input, hidden}, rng, 0.45);
      wh = random_tensor({hidden, hidden}, rng, 0.45);
      b = random_tensor({1, hidden}, rng, 0.3);
    };
    set(p.w_xi, p.w_hi, p.b_i);
    set(p.w_xf, p.w_hf, p.b_f);
    set(p.w_xo, p.w_ho, p.b_o);
    set(p.w_xc, p.w_hc, p.b_c);
    skelact_test::NaiveGates gates;
    gates.input = input;
    gates.hidden = hidden;
    gates.w_xi = p.w_xi.data(); gates.w_hi = p.w_hi.data(); gates.b_i = p.b_i.data();
    gates.w_xf = p.w_xf.data(); gates.w_hf = p.w_hf.data(); gates.b_f = p.b_f.data();
    gates.w_xo = p.w_xo.data(); gates.w_ho = p.w_ho.data(); gates.b_o = p.b_o.data();
    gates.w_xc = p.w_xc.data(); gates.w_hc = p.w_hc.data(); gates.b_c = p.b_c.data();

    const ForgetGate forget = rollout % 2 == 0 ? ForgetGate::Sigmoid : ForgetGate::Exponential;
    SLstmState s = SLstmState::initial(hidden);
    skelact_test::NaiveSlstmState ns{ArrayXd::Zero(hidden), ArrayXd::Zero(hidden),
                                     ArrayXd::Zero(hidden)};
    for (int t = 0; t < 64; ++t) {
      const Tensor x = random_tensor({1, input}, rng, 1.0);
      s = slstm_step(x, s, p, forget, t);
      ns = skelact_test::naive_slstm_step(x.data(), ns, gates, forget == ForgetGate::Sigmoid);
      for (Index i = 0; i < hidden; ++i) {
        if (!(s.normalizer.at_flat(i) > 0.0)) ok = false;
        if (std::isfinite(ns.h[i]) && std::isfinite(ns.n[i]) && ns.n[i] > 1e-300) {
          worst = std::max(worst, std::abs(s.hidden.at_flat(i) - ns.h[i]));
        }
      }
    }
  }
  if (worst > 1e-6) ok = false;

  // attention weights on random inputs
  double worst_alpha = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 2 + static_cast<int>(rng.uniform_int(0, 6));
    AttentionParams ap;
    ap.window = w;
    ap.weight = random_tensor({w, input + hidden}, rng, 2.0);
    ap.bias = random_tensor({w, input + hidden}, rng, 2.0);
    std::vector<Tensor> states;
    for (int i = 0; i < w; ++i) states.push_back(random_tensor({1, hidden}, rng, 2.0));
    const AttentionResult res = attention_pool(states, ap, random_tensor({1, input}, rng, 2.0),
                                               random_tensor({1, hidden}, rng, 2.0));
    worst_alpha = std::max(worst_alpha, std::abs(res.alpha.data().sum() - 1.0));
  }
  if (worst_alpha > 1e-12) ok = false;

  std::ostringstream text;
  text << "max |stabilized - naive| " << worst << ", max |sum(alpha)-1| " << worst_alpha;
  report(5, "sLSTM normalizer positivity and stabilizer transparency", ok, text.str());
}

std::vector<SkeletonSequence> synth_in_memory(int n_asd, int n_td, double separation,
                                              std::uint64_t master) {
  GeneratorSpec spec;
  spec.n_asd = n_asd;
  spec.n_td = n_td;
  spec.separation = separation;
  spec.master_seed = master;
  std::vector<SkeletonSequence> out;
  for (int i = 0; i < n_asd + n_td; ++i) {
    const Label label = i < n_asd ? Label::Asd : Label::Td;
    out.push_back(
        generate_session(label, spec, derive_seed(master, i), "acc" + std::to_string(i)));
  }
  return out;
}

void criterion_6_overfit() {
  const auto start = Clock::now();
  bool ok = false;
  std::string detail;
  try {
    const auto data = synth_in_memory(16, 16, 1.0, 606);
    ModelConfig cfg = acceptance_config();
    cfg.epochs = 50;
    cfg.seed = 1;
    const TrainResult result = train(data, cfg);
    double best = 0.0;
    for (const EpochStats& e : result.history) best = std::max(best, e.train_accuracy);
    const Metrics final_metrics = evaluate(result.model, data);
    best = std::max(best, final_metrics.accuracy);
    const double elapsed = seconds_since(start);
    ok = best >= 0.95 && elapsed < 300.0;
    std::ostringstream text;
    text << "best training accuracy " << best << ", " << elapsed << " s";
    detail = text.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }
  report(6, "overfit sanity on 32 fully separated sessions", ok, detail);
}

struct SeparabilityOutcome {
  AblationReport slstm_report;
  std::vector<SkeletonSequence> dataset;
};

SeparabilityOutcome criterion_7_separability() {
  const auto start = Clock::now();
  SeparabilityOutcome outcome;
  bool ok = false;
  std::string detail;
  try {
    outcome.dataset = synth_in_memory(40, 89, 0.8, 707);
    const ModelConfig cfg = acceptance_config();
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    outcome.slstm_report = ablate(
        outcome.dataset, cfg,
        {Variant::HeadOnly, Variant::BodyOnly, Variant::Fused, Variant::FusedAttention},
        {CellKind::Slstm}, seeds);
    const double head = outcome.slstm_report.mean_accuracy(Variant::HeadOnly, CellKind::Slstm);
    const double body = outcome.slstm_report.mean_accuracy(Variant::BodyOnly, CellKind::Slstm);
    const double fused = outcome.slstm_report.mean_accuracy(Variant::Fused, CellKind::Slstm);
    const double full = outcome.slstm_report.mean_accuracy(Variant::FusedAttention, CellKind::Slstm);
    const double elapsed = seconds_since(start);
    const bool ordering = head <= fused && body <= fused && fused <= full + 0.02;
    ok = full >= 0.85 && ordering && elapsed < 1800.0;
    std::ostringstream text;
    text << "means: head " << head << ", body " << body << ", fused " << fused
         << ", fused+attention " << full << ", " << elapsed << " s";
    detail = text.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }
  report(7, "synthetic separability analogue with variant ordering", ok, detail);
  return outcome;
}

void criterion_8_cell_variants(const SeparabilityOutcome& outcome) {
  bool ok = false;
  std::string detail;
  try {
    const ModelConfig cfg = acceptance_config();
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    const AblationReport lstm_report =
        ablate(outcome.dataset, cfg, {Variant::FusedAttention}, {CellKind::Lstm}, seeds);

    AblationReport combined;
    for (const AblationRow& row : outcome.slstm_report.rows) {
      if (row.variant == Variant::FusedAttention) combined.rows.push_back(row);
    }
    for (const AblationRow& row : lstm_report.rows) combined.rows.push_back(row);

    const auto report_path =
        std::filesystem::temp_directory_path() / "skelact_acceptance" / "cell_report.json";
    std::filesystem::create_directories(report_path.parent_path());
    std::ofstream out(report_path);
    out << combined.to_json_string() << "\n";
    out.close();

    const std::string text_bytes = file_bytes(report_path);
    const bool has_rows = text_bytes.find("\"cell\": \"lstm\"") != std::string::npos &&
                          text_bytes.find("\"cell\": \"slstm\"") != std::string::npos;
    const double slstm_mean = combined.mean_accuracy(Variant::FusedAttention, CellKind::Slstm);
    const double lstm_mean = combined.mean_accuracy(Variant::FusedAttention, CellKind::Lstm);
    ok = has_rows && slstm_mean >= lstm_mean - 0.02;
    std::ostringstream text;
    text << "sLSTM mean " << slstm_mean << " vs LSTM mean " << lstm_mean << ", report "
         << report_path.string();
    detail = text.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }
  report(8, "cell-variant harness (ALSTM vs AxLSTM rows)", ok, detail);
}

void criterion_9_determinism() {
  bool ok = false;
  std::string detail;
  try {
    const auto dir = std::filesystem::temp_directory_path() / "skelact_acceptance" / "determinism";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    GeneratorSpec spec;
    spec.n_asd = 4;
    spec.n_td = 4;
    spec.master_seed = 909;
    spec.separation = 1.0;
    generate_dataset(spec, dir);

    // session files round-trip byte-stably
    bool files_stable = true;
    std::vector<SkeletonSequence> data;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().filename() == "manifest.jsonl") continue;
      const std::string original = file_bytes(entry.path());
      std::istringstream in(original);
      const SkeletonSequence seq = parse_session(in);
      std::ostringstream rewritten;
      write_session(seq, rewritten);
      if (rewritten.str() != original) files_stable = false;
      data.push_back(seq);
    }
    std::sort(data.begin(), data.end(), [](const auto& a, const auto& b) {
      return a.session_id < b.session_id;
    });

    ModelConfig cfg = acceptance_config();
    cfg.sampled_frames = 16;
    cfg.hidden_channels = 8;
    cfg.cell_hidden = 8;
    cfg.attention_window = 4;
    cfg.epochs = 2;
    cfg.seed = 77;

    const TrainResult first = train(data, cfg);
    const TrainResult second = train(data, cfg);
    const auto model_a = dir / "a.model";
    const auto model_b = dir / "b.model";
    save_model(first.model, model_a);
    save_model(second.model, model_b);
    const bool model_bytes_equal = file_bytes(model_a) == file_bytes(model_b);

    const TwoStreamModel loaded = load_model(model_a);
    bool forwards_equal = true;
    for (const SkeletonSequence& seq : data) {
      const StreamPair streams = preprocess(seq, cfg);
      const Tensor before = model_logits(first.model, streams);
      const Tensor after = model_logits(loaded, streams);
      if (before.at_flat(0) != after.at_flat(0) || before.at_flat(1) != after.at_flat(1)) {
        forwards_equal = false;
      }
    }
    ok = files_stable && model_bytes_equal && forwards_equal;
    std::ostringstream text;
    text << "sessions byte-stable: " << files_stable << ", model bytes equal: "
         << model_bytes_equal << ", reloaded forwards equal: " << forwards_equal;
    detail = text.str();
  } catch (const std::exception& e) {
    detail = e.what();
  }
  report(9, "determinism and serialization", ok, detail);
}

void criterion_10_metric_definitions() {
  bool ok = true;
  const Metrics perfect = Metrics::from_confusion(13, 0, 0, 29);
  if (perfect.accuracy != 1.0 || perfect.uar != 1.0) ok = false;
  const Metrics mixed = Metrics::from_confusion(8, 2, 1, 9);
  if (std::abs(mixed.accuracy - 0.85) > 1e-15 || std::abs(mixed.uar - 0.85) > 1e-15) ok = false;
  const Metrics degenerate = Metrics::from_confusion(10, 0, 10, 0);
  if (degenerate.accuracy != 0.5 || degenerate.uar != 0.5) ok = false;
  report(10, "metric definitions on constructed confusions", ok,
         "perfect, [[8,2],[1,9]] and degenerate cases");
}

}  // namespace

int main() {
  const auto start = Clock::now();
  criterion_1_gradient_integrity();
  criterion_2_graph_conv_equivalence();
  criterion_3_partition_correctness();
  criterion_4_fusion_constraints();
  criterion_5_slstm_numerics();
  criterion_6_overfit();
  const SeparabilityOutcome outcome = criterion_7_separability();
  criterion_8_cell_variants(outcome);
  criterion_9_determinism();
  criterion_10_metric_definitions();
  std::printf("acceptance: %d of 10 criteria passed in %.1f s\n", 10 - g_failures,
              seconds_since(start));
  return g_failures == 0 ? 0 : 1;
}
