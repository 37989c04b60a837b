#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skelact/model.hpp"

namespace skelact {

// Binary confusion counts (rows: true ASD, TD; cols: predicted), accuracy
// and unweighted average recall.
struct Metrics {
  std::array<std::array<long, 2>, 2> confusion{{{0, 0}, {0, 0}}};
  double accuracy = 0.0;
  double uar = 0.0;

  static Metrics from_confusion(long asd_as_asd, long asd_as_td, long td_as_asd, long td_as_td);
  std::string to_json_string() const;
};

struct EpochStats {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // argmax agreement during the epoch's forwards
};

struct TrainResult {
  TwoStreamModel model;
  std::vector<EpochStats> history;
};

// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on mean cross-entropy.
// Fully deterministic for a fixed (seed, data, config) triple. The dataset
// must contain both classes.
TrainResult train(const std::vector<SkeletonSequence>& data, const ModelConfig& cfg);

// Deterministic forward pass per session; all sessions must be labeled.
// threads > 1 parallelizes across sessions without changing the result.
Metrics evaluate(const TwoStreamModel& model, const std::vector<SkeletonSequence>& data,
                 int threads = 1);

// Stratified split: per class, a seeded shuffle and an 80/20 cut (test share
// rounded per class).
struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};
SplitIndices stratified_split(const std::vector<Label>& labels, double test_fraction, Rng& rng);

struct AblationRow {
  Variant variant{};
  CellKind cell{};
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  double mean_accuracy(Variant v, CellKind c) const;
  double mean_uar(Variant v, CellKind c) const;
  std::string to_json_string() const;
  std::string to_table() const;
};

// Trains and evaluates every (variant, cell, seed) combination. Each seed
// draws its own stratified split, shared across variants and cells so the
// rows are comparable.
AblationReport ablate(const std::vector<SkeletonSequence>& data, const ModelConfig& base,
                      const std::vector<Variant>& variants, const std::vector<CellKind>& cells,
                      const std::vector<std::uint64_t>& seeds);

// Finite-difference check of the full fused+attention model at reduced
// dimensions (GCN channels 8, cell hidden 8, 12 frames, two 5-node stream
// graphs). Returns the max relative gradient error.
double gradcheck_full_model(std::uint64_t seed, double eps);

}  // namespace skelact
