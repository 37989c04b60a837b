#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skelact/skeleton.hpp"

namespace skelact {

// Parametric kinematic contrasts between the two classes. Rates are
// events per minute; amplitudes and jerk scales are in pixels.
struct BehaviorSignature {
  double reach_jerk = 0.0;        // high-frequency noise on arm trajectories
  double wave_rate = 0.0;         // arm-waving bursts per minute
  double wave_amplitude = 0.0;    // burst oscillation amplitude
  double row_arrange_bias = 0.0;  // probability a placed block extends a row
  double assist_rate = 0.0;       // parent-assist episodes per minute
};

// Class prototypes interpolated by `separation`: 0 collapses both classes
// onto the shared midpoint, 1 uses the full prototypes.
BehaviorSignature signature_for(Label label, double separation);

struct GeneratorSpec {
  int n_asd = 0;
  int n_td = 0;
  enum class Mode { Clip, Session } mode = Mode::Clip;
  double fps = 17.0;
  double separation = 1.0;
  std::uint64_t master_seed = 1;
  double noise_scale = 1.5;  // per-joint Gaussian pixel noise

  void validate() const;
};

struct SessionEvents {
  int wave_events = 0;
  int assist_events = 0;
};

// One deterministic session: clip mode is a 20 s excerpt, session mode runs
// the three protocol stages (180 s guided build, 180 s free play, 120 s
// pack-up) back to back.
SkeletonSequence generate_session(Label label, const GeneratorSpec& spec,
                                  std::uint64_t session_seed, const std::string& session_id,
                                  SessionEvents* events = nullptr);

struct SessionRecord {
  std::string id;
  Label label = Label::Unlabeled;
  std::uint64_t seed = 0;
  std::string mode;
  SessionEvents events;
  std::string file;
};

// Writes n_asd + n_td session files plus manifest.jsonl into `out_dir`.
// Per-session seeds derive from the master seed by the counter-based mixing
// in rng.hpp, so content is independent of generation order.
std::vector<SessionRecord> generate_dataset(const GeneratorSpec& spec,
                                            const std::filesystem::path& out_dir);

}  // namespace skelact
