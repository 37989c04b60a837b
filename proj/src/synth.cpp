#include "skelact/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "skelact/rng.hpp"

namespace skelact {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Class prototypes encoding the qualitative contrasts the protocol relies
// on: jerky arm trajectories, frequent high-amplitude arm waving, preference
// for arranging blocks in rows, and more parent-assist episodes on the ASD
// side; smooth goal-directed reaching on the TD side.
constexpr BehaviorSignature kAsdPrototype{0.75, 5.0, 52.0, 0.85, 3.6};
constexpr BehaviorSignature kTdPrototype{0.10, 0.3, 14.0, 0.15, 0.9};

double lerp(double a, double b, double u) { return a + (b - a) * u; }

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

struct Point {
  double x = 0.0;
  double y = 0.0;
};

Point lerp(Point a, Point b, double u) { return {lerp(a.x, b.x, u), lerp(a.y, b.y, u)}; }

// Seated rest pose, image pixels (1280x720 frame).
const Point kRestPose[kJointCount] = {
    {640, 300},            // nose
    {654, 290}, {626, 290},  // eyes
    {668, 300}, {612, 300},  // ears
    {700, 330}, {580, 330},  // shoulders
    {720, 382}, {560, 382},  // elbows
    {700, 432}, {580, 432},  // wrists
    {680, 452}, {600, 452},  // hips
    {685, 552}, {595, 552},  // knees
    {690, 652}, {590, 652},  // ankles
};

enum Stage { kGuidedBuild = 0, kFreePlay = 1, kPackUp = 2 };

struct TimedEvent {
  double start = 0.0;
  double duration = 0.0;
  double strength = 1.0;

  double envelope(double t) const {
    if (t < start || t > start + duration) return 0.0;
    const double u = (t - start) / duration;
    return std::sin(kPi * u) * std::sin(kPi * u);
  }
};

struct ReachCycle {
  double start = 0.0;
  double period = 3.0;
  Point pick;
  Point place;
};

struct Timeline {
  double duration = 0.0;
  std::vector<double> stage_bounds;  // end time per stage
  std::vector<ReachCycle> cycles;
  std::vector<TimedEvent> waves;
  std::vector<TimedEvent> assists;
};

Stage stage_at(const Timeline& tl, double t) {
  for (std::size_t s = 0; s < tl.stage_bounds.size(); ++s) {
    if (t < tl.stage_bounds[s]) return static_cast<Stage>(s);
  }
  return static_cast<Stage>(tl.stage_bounds.size() - 1);
}

// Stage modulation of event rates: free play waves more, pack-up calms down.
double wave_stage_factor(Stage s) { return s == kFreePlay ? 1.3 : (s == kPackUp ? 0.6 : 1.0); }
double assist_stage_factor(Stage s) { return s == kGuidedBuild ? 1.3 : (s == kPackUp ? 0.8 : 1.0); }

Timeline build_timeline(const GeneratorSpec& spec, const BehaviorSignature& arm_sig,
                        double assist_rate, Rng& rng) {
  Timeline tl;
  if (spec.mode == GeneratorSpec::Mode::Clip) {
    tl.duration = 20.0;
    tl.stage_bounds = {tl.duration};  // a free-play excerpt
  } else {
    tl.stage_bounds = {180.0, 360.0, 480.0};
    tl.duration = tl.stage_bounds.back();
  }
  const bool clip = spec.mode == GeneratorSpec::Mode::Clip;

  // Reach-place cycles tile the whole timeline.
  double t = rng.uniform(0.0, 1.0);
  int slot = 0;
  while (t < tl.duration) {
    ReachCycle cycle;
    cycle.start = t;
    cycle.period = rng.uniform(2.6, 3.8);
    cycle.pick = {640.0 + rng.uniform(-90.0, 90.0), 470.0 + rng.uniform(-10.0, 10.0)};
    const Stage stage = clip ? kFreePlay : stage_at(tl, t);
    if (stage == kPackUp) {
      // Blocks return to the box.
      cycle.place = {760.0 + rng.uniform(-12.0, 12.0), 468.0 + rng.uniform(-6.0, 6.0)};
    } else if (rng.uniform01() < arm_sig.row_arrange_bias) {
      cycle.place = {520.0 + 34.0 * (slot % 7), 452.0};
    } else {
      cycle.place = {640.0 + rng.uniform(-15.0, 15.0), 455.0 - 12.0 * (slot % 4)};
    }
    ++slot;
    t += cycle.period;
    tl.cycles.push_back(cycle);
  }

  // Poisson event schedules per stage.
  double stage_start = 0.0;
  for (double stage_end : tl.stage_bounds) {
    const Stage stage = clip ? kFreePlay : stage_at(tl, stage_start);
    const double minutes = (stage_end - stage_start) / 60.0;
    const int n_waves = rng.poisson(arm_sig.wave_rate * wave_stage_factor(stage) * minutes);
    for (int i = 0; i < n_waves; ++i) {
      TimedEvent e;
      e.start = rng.uniform(stage_start, stage_end - 1.3);
      e.duration = rng.uniform(1.0, 1.5);
      e.strength = rng.uniform(0.8, 1.2);
      tl.waves.push_back(e);
    }
    const int n_assists = rng.poisson(assist_rate * assist_stage_factor(stage) * minutes);
    for (int i = 0; i < n_assists; ++i) {
      TimedEvent e;
      e.start = rng.uniform(stage_start, stage_end - 2.2);
      e.duration = rng.uniform(1.8, 2.6);
      e.strength = rng.uniform(0.8, 1.2);
      tl.assists.push_back(e);
    }
    stage_start = stage_end;
  }
  auto by_start = [](const TimedEvent& a, const TimedEvent& b) { return a.start < b.start; };
  std::sort(tl.waves.begin(), tl.waves.end(), by_start);
  std::sort(tl.assists.begin(), tl.assists.end(), by_start);
  return tl;
}

BehaviorSignature blend_signature(const BehaviorSignature& mid, const BehaviorSignature& sig,
                                  double gate) {
  BehaviorSignature out;
  out.reach_jerk = lerp(mid.reach_jerk, sig.reach_jerk, gate);
  out.wave_rate = lerp(mid.wave_rate, sig.wave_rate, gate);
  out.wave_amplitude = lerp(mid.wave_amplitude, sig.wave_amplitude, gate);
  out.row_arrange_bias = lerp(mid.row_arrange_bias, sig.row_arrange_bias, gate);
  out.assist_rate = lerp(mid.assist_rate, sig.assist_rate, gate);
  return out;
}

// Dominant-arm waypoint within one reach-place cycle.
Point cycle_offset(const ReachCycle& c, const Point& rest, double t) {
  const double u = (t - c.start) / c.period;
  Point target = rest;
  if (u < 0.2) {
    target = rest;
  } else if (u < 0.45) {
    target = lerp(rest, c.pick, smoothstep((u - 0.2) / 0.25));
  } else if (u < 0.75) {
    target = lerp(c.pick, c.place, smoothstep((u - 0.45) / 0.3));
  } else {
    target = lerp(c.place, rest, smoothstep((u - 0.75) / 0.25));
  }
  return {target.x - rest.x, target.y - rest.y};
}

}  // namespace

BehaviorSignature signature_for(Label label, double separation) {
  if (label == Label::Unlabeled) throw DataError("signature_for: label must be ASD or TD");
  if (separation < 0.0 || separation > 1.0) {
    throw UsageError("signature_for: separation must lie in [0, 1]");
  }
  auto mix = [&](double asd, double td) {
    const double mid = 0.5 * (asd + td);
    const double proto = label == Label::Asd ? asd : td;
    return lerp(mid, proto, separation);
  };
  BehaviorSignature sig;
  sig.reach_jerk = mix(kAsdPrototype.reach_jerk, kTdPrototype.reach_jerk);
  sig.wave_rate = mix(kAsdPrototype.wave_rate, kTdPrototype.wave_rate);
  sig.wave_amplitude = mix(kAsdPrototype.wave_amplitude, kTdPrototype.wave_amplitude);
  sig.row_arrange_bias = mix(kAsdPrototype.row_arrange_bias, kTdPrototype.row_arrange_bias);
  sig.assist_rate = mix(kAsdPrototype.assist_rate, kTdPrototype.assist_rate);
  return sig;
}

void GeneratorSpec::validate() const {
  if (n_asd < 0 || n_td < 0) throw UsageError("generator: session counts must be >= 0");
  if (!(fps > 0.0)) throw UsageError("generator: fps must be positive");
  if (separation < 0.0 || separation > 1.0) {
    throw UsageError("generator: separation must lie in [0, 1]");
  }
  if (noise_scale < 0.0) throw UsageError("generator: noise scale must be >= 0");
}

SkeletonSequence generate_session(Label label, const GeneratorSpec& spec,
                                  std::uint64_t session_seed, const std::string& session_id,
                                  SessionEvents* events) {
  spec.validate();
  if (label == Label::Unlabeled) throw DataError("generate_session: label must be ASD or TD");

  Rng rng(session_seed);
  const BehaviorSignature sig = signature_for(label, spec.separation);
  const BehaviorSignature mid = signature_for(label, 0.0);

  // Mild per-session variability in how strongly the class pattern shows in
  // the arms versus the head; both regions always stay informative.
  const double body_gate = rng.uniform(0.75, 1.0);
  const double head_gate = rng.uniform(0.75, 1.0);
  const BehaviorSignature arm_sig = blend_signature(mid, sig, body_gate);
  const BehaviorSignature head_sig = blend_signature(mid, sig, head_gate);

  const Timeline tl = build_timeline(spec, arm_sig, sig.assist_rate, rng);

  SkeletonSequence seq;
  seq.session_id = session_id;
  seq.fps = spec.fps;
  seq.label = label;
  const int frame_count = static_cast<int>(std::lround(tl.duration * spec.fps));
  seq.frames.reserve(frame_count);

  // Ornstein-Uhlenbeck jitter per arm coordinate (wrists and elbows), plus
  // a slow head-yaw wander.
  double arm_jitter[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  double yaw_jitter = 0.0;
  const double wander_phase0 = rng.uniform(0.0, 2.0 * kPi);
  const double wander_phase1 = rng.uniform(0.0, 2.0 * kPi);

  std::size_t cycle_idx = 0;
  for (int f = 0; f < frame_count; ++f) {
    const double t = static_cast<double>(f) / spec.fps;
    while (cycle_idx + 1 < tl.cycles.size() && tl.cycles[cycle_idx + 1].start <= t) ++cycle_idx;

    // Event envelopes active at t.
    double wave = 0.0;
    double wave_phase = 0.0;
    for (const TimedEvent& e : tl.waves) {
      const double env = e.envelope(t);
      if (env > wave) {
        wave = env * e.strength;
        wave_phase = t - e.start;
      }
    }
    double assist = 0.0;
    for (const TimedEvent& e : tl.assists) assist = std::max(assist, e.envelope(t) * e.strength);

    const double assist_head = assist * head_gate;
    const double assist_body = assist * body_gate;

    // Dominant-arm reach offset, damped while a parent assists.
    Point reach{0.0, 0.0};
    if (cycle_idx < tl.cycles.size()) {
      const ReachCycle& c = tl.cycles[cycle_idx];
      if (t >= c.start && t < c.start + c.period) reach = cycle_offset(c, kRestPose[9], t);
    }
    const double damp = 1.0 - 0.7 * assist_body;
    reach.x *= damp;
    reach.y *= damp;

    // Head yaw: slow social wander (wide for smooth movers, a narrow
    // fixation for jerky ones), jerk-scaled micro-jitter, and a strong
    // orienting pulse toward the parent during assists.
    yaw_jitter = 0.86 * yaw_jitter + rng.normal(0.0, 6.0 * head_sig.reach_jerk);
    const double wander_amp = std::max(0.0, 16.0 * (0.75 - head_sig.reach_jerk));
    const double wander = wander_amp * std::sin(2.0 * kPi * 0.12 * t + wander_phase0) +
                          0.5 * wander_amp * std::sin(2.0 * kPi * 0.047 * t + wander_phase1);
    const double yaw = wander + yaw_jitter + 26.0 * assist_head;

    // Arm waving oscillation.
    const double wave_y = arm_sig.wave_amplitude * wave * std::sin(2.0 * kPi * 3.3 * wave_phase);
    const double wave_x =
        0.45 * arm_sig.wave_amplitude * wave * std::sin(2.0 * kPi * 1.7 * wave_phase);

    for (int k = 0; k < 8; ++k) {
      arm_jitter[k] = 0.86 * arm_jitter[k] + rng.normal(0.0, 8.0 * arm_sig.reach_jerk);
    }

    SkeletonFrame frame;
    for (int j = 0; j < kJointCount; ++j) {
      Point p = kRestPose[j];
      // Torso lean toward the parent while assisted.
      if (j >= 5) p.x += 6.0 * assist_body;

      // Vigorous waving rocks the whole upper body; the head bobs along.
      const double head_bob =
          0.22 * head_sig.wave_amplitude * wave * std::sin(2.0 * kPi * 3.3 * wave_phase);
      switch (j) {
        case 0:  // nose
          p.x += yaw;
          p.y += head_bob;
          break;
        case 1:
        case 2:  // eyes
          p.x += 0.8 * yaw;
          p.y += head_bob;
          break;
        case 3:
        case 4:  // ears
          p.x += 0.5 * yaw;
          p.y += 0.8 * head_bob;
          break;
        case 9:  // dominant (left) wrist
          p.x += reach.x + wave_x + arm_jitter[0];
          p.y += reach.y + wave_y + arm_jitter[1];
          break;
        case 10:  // other wrist: sympathetic motion, full wave participation
          p.x += 0.25 * reach.x + 0.8 * wave_x + arm_jitter[2];
          p.y += 0.25 * reach.y + 0.8 * wave_y + arm_jitter[3];
          break;
        case 7:  // left elbow follows the wrist halfway
          p.x += 0.5 * (reach.x + wave_x) + arm_jitter[4];
          p.y += 0.5 * (reach.y + wave_y) + arm_jitter[5];
          break;
        case 8:
          p.x += 0.5 * (0.25 * reach.x + 0.8 * wave_x) + arm_jitter[6];
          p.y += 0.5 * (0.25 * reach.y + 0.8 * wave_y) + arm_jitter[7];
          break;
        case 5:  // shoulders shift slightly with the reach
          p.x += 0.12 * reach.x;
          p.y += 0.12 * reach.y;
          break;
        case 6:
          p.x += 0.04 * reach.x;
          p.y += 0.04 * reach.y;
          break;
        default:
          break;
      }

      Joint joint;
      joint.x = p.x + rng.normal(0.0, spec.noise_scale);
      joint.y = p.y + rng.normal(0.0, spec.noise_scale);
      joint.confidence =
          rng.uniform01() < 0.005 ? rng.uniform(0.05, 0.25) : rng.uniform(0.7, 1.0);
      frame.joints[j] = joint;
    }
    seq.frames.push_back(frame);
  }

  if (events) {
    events->wave_events = static_cast<int>(tl.waves.size());
    events->assist_events = static_cast<int>(tl.assists.size());
  }
  return seq;
}

std::vector<SessionRecord> generate_dataset(const GeneratorSpec& spec,
                                            const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string());

  std::vector<SessionRecord> records;
  const int total = spec.n_asd + spec.n_td;
  for (int i = 0; i < total; ++i) {
    const Label label = i < spec.n_asd ? Label::Asd : Label::Td;
    const int class_index = label == Label::Asd ? i : i - spec.n_asd;
    std::ostringstream id;
    id << (label == Label::Asd ? "asd_" : "td_") << std::setfill('0') << std::setw(3)
       << (class_index + 1);

    SessionRecord rec;
    rec.id = id.str();
    rec.label = label;
    rec.seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(i));
    rec.mode = spec.mode == GeneratorSpec::Mode::Clip ? "clip" : "session";
    rec.file = rec.id + ".skel.jsonl";

    const SkeletonSequence seq = generate_session(label, spec, rec.seed, rec.id, &rec.events);
    write_session_file(seq, out_dir / rec.file);
    records.push_back(std::move(rec));
  }

  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw DataError("cannot write manifest in " + out_dir.string());
  for (const SessionRecord& rec : records) {
    json line;
    line["id"] = rec.id;
    line["label"] = label_to_string(rec.label);
    line["seed"] = rec.seed;
    line["mode"] = rec.mode;
    line["file"] = rec.file;
    line["wave_events"] = rec.events.wave_events;
    line["assist_events"] = rec.events.assist_events;
    line["synthetic"] = true;
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw DataError("write failed for manifest in " + out_dir.string());
  return records;
}

}  // namespace skelact
