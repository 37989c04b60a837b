#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "skelact/rng.hpp"
#include "skelact/synth.hpp"

using namespace skelact;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("skelact_synth_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::string serialize(const SkeletonSequence& seq) {
  std::ostringstream out;
  write_session(seq, out);
  return out.str();
}

}  // namespace

TEST_CASE("clip mode at 17 fps emits exactly 340 frames") {
  GeneratorSpec spec;
  spec.separation = 1.0;
  const SkeletonSequence seq = generate_session(Label::Asd, spec, 42, "clip");
  CHECK(seq.frames.size() == 340);
  CHECK(seq.fps == 17.0);
}

TEST_CASE("clip frame count tracks round(20 * fps)") {
  GeneratorSpec spec;
  for (double fps : {10.0, 17.0, 25.5}) {
    spec.fps = fps;
    const SkeletonSequence seq = generate_session(Label::Td, spec, 7, "clip");
    CHECK(static_cast<long>(seq.frames.size()) == std::lround(20.0 * fps));
  }
}

TEST_CASE("session mode covers the three protocol stages") {
  GeneratorSpec spec;
  spec.mode = GeneratorSpec::Mode::Session;
  const SkeletonSequence seq = generate_session(Label::Td, spec, 11, "sess");
  CHECK(seq.frames.size() == static_cast<std::size_t>(std::lround(480.0 * 17.0)));
}

TEST_CASE("identical (label, spec, seed) reproduce byte-identical sessions") {
  GeneratorSpec spec;
  spec.separation = 0.7;
  const SkeletonSequence a = generate_session(Label::Asd, spec, 99, "same");
  const SkeletonSequence b = generate_session(Label::Asd, spec, 99, "same");
  CHECK(serialize(a) == serialize(b));
}

TEST_CASE("zero separation collapses both class signatures") {
  const BehaviorSignature asd = signature_for(Label::Asd, 0.0);
  const BehaviorSignature td = signature_for(Label::Td, 0.0);
  CHECK(asd.wave_rate == td.wave_rate);
  CHECK(asd.reach_jerk == td.reach_jerk);
  CHECK(asd.wave_amplitude == td.wave_amplitude);
  CHECK(asd.row_arrange_bias == td.row_arrange_bias);
  CHECK(asd.assist_rate == td.assist_rate);
  // and full separation recovers the distinct prototypes
  CHECK(signature_for(Label::Asd, 1.0).wave_rate > signature_for(Label::Td, 1.0).wave_rate);
}

TEST_CASE("generated sessions parse and carry valid confidences") {
  GeneratorSpec spec;
  const SkeletonSequence seq = generate_session(Label::Asd, spec, 3, "parse");
  std::istringstream in(serialize(seq));
  const SkeletonSequence parsed = parse_session(in);
  CHECK(parsed.frames.size() == seq.frames.size());
  int dips = 0;
  for (const auto& frame : parsed.frames) {
    for (const auto& joint : frame.joints) {
      CHECK(joint.confidence >= 0.0);
      CHECK(joint.confidence <= 1.0);
      if (joint.confidence < 0.3) ++dips;
    }
  }
  CHECK(dips > 0);  // imputation gets exercised
}

TEST_CASE("dataset generation mirrors the requested counts") {
  const auto dir = fresh_dir("counts");
  GeneratorSpec spec;
  spec.n_asd = 4;
  spec.n_td = 6;
  spec.master_seed = 5;
  const auto records = generate_dataset(spec, dir);
  CHECK(records.size() == 10);
  int asd = 0, td = 0;
  for (const auto& rec : records) (rec.label == Label::Asd ? asd : td)++;
  CHECK(asd == 4);
  CHECK(td == 6);

  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl" &&
        entry.path().filename() != "manifest.jsonl") {
      ++files;
    }
  }
  CHECK(files == 10);
  CHECK(std::filesystem::exists(dir / "manifest.jsonl"));

  const std::string manifest = file_bytes(dir / "manifest.jsonl");
  CHECK(manifest.find("\"synthetic\":true") != std::string::npos);
  CHECK(manifest.find("\"wave_events\"") != std::string::npos);
}

TEST_CASE("disjoint master seeds produce disjoint session content") {
  const auto dir_a = fresh_dir("seed_a");
  const auto dir_b = fresh_dir("seed_b");
  GeneratorSpec spec;
  spec.n_asd = 2;
  spec.n_td = 2;
  spec.master_seed = 1;
  generate_dataset(spec, dir_a);
  spec.master_seed = 2;
  generate_dataset(spec, dir_b);
  std::set<std::string> hashes;
  for (const auto& dir : {dir_a, dir_b}) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().filename() == "manifest.jsonl") continue;
      const bool fresh = hashes.insert(file_bytes(entry.path())).second;
      CHECK(fresh);
    }
  }
}

TEST_CASE("dataset regeneration is byte-identical") {
  const auto dir_a = fresh_dir("regen_a");
  const auto dir_b = fresh_dir("regen_b");
  GeneratorSpec spec;
  spec.n_asd = 2;
  spec.n_td = 1;
  spec.master_seed = 31;
  generate_dataset(spec, dir_a);
  generate_dataset(spec, dir_b);
  for (const auto& entry : std::filesystem::directory_iterator(dir_a)) {
    CHECK(file_bytes(entry.path()) == file_bytes(dir_b / entry.path().filename()));
  }
}

TEST_CASE("ASD sessions wave more than TD sessions at positive separation") {
  GeneratorSpec spec;
  spec.separation = 1.0;
  double asd_total = 0.0, td_total = 0.0;
  for (int i = 0; i < 40; ++i) {
    SessionEvents asd_events, td_events;
    generate_session(Label::Asd, spec, derive_seed(900, i), "a", &asd_events);
    generate_session(Label::Td, spec, derive_seed(901, i), "t", &td_events);
    asd_total += asd_events.wave_events;
    td_total += td_events.wave_events;
  }
  CHECK(asd_total / 40.0 > td_total / 40.0);
}
