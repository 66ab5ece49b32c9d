#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include "stepctl/checkpoint.hpp"
#include "stepctl/error.hpp"

using namespace stepctl;

namespace {
Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::MalformedInput;
}

bool bit_equal(const PilotModel& a, const PilotModel& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  return pa.size() == pb.size() && std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0;
}
}  // namespace

TEST_CASE("round trip is bit exact") {
  auto m = PilotModel::initialized(96, 123);
  // awkward values survive too
  m.parameters()[0] = 0.1 + 0.2;
  m.parameters()[1] = 1e-310;
  m.parameters()[2] = -0.0;
  TrainingMetadata meta;
  meta.seed = 99;
  meta.loss_history = {0.7, 0.5};
  auto doc = save_checkpoint(m, meta);
  TrainingMetadata back_meta;
  auto back = load_checkpoint(nlohmann::json::parse(doc.dump()), &back_meta);
  CHECK(bit_equal(m, back));
  CHECK(back_meta.seed == 99u);
  CHECK(back_meta.loss_history == meta.loss_history);

  const std::string path = "ckpt_roundtrip.json";
  save_checkpoint_file(path, m, meta);
  CHECK(bit_equal(m, load_checkpoint_file(path)));
  std::remove(path.c_str());
}

TEST_CASE("layout keys") {
  auto doc = save_checkpoint(PilotModel::initialized(4, 1, 6));
  CHECK(doc["format_version"] == kCheckpointFormatVersion);
  CHECK(doc["hidden_dim"] == 4);
  CHECK(doc["params"]["update"]["weight"].size() == 4 * 10);
  CHECK(doc["params"]["candidate"]["bias"].size() == 4);
  CHECK(doc["params"]["head"]["weight"].size() == 4);
}

TEST_CASE("version bump is rejected") {
  auto doc = save_checkpoint(PilotModel::initialized(4, 1));
  doc["format_version"] = kCheckpointFormatVersion + 1;
  CHECK(code_of([&] { load_checkpoint(doc); }) == Errc::UnsupportedVersion);
}

TEST_CASE("corrupt checkpoints") {
  auto doc = save_checkpoint(PilotModel::initialized(4, 1));
  auto missing = doc;
  missing["params"].erase("reset");
  CHECK(code_of([&] { load_checkpoint(missing); }) == Errc::CorruptCheckpoint);

  auto short_w = doc;
  short_w["params"]["update"]["weight"].erase(0);
  CHECK(code_of([&] { load_checkpoint(short_w); }) == Errc::CorruptCheckpoint);

  const std::string path = "ckpt_truncated.json";
  const std::string text = doc.dump();
  {
    std::ofstream(path) << text.substr(0, text.size() / 2);
  }
  CHECK(code_of([&] { load_checkpoint_file(path); }) == Errc::CorruptCheckpoint);
  std::remove(path.c_str());
}
