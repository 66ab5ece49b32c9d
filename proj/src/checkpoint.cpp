#include "stepctl/checkpoint.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stepctl/error.hpp"

namespace stepctl {

namespace {

constexpr std::array<std::pair<Gate, const char*>, 3> kGates{{
    {Gate::Update, "update"},
    {Gate::Reset, "reset"},
    {Gate::Candidate, "candidate"},
}};

template <typename Derived>
std::vector<double> flat(const Eigen::DenseBase<Derived>& m) {
  // Row-major maps already store rows contiguously; copy in that order.
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

std::vector<double> read_array(const nlohmann::json& j, const char* gate, const char* field, std::size_t expected) {
  std::vector<double> out;
  try {
    out = j.at(gate).at(field).get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("params.") + gate + "." + field + ": " + e.what());
  }
  if (out.size() != expected) {
    throw Error(Errc::CorruptCheckpoint, std::string("params.") + gate + "." + field + " has " +
                                             std::to_string(out.size()) + " values, expected " +
                                             std::to_string(expected));
  }
  for (double x : out) {
    if (!std::isfinite(x)) throw Error(Errc::CorruptCheckpoint, "non-finite parameter in " + std::string(gate));
  }
  return out;
}

}  // namespace

nlohmann::json save_checkpoint(const PilotModel& model, const TrainingMetadata& meta) {
  nlohmann::json params;
  for (const auto& [gate, name] : kGates) {
    params[name] = {{"weight", flat(model.weight(gate))}, {"bias", flat(model.bias(gate))}};
  }
  params["head"] = {{"weight", flat(model.head_weight())}, {"bias", std::vector<double>{model.head_bias()}}};

  nlohmann::json metadata{{"loss_history", meta.loss_history}};
  metadata["seed"] = meta.seed ? nlohmann::json(*meta.seed) : nlohmann::json(nullptr);

  return nlohmann::json{{"format_version", kCheckpointFormatVersion},
                        {"hidden_dim", model.hidden_dim()},
                        {"input_dim", model.input_dim()},
                        {"params", std::move(params)},
                        {"metadata", std::move(metadata)}};
}

PilotModel load_checkpoint(const nlohmann::json& doc, TrainingMetadata* meta) {
  if (!doc.is_object()) throw Error(Errc::CorruptCheckpoint, "checkpoint is not a JSON object");
  int version = 0;
  int hidden = 0;
  int input = static_cast<int>(kFeatureDim);
  try {
    version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw Error(Errc::UnsupportedVersion, "checkpoint format_version " + std::to_string(version) +
                                                " (supported: " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    hidden = doc.at("hidden_dim").get<int>();
    input = doc.value("input_dim", input);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, e.what());
  }
  if (hidden < 1 || input < 1) throw Error(Errc::CorruptCheckpoint, "non-positive model dimensions");
  if (!doc.contains("params")) throw Error(Errc::CorruptCheckpoint, "missing params");
  const auto& params = doc.at("params");

  PilotModel model(hidden, input);
  const auto h = static_cast<std::size_t>(hidden);
  const auto w_cols = static_cast<std::size_t>(input + hidden);
  for (const auto& [gate, name] : kGates) {
    const auto w = read_array(params, name, "weight", h * w_cols);
    const auto b = read_array(params, name, "bias", h);
    model.weight(gate) = Eigen::Map<const RowMatrix>(w.data(), hidden, input + hidden);
    model.bias(gate) = Eigen::Map<const Eigen::VectorXd>(b.data(), hidden);
  }
  const auto hw = read_array(params, "head", "weight", h);
  const auto hb = read_array(params, "head", "bias", 1);
  model.head_weight() = Eigen::Map<const Eigen::VectorXd>(hw.data(), hidden);
  model.head_bias() = hb.front();

  if (meta != nullptr) {
    *meta = {};
    if (doc.contains("metadata")) {
      const auto& md = doc.at("metadata");
      try {
        if (md.contains("seed") && !md.at("seed").is_null()) meta->seed = md.at("seed").get<std::uint64_t>();
        if (md.contains("loss_history")) meta->loss_history = md.at("loss_history").get<std::vector<double>>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::CorruptCheckpoint, std::string("metadata: ") + e.what());
      }
    }
  }
  return model;
}

void save_checkpoint_file(const std::string& path, const PilotModel& model, const TrainingMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MalformedInput, "cannot write checkpoint: " + path);
  out << save_checkpoint(model, meta).dump() << '\n';
  if (!out) throw Error(Errc::MalformedInput, "failed writing checkpoint: " + path);
}

PilotModel load_checkpoint_file(const std::string& path, TrainingMetadata* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MalformedInput, "cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, path + ": " + e.what());
  }
  return load_checkpoint(doc, meta);
}

}  // namespace stepctl
