#include "mtln/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "mtln/error.hpp"

namespace mtln {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + std::string(section) + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) {
      throw ConfigError("unknown config key '" + std::string(section) + (section.empty() ? "" : ".") + item.key() +
                        "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, std::string_view section) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + std::string(section) + "." + key + "' has the wrong type");
  }
}

std::string bridge_name(BridgeMode m) { return m == BridgeMode::kFlatten ? "flatten" : "gap"; }

BridgeMode parse_bridge(const std::string& s) {
  if (s == "gap") return BridgeMode::kGlobalAvgPool;
  if (s == "flatten") return BridgeMode::kFlatten;
  throw ConfigError("network.bridge must be 'gap' or 'flatten', got '" + s + "'");
}

std::string weight_form_name(WeightForm f) { return f == WeightForm::kPrinted ? "printed" : "gaussian"; }

WeightForm parse_weight_form(const std::string& s) {
  if (s == "gaussian") return WeightForm::kGaussian;
  if (s == "printed") return WeightForm::kPrinted;
  throw ConfigError("loss.weight_form must be 'gaussian' or 'printed', got '" + s + "'");
}

std::string mode_name(TrainMode m) { return m == TrainMode::kSingleTask ? "single-task" : "multi-task"; }

TrainMode parse_mode(const std::string& s) {
  if (s == "multi-task") return TrainMode::kMultiTask;
  if (s == "single-task") return TrainMode::kSingleTask;
  throw ConfigError("train.mode must be 'multi-task' or 'single-task', got '" + s + "'");
}

json network_json(const NetworkConfig& n) {
  return {{"height", n.height},   {"width", n.width},         {"widths", n.widths},
          {"stages", n.stages},   {"fc_hidden", n.fc_hidden}, {"bridge", bridge_name(n.bridge)}};
}

NetworkConfig parse_network(const json& j) {
  reject_unknown(j, "network", {"height", "width", "widths", "stages", "fc_hidden", "bridge"});
  NetworkConfig n;
  read(j, "height", n.height, "network");
  read(j, "width", n.width, "network");
  read(j, "widths", n.widths, "network");
  read(j, "stages", n.stages, "network");
  read(j, "fc_hidden", n.fc_hidden, "network");
  std::string bridge = bridge_name(n.bridge);
  read(j, "bridge", bridge, "network");
  n.bridge = parse_bridge(bridge);
  return n;
}

json loss_json(const LossConfig& l) {
  return {{"alpha_seg", l.alpha_seg}, {"alpha_ellipse", l.alpha_ellipse}, {"omega0", l.omega0},
          {"sigma", l.sigma},         {"p_clip", l.p_clip},               {"dice_smooth", l.dice_smooth},
          {"weight_form", weight_form_name(l.weight_form)}};
}

LossConfig parse_loss(const json& j) {
  reject_unknown(j, "loss", {"alpha_seg", "alpha_ellipse", "omega0", "sigma", "p_clip", "dice_smooth", "weight_form"});
  LossConfig l;
  read(j, "alpha_seg", l.alpha_seg, "loss");
  read(j, "alpha_ellipse", l.alpha_ellipse, "loss");
  read(j, "omega0", l.omega0, "loss");
  read(j, "sigma", l.sigma, "loss");
  read(j, "p_clip", l.p_clip, "loss");
  read(j, "dice_smooth", l.dice_smooth, "loss");
  std::string form = weight_form_name(l.weight_form);
  read(j, "weight_form", form, "loss");
  l.weight_form = parse_weight_form(form);
  return l;
}

json optimizer_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"mode", mode_name(t.mode)}};
}

void parse_optimizer(const json& j, TrainConfig& t) {
  reject_unknown(j, "train", {"learning_rate", "momentum", "epochs", "batch_size", "mode"});
  read(j, "learning_rate", t.learning_rate, "train");
  read(j, "momentum", t.momentum, "train");
  read(j, "epochs", t.epochs, "train");
  read(j, "batch_size", t.batch_size, "train");
  std::string mode = mode_name(t.mode);
  read(j, "mode", mode, "train");
  t.mode = parse_mode(mode);
}

}  // namespace

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.network = network;
  t.network.seed = seed;
  t.loss = loss;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  resolved_train().validate();
  if (data.count < 0) throw ConfigError("data.count must be non-negative");
  if (data.height < 64 || data.width < 64) throw ConfigError("data.height and data.width must be at least 64");
}

RunConfig run_config_from_json(const json& doc) {
  reject_unknown(doc, "", {"network", "loss", "train", "data", "paths", "seed"});
  RunConfig c;
  if (doc.contains("network")) c.network = parse_network(doc.at("network"));
  if (doc.contains("loss")) c.loss = parse_loss(doc.at("loss"));
  if (doc.contains("train")) parse_optimizer(doc.at("train"), c.train);
  if (doc.contains("data")) {
    const json& j = doc.at("data");
    reject_unknown(j, "data", {"count", "height", "width"});
    read(j, "count", c.data.count, "data");
    read(j, "height", c.data.height, "data");
    read(j, "width", c.data.width, "data");
  }
  if (doc.contains("paths")) {
    const json& j = doc.at("paths");
    reject_unknown(j, "paths", {"data_dir", "manifest", "checkpoint"});
    read(j, "data_dir", c.paths.data_dir, "paths");
    read(j, "manifest", c.paths.manifest, "paths");
    read(j, "checkpoint", c.paths.checkpoint, "paths");
  }
  read(doc, "seed", c.seed, "");
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"network", network_json(c.network)},
          {"loss", loss_json(c.loss)},
          {"train", optimizer_json(c.train)},
          {"data", {{"count", c.data.count}, {"height", c.data.height}, {"width", c.data.width}}},
          {"paths",
           {{"data_dir", c.paths.data_dir}, {"manifest", c.paths.manifest}, {"checkpoint", c.paths.checkpoint}}},
          {"seed", c.seed}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

json train_config_to_json(const TrainConfig& t) {
  return {{"network", network_json(t.network)},
          {"loss", loss_json(t.loss)},
          {"train", optimizer_json(t)},
          {"seed", t.seed}};
}

TrainConfig train_config_from_json(const json& doc) {
  reject_unknown(doc, "", {"network", "loss", "train", "seed"});
  TrainConfig t;
  if (doc.contains("network")) t.network = parse_network(doc.at("network"));
  if (doc.contains("loss")) t.loss = parse_loss(doc.at("loss"));
  if (doc.contains("train")) parse_optimizer(doc.at("train"), t);
  read(doc, "seed", t.seed, "");
  t.network.seed = t.seed;
  t.validate();
  return t;
}

}  // namespace mtln
