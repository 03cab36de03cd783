#include <fstream>
#include <sstream>

#include "tsae/errors.hpp"
#include "tsae/serialize.hpp"
#include "tsae/training.hpp"

namespace tsae {

namespace {

json matrix_json(const std::string& name, const RealMatrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"values", m.values()}};
}

const json& field(const json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("checkpoint: missing field '" + context + key + "'");
  return j.at(key);
}

template <typename T>
T get(const json& j, const char* key, const std::string& context) {
  const json& v = field(j, key, context);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("checkpoint: field '" + context + key + "' has the wrong type");
  }
}

std::pair<std::string, RealMatrix> matrix_from(const json& j, const std::string& context) {
  const auto name = get<std::string>(j, "name", context);
  const auto rows = get<std::size_t>(j, "rows", context);
  const auto cols = get<std::size_t>(j, "cols", context);
  auto values = get<std::vector<double>>(j, "values", context);
  if (values.size() != rows * cols) {
    throw ConfigError("checkpoint: field '" + context + "values' of '" + name + "' has " +
                      std::to_string(values.size()) + " entries, expected " + std::to_string(rows * cols));
  }
  return {name, RealMatrix(rows, cols, std::move(values))};
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& e : bundle.params) params.push_back(matrix_json(e.name, e.value));

  json epochs = json::array();
  for (const auto& e : bundle.history.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_pred", e.train_pred}, {"train_corr", e.train_corr},
                      {"val_pred", e.val_pred}});
  }

  json doc = {{"format", "tsae-checkpoint"},
              {"version", kCheckpointVersion},
              {"config", to_json(bundle.config)},
              {"normalization", to_json(bundle.stats)},
              {"params", params},
              {"history",
               {{"best_epoch", bundle.history.best_epoch},
                {"final_train_pred", bundle.history.final_train_pred},
                {"epochs", epochs}}}};

  if (bundle.optimizer) {
    const AdamState& s = *bundle.optimizer;
    json m = json::array();
    json v = json::array();
    for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
      m.push_back(matrix_json(bundle.params[i].name, s.first_moment[i]));
      v.push_back(matrix_json(bundle.params[i].name, s.second_moment[i]));
    }
    doc["optimizer"] = {{"step", s.step},
                        {"learning_rate", s.config.learning_rate},
                        {"beta1", s.config.beta1},
                        {"beta2", s.config.beta2},
                        {"epsilon", s.config.epsilon},
                        {"first_moment", m},
                        {"second_moment", v}};
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed while writing checkpoint '" + path.string() + "'");
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();

  json doc;
  try {
    doc = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path.string() + "' is corrupted or truncated: " + e.what());
  }

  if (get<std::string>(doc, "format", "") != "tsae-checkpoint") {
    throw ConfigError("checkpoint: field 'format' is not tsae-checkpoint");
  }
  const int version = get<int>(doc, "version", "");
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: field 'version' is " + std::to_string(version) + ", this build reads " +
                      std::to_string(kCheckpointVersion));
  }

  ModelBundle bundle;
  bundle.config = train_config_from_json(field(doc, "config", ""));
  bundle.stats = normalization_from_json(field(doc, "normalization", ""));

  ParamStore params;
  for (const auto& p : field(doc, "params", "")) {
    auto [name, m] = matrix_from(p, "params[].");
    params.add(name, std::move(m));
  }
  // Shape agreement with the echoed config; throws naming the parameter.
  Model model = Model::create(bundle.config);
  model.set_params(params);
  bundle.params = model.params();

  const json& hist = field(doc, "history", "");
  bundle.history.best_epoch = get<std::size_t>(hist, "best_epoch", "history.");
  bundle.history.final_train_pred = get<double>(hist, "final_train_pred", "history.");
  for (const auto& e : field(hist, "epochs", "history.")) {
    bundle.history.epochs.push_back({get<std::size_t>(e, "epoch", "history.epochs[]."),
                                     get<double>(e, "train_pred", "history.epochs[]."),
                                     get<double>(e, "train_corr", "history.epochs[]."),
                                     get<double>(e, "val_pred", "history.epochs[].")});
  }

  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    AdamState s;
    s.step = get<std::uint64_t>(o, "step", "optimizer.");
    s.config.learning_rate = get<double>(o, "learning_rate", "optimizer.");
    s.config.beta1 = get<double>(o, "beta1", "optimizer.");
    s.config.beta2 = get<double>(o, "beta2", "optimizer.");
    s.config.epsilon = get<double>(o, "epsilon", "optimizer.");
    for (const auto& m : field(o, "first_moment", "optimizer.")) {
      s.first_moment.push_back(matrix_from(m, "optimizer.first_moment[].").second);
    }
    for (const auto& v : field(o, "second_moment", "optimizer.")) {
      s.second_moment.push_back(matrix_from(v, "optimizer.second_moment[].").second);
    }
    if (s.first_moment.size() != bundle.params.size() || s.second_moment.size() != bundle.params.size()) {
      throw ConfigError("checkpoint: field 'optimizer' does not match the parameter count");
    }
    for (std::size_t i = 0; i < bundle.params.size(); ++i) {
      if (!s.first_moment[i].same_shape(bundle.params[i].value) ||
          !s.second_moment[i].same_shape(bundle.params[i].value)) {
        throw ShapeError("checkpoint: optimizer moments for '" + bundle.params[i].name + "' have the wrong shape");
      }
    }
    bundle.optimizer = std::move(s);
  }
  return bundle;
}

}  // namespace tsae
