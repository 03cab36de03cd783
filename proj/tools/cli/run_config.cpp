#include "cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "tsae/errors.hpp"

namespace tsae::cli {

void RunConfig::validate() const {
  if (source != "synthetic" && source != "csv") {
    throw ConfigError("config: key 'data.source' must be 'synthetic' or 'csv', got '" + source + "'");
  }
  if (source == "csv" && path.empty()) throw ConfigError("config: key 'data.path' is required when data.source is csv");
  sim.validate();
  generate.fade.validate();
  generate.profile.validate();
  train.validate();
  if (!(split.val_fraction > 0.0 && split.val_fraction < 1.0)) {
    throw ConfigError("config: key 'train.val_fraction' must be in (0, 1)");
  }
  if (split.block_windows == 0) throw ConfigError("config: key 'train.block_windows' must be >= 1");
  if (soc_tolerance < 0.0) throw ConfigError("config: key 'eval.soc_tolerance' must be non-negative");
  if (!(soc_proxy.q_nom_ah > 0.0)) throw ConfigError("config: key 'eval.soc_proxy_q_nom_ah' must be positive");
}

namespace {

json sim_json(const SimConfig& s) {
  return {{"q_nom_ah", s.q_nom_ah},       {"r0_ohm", s.r0_ohm}, {"r1_ohm", s.r1_ohm},
          {"c1_farad", s.c1_farad},       {"dt_s", s.dt_s},     {"noise_std_v", s.noise_std_v},
          {"ocv_coefficients", s.ocv_coefficients}};
}

void sim_from(const json& j, SimConfig& s) {
  const std::string ctx = "config data.sim";
  reject_unknown_keys(j, {"q_nom_ah", "r0_ohm", "r1_ohm", "c1_farad", "dt_s", "noise_std_v", "ocv_coefficients"}, ctx);
  read_key(j, "q_nom_ah", s.q_nom_ah, ctx);
  read_key(j, "r0_ohm", s.r0_ohm, ctx);
  read_key(j, "r1_ohm", s.r1_ohm, ctx);
  read_key(j, "c1_farad", s.c1_farad, ctx);
  read_key(j, "dt_s", s.dt_s, ctx);
  read_key(j, "noise_std_v", s.noise_std_v, ctx);
  read_key(j, "ocv_coefficients", s.ocv_coefficients, ctx);
}

json generate_json(const GenerateOptions& g) {
  json fade = json::array();
  for (const auto& k : g.fade.knots) fade.push_back({{"fraction", k.fraction}, {"theta_q", k.theta_q}, {"theta_r", k.theta_r}});
  const auto& p = g.profile;
  return {{"cycles", g.cycles},
          {"soc_start", g.soc_start},
          {"soc_end", g.soc_end},
          {"cell_id", g.cell_id},
          {"seed", g.seed},
          {"repeat_profile", g.repeat_profile},
          {"fade", fade},
          {"profile",
           {{"min_pulse_s", p.min_pulse_s},
            {"max_pulse_s", p.max_pulse_s},
            {"max_c_rate", p.max_c_rate},
            {"rest_probability", p.rest_probability},
            {"regen_probability", p.regen_probability},
            {"max_regen_c_rate", p.max_regen_c_rate}}}};
}

void generate_from(const json& j, GenerateOptions& g) {
  const std::string ctx = "config data.generate";
  reject_unknown_keys(j, {"cycles", "soc_start", "soc_end", "cell_id", "seed", "repeat_profile", "fade", "profile"}, ctx);
  read_key(j, "cycles", g.cycles, ctx);
  read_key(j, "soc_start", g.soc_start, ctx);
  read_key(j, "soc_end", g.soc_end, ctx);
  read_key(j, "cell_id", g.cell_id, ctx);
  read_key(j, "seed", g.seed, ctx);
  read_key(j, "repeat_profile", g.repeat_profile, ctx);
  if (j.contains("fade")) {
    if (!j["fade"].is_array()) throw ConfigError(ctx + ": key 'fade' must be an array");
    g.fade.knots.clear();
    for (const auto& k : j["fade"]) {
      reject_unknown_keys(k, {"fraction", "theta_q", "theta_r"}, ctx + ".fade[]");
      FadeKnot knot;
      read_key(k, "fraction", knot.fraction, ctx + ".fade[]");
      read_key(k, "theta_q", knot.theta_q, ctx + ".fade[]");
      read_key(k, "theta_r", knot.theta_r, ctx + ".fade[]");
      g.fade.knots.push_back(knot);
    }
  }
  if (j.contains("profile")) {
    const json& p = j["profile"];
    const std::string pctx = ctx + ".profile";
    reject_unknown_keys(p,
                        {"min_pulse_s", "max_pulse_s", "max_c_rate", "rest_probability", "regen_probability",
                         "max_regen_c_rate"},
                        pctx);
    read_key(p, "min_pulse_s", g.profile.min_pulse_s, pctx);
    read_key(p, "max_pulse_s", g.profile.max_pulse_s, pctx);
    read_key(p, "max_c_rate", g.profile.max_c_rate, pctx);
    read_key(p, "rest_probability", g.profile.rest_probability, pctx);
    read_key(p, "regen_probability", g.profile.regen_probability, pctx);
    read_key(p, "max_regen_c_rate", g.profile.max_regen_c_rate, pctx);
  }
}

}  // namespace

json to_json(const RunConfig& cfg) {
  const json t = to_json(cfg.train);
  json model = {{"n_a", t["n_a"]}, {"n_b", t["n_b"]}, {"n_xs", t["n_xs"]}, {"encoder_layers", t["encoder_layers"]}};
  if (cfg.train.encoder_layers.empty()) {
    // Echo the schedule actually used so the run directory is self-describing.
    json layers = json::array();
    for (const auto& l : cfg.train.encoder_config().layers) layers.push_back(to_json(l));
    model["encoder_layers"] = layers;
  }
  json train = t;
  for (const char* k : {"n_a", "n_b", "n_xs", "encoder_layers"}) train.erase(k);
  train["val_fraction"] = cfg.split.val_fraction;
  train["block_windows"] = cfg.split.block_windows;
  train["split_seed"] = cfg.split.seed;

  return {{"data", {{"source", cfg.source}, {"path", cfg.path}, {"sim", sim_json(cfg.sim)},
                    {"generate", generate_json(cfg.generate)}}},
          {"model", model},
          {"train", train},
          {"eval",
           {{"holdout_cells", cfg.holdout.cells},
            {"holdout_last_cycles", cfg.holdout.last_cycles},
            {"soc_target", cfg.soc_target},
            {"soc_tolerance", cfg.soc_tolerance},
            {"soc_proxy_start", cfg.soc_proxy.soc_start},
            {"soc_proxy_q_nom_ah", cfg.soc_proxy.q_nom_ah}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  reject_unknown_keys(j, {"data", "model", "train", "eval"}, "config");

  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown_keys(d, {"source", "path", "sim", "generate"}, "config data");
    read_key(d, "source", cfg.source, "config data");
    read_key(d, "path", cfg.path, "config data");
    if (d.contains("sim")) sim_from(d["sim"], cfg.sim);
    if (d.contains("generate")) generate_from(d["generate"], cfg.generate);
  }

  json train_fields = json::object();
  if (j.contains("model")) {
    const json& m = j["model"];
    cfg.model_given = true;
    reject_unknown_keys(m, {"n_a", "n_b", "n_xs", "encoder_layers"}, "config model");
    for (const auto& [k, v] : m.items()) train_fields[k] = v;
  }
  if (j.contains("train")) {
    json t = j["train"];
    reject_unknown_keys(t,
                        {"lambda", "learning_rate", "batch_groups", "run_length", "max_epochs", "patience", "seed",
                         "groups_per_epoch", "val_max_windows", "clip_norm", "clip_min_horizon", "val_fraction",
                         "block_windows", "split_seed"},
                        "config train");
    read_key(t, "val_fraction", cfg.split.val_fraction, "config train");
    read_key(t, "block_windows", cfg.split.block_windows, "config train");
    read_key(t, "split_seed", cfg.split.seed, "config train");
    for (const char* k : {"val_fraction", "block_windows", "split_seed"}) t.erase(k);
    for (const auto& [k, v] : t.items()) train_fields[k] = v;
  }
  cfg.train = train_config_from_json(train_fields, cfg.train);

  if (j.contains("eval")) {
    const json& e = j["eval"];
    const std::string ctx = "config eval";
    reject_unknown_keys(e,
                        {"holdout_cells", "holdout_last_cycles", "soc_target", "soc_tolerance", "soc_proxy_start",
                         "soc_proxy_q_nom_ah"},
                        ctx);
    read_key(e, "holdout_cells", cfg.holdout.cells, ctx);
    read_key(e, "holdout_last_cycles", cfg.holdout.last_cycles, ctx);
    read_key(e, "soc_target", cfg.soc_target, ctx);
    read_key(e, "soc_tolerance", cfg.soc_tolerance, ctx);
    read_key(e, "soc_proxy_start", cfg.soc_proxy.soc_start, ctx);
    read_key(e, "soc_proxy_q_nom_ah", cfg.soc_proxy.q_nom_ah, ctx);
  }

  cfg.split.n_a = cfg.train.n_a;
  cfg.split.n_b = cfg.train.n_b;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  json j;
  try {
    j = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

}  // namespace tsae::cli
