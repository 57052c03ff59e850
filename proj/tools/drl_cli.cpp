// Copyright 2026 The drl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// drl command-line tool. Exit codes: 0 success, 2 invalid input or usage,
// 3 numeric failure. Errors are one line on stderr: "error: <kind>: <msg>".

#include "drl/drl.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using drl::ErrorKind;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

#ifndef DRL_BUILD_TYPE
#define DRL_BUILD_TYPE "unknown"
#endif

std::string build_fingerprint() {
  const std::string id = std::string(drl::kVersion) + "|" + __VERSION__ + "|" + DRL_BUILD_TYPE;
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(drl::fnv1a(id)));
  return buf;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto v = drl::csv_detail::parse_double(drl::csv_detail::trim(tok));
    drl::require(v.has_value(), ErrorKind::validation, what + ": bad number '" + tok + "'");
    out.push_back(*v);
  }
  drl::require(!out.empty(), ErrorKind::validation, what + ": empty list");
  return out;
}

drl::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const drl::Vector>(v.data(), static_cast<drl::Index>(v.size()));
}

/// simplex | ball:c1,...,cL,rho | point:q1,...,qL
std::optional<drl::UncertaintySet> parse_h_set(const std::string& s) {
  if (s.empty() || s == "simplex") return std::nullopt;
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  drl::require(colon != std::string::npos, ErrorKind::validation,
               "--h-set '" + s + "': expected simplex, ball:center,rho or point:q");
  auto v = parse_list(s.substr(colon + 1), "--h-set");
  if (kind == "point") return drl::UncertaintySet::singleton(drl::MixtureSpec(to_vector(v)));
  if (kind == "ball") {
    drl::require(v.size() >= 3, ErrorKind::validation,
                 "--h-set ball needs at least two center weights and a radius");
    const double rho = v.back();
    v.pop_back();
    return drl::UncertaintySet::l2_ball(drl::MixtureSpec(to_vector(v)), rho);
  }
  drl::fail(ErrorKind::validation, "--h-set: unknown kind '" + kind + "'");
}

/// det | seed:N | none
void apply_split(const std::string& s, drl::FitConfig& c) {
  if (s == "det" || s == "deterministic") {
    c.split = drl::SplitMode::deterministic;
  } else if (s == "none") {
    c.split = drl::SplitMode::no_split;
  } else if (s.rfind("seed:", 0) == 0) {
    c.split = drl::SplitMode::seeded;
    try {
      c.split_seed = std::stoull(s.substr(5));
    } catch (const std::exception&) {
      drl::fail(ErrorKind::validation, "--split: bad seed in '" + s + "'");
    }
  } else {
    drl::fail(ErrorKind::validation, "--split '" + s + "': expected det, seed:N or none");
  }
}

drl::ShiftMode parse_shift(const std::string& s) {
  if (s == "none") return drl::ShiftMode::none;
  if (s == "logistic") return drl::ShiftMode::logistic;
  drl::fail(ErrorKind::validation, "--shift '" + s + "': expected none or logistic");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  drl::require(static_cast<bool>(in), ErrorKind::parse, "cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    drl::fail(ErrorKind::parse, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  drl::require(static_cast<bool>(out), ErrorKind::validation, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

/// Flags set on the command line win; unset ones fall back to the config
/// file, then to their defaults.
class Resolver {
 public:
  Resolver(CLI::App* app, const std::string& config_path) : app_(app) {
    if (!config_path.empty()) file_ = read_json_file(config_path);
    drl::require(file_.is_object(), ErrorKind::validation, "config file must hold a JSON object");
  }

  template <class T>
  void resolve(const std::string& key, T& value) {
    const std::string flag = "--" + key;
    const bool from_flag = app_->count(flag) > 0;
    std::string json_key = key;
    for (auto& ch : json_key)
      if (ch == '-') ch = '_';
    if (!from_flag && file_.contains(json_key)) {
      try {
        value = file_.at(json_key).get<T>();
      } catch (const json::exception& e) {
        drl::fail(ErrorKind::validation, "config key '" + json_key + "': " + e.what());
      }
    }
    resolved_[json_key] = value;
  }

  /// Prints the effective configuration to stderr.
  void echo(const std::string& command) const {
    std::cerr << "resolved-config: " << json{{"command", command}, {"config", resolved_}}.dump()
              << '\n';
  }

 private:
  CLI::App* app_;
  json file_ = json::object();
  json resolved_ = json::object();
};

struct FitFlags {
  std::string source, target, out = "model.json", config;
  std::string h_set = "simplex", learner = "forest", shift = "none", split = "det";
  std::string group_column = "group", outcome_column = "y";
  bool plugin = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int n_trees = 200, min_leaf = 5, mtry = 0, lasso_cv = 0;
  double lasso_a = 2.0, ridge = 0.0, ratio_l1 = 0.0;
  std::string transcript, audit;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("source", f.source, "Source CSV with group and outcome columns")->required();
  cmd->add_option("target", f.target, "Unlabeled target covariate CSV")->required();
  cmd->add_option("--out", f.out, "Model JSON output path");
  cmd->add_option("--config", f.config, "JSON config file; flags override it");
  cmd->add_option("--h-set", f.h_set, "simplex | ball:c1,...,cL,rho | point:q1,...,qL");
  cmd->add_option("--learner", f.learner, "linear | lasso | forest");
  cmd->add_option("--shift", f.shift, "none | logistic");
  cmd->add_option("--split", f.split, "det | seed:N | none");
  cmd->add_flag("--plugin", f.plugin, "Use the plug-in Gamma without bias correction");
  cmd->add_option("--seed", f.seed, "Root seed");
  cmd->add_option("--threads", f.threads, "Worker cap (0 = all cores)");
  cmd->add_option("--group-column", f.group_column, "Group label column");
  cmd->add_option("--outcome-column", f.outcome_column, "Outcome column");
  cmd->add_option("--n-trees", f.n_trees, "Forest size");
  cmd->add_option("--min-leaf", f.min_leaf, "Forest minimum leaf size");
  cmd->add_option("--mtry", f.mtry, "Features tried per split (0 = ceil(p/3))");
  cmd->add_option("--lasso-a", f.lasso_a, "Lasso penalty constant");
  cmd->add_option("--lasso-cv", f.lasso_cv, "Choose the lasso constant by k-fold CV (0 = off)");
  cmd->add_option("--ridge", f.ridge, "Ridge added to least squares");
  cmd->add_option("--ratio-l1", f.ratio_l1, "L1 constant for the logistic density ratio");
}

drl::FitConfig resolve_fit(CLI::App* cmd, FitFlags& f, const std::string& name) {
  Resolver r(cmd, f.config);
  r.resolve("h-set", f.h_set);
  r.resolve("learner", f.learner);
  r.resolve("shift", f.shift);
  r.resolve("split", f.split);
  r.resolve("plugin", f.plugin);
  r.resolve("seed", f.seed);
  r.resolve("threads", f.threads);
  r.resolve("group-column", f.group_column);
  r.resolve("outcome-column", f.outcome_column);
  r.resolve("n-trees", f.n_trees);
  r.resolve("min-leaf", f.min_leaf);
  r.resolve("mtry", f.mtry);
  r.resolve("lasso-a", f.lasso_a);
  r.resolve("lasso-cv", f.lasso_cv);
  r.resolve("ridge", f.ridge);
  r.resolve("ratio-l1", f.ratio_l1);
  r.resolve("out", f.out);
  r.echo(name);

  drl::FitConfig c;
  c.learner.kind = drl::learner_kind_from_string(f.learner);
  c.learner.forest.n_trees = f.n_trees;
  c.learner.forest.min_leaf = f.min_leaf;
  c.learner.forest.mtry = f.mtry;
  c.learner.lasso_a = f.lasso_a;
  if (f.lasso_cv > 0) c.learner.lasso_cv_folds = f.lasso_cv;
  c.learner.ridge = f.ridge;
  c.h_set = parse_h_set(f.h_set);
  c.shift = parse_shift(f.shift);
  apply_split(f.split, c);
  c.ratio_l1 = f.ratio_l1;
  c.seed = f.seed;
  c.threads = f.threads;
  drl::require(!(f.plugin && c.shift != drl::ShiftMode::none), ErrorKind::validation,
               "--plugin ignores density ratios; drop --shift");
  return c;
}

struct Inputs {
  drl::SourceData source;
  drl::TargetSample target;
};

Inputs load_inputs(const FitFlags& f) {
  Inputs in;
  in.source = drl::ingest_source_csv(f.source, f.group_column, f.outcome_column);
  in.target = drl::ingest_target_csv(f.target, drl::common_dimension(in.source.groups));
  return in;
}

json weights_summary(const drl::DRLModel& m, const drl::SourceData& src) {
  return {{"method", m.method},
          {"weights", drl::vector_to_json(m.weights.weights())},
          {"group_labels", src.labels()},
          {"objective", m.solution.objective}};
}

int cmd_fit(CLI::App* cmd, FitFlags& f) {
  const drl::FitConfig c = resolve_fit(cmd, f, "fit");
  const Inputs in = load_inputs(f);
  const drl::DRLModel m = f.plugin ? drl::fit_plugin_drl(in.source.groups, in.target, c)
                                   : drl::fit_drl(in.source.groups, in.target, c);
  json j = drl::to_json(m);
  j["config"] = drl::to_json(c);
  j["feature_names"] = in.source.feature_names;
  write_json_file(f.out, j);
  std::cout << weights_summary(m, in.source).dump() << '\n';
  return kExitOk;
}

int cmd_federate(CLI::App* cmd, FitFlags& f) {
  const drl::FitConfig c = resolve_fit(cmd, f, "federate");
  drl::require(!f.plugin, ErrorKind::validation, "federate runs the bias-corrected estimator only");
  const Inputs in = load_inputs(f);
  const auto res = drl::run_protocol(in.source.groups, in.target, c);
  const auto audit = drl::audit_privacy(res.transcript, in.source.groups);
  json j = drl::to_json(res.model);
  j["config"] = drl::to_json(c);
  j["feature_names"] = in.source.feature_names;
  write_json_file(f.out, j);
  const std::string transcript = f.transcript.empty() ? f.out + ".transcript.jsonl" : f.transcript;
  res.transcript.write_jsonl(transcript);
  const std::string audit_path = f.audit.empty() ? f.out + ".audit.json" : f.audit;
  write_json_file(audit_path, drl::to_json(audit));
  json summary = weights_summary(res.model, in.source);
  summary["audit_passed"] = audit.passed;
  summary["messages"] = res.transcript.messages.size();
  summary["total_bytes"] = audit.total_bytes;
  std::cout << summary.dump() << '\n';
  if (!audit.passed)
    drl::fail(ErrorKind::validation, "privacy audit failed: " + audit.violations.front().detail);
  return kExitOk;
}

drl::DRLModel load_model(const std::string& path) {
  try {
    return drl::model_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    drl::fail(ErrorKind::schema, path + ": " + e.what());
  }
}

int cmd_predict(const std::string& model_path, const std::string& x_path, const std::string& out) {
  std::cerr << "resolved-config: "
            << json{{"command", "predict"},
                    {"config", {{"model", model_path}, {"x", x_path}, {"out", out}}}}
                   .dump()
            << '\n';
  const drl::DRLModel m = load_model(model_path);
  const drl::TargetSample x = drl::ingest_target_csv(x_path, m.p());
  const drl::Vector pred = m.predict(x.covariates);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    drl::require(static_cast<bool>(file), ErrorKind::validation, "cannot write '" + out + "'");
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << "prediction\n";
  for (drl::Index i = 0; i < pred.size(); ++i) os << drl::csv_detail::format_double(pred(i)) << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& outcome_column, const std::string& group_column) {
  std::cerr << "resolved-config: "
            << json{{"command", "evaluate"},
                    {"config",
                     {{"model", model_path},
                      {"data", data_path},
                      {"outcome_column", outcome_column},
                      {"group_column", group_column}}}}
                   .dump()
            << '\n';
  const drl::DRLModel m = load_model(model_path);
  const auto table = drl::csv_detail::read_numeric(data_path);
  const auto ycol = drl::csv_detail::column_index(table, outcome_column, data_path);
  std::optional<std::size_t> gcol;
  if (!group_column.empty())
    gcol = drl::csv_detail::column_index(table, group_column, data_path);
  std::vector<std::size_t> xcols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != ycol && (!gcol || c != *gcol)) xcols.push_back(c);
  drl::require(static_cast<drl::Index>(xcols.size()) == m.p(), ErrorKind::shape,
               data_path + " has " + std::to_string(xcols.size()) + " covariates, model expects " +
                   std::to_string(m.p()));
  const auto n = static_cast<drl::Index>(table.rows.size());
  drl::Matrix x(n, m.p());
  drl::Vector y(n);
  for (drl::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t c = 0; c < xcols.size(); ++c) x(i, static_cast<drl::Index>(c)) = row[xcols[c]];
    y(i) = row[ycol];
  }
  const drl::Vector pred = m.predict(x);
  json out = {{"reward", drl::empirical_reward(pred, y).reward}, {"n_eval", n}};
  if (gcol) {
    std::map<long long, std::vector<drl::Index>> by;
    for (drl::Index i = 0; i < n; ++i)
      by[static_cast<long long>(table.rows[static_cast<std::size_t>(i)][*gcol])].push_back(i);
    json per = json::object();
    double worst = std::numeric_limits<double>::infinity();
    long long worst_label = 0;
    for (const auto& [label, rows] : by) {
      drl::Vector p(static_cast<drl::Index>(rows.size())), yy(p.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        p(static_cast<drl::Index>(k)) = pred(rows[k]);
        yy(static_cast<drl::Index>(k)) = y(rows[k]);
      }
      const double r = drl::empirical_reward(p, yy).reward;
      per[std::to_string(label)] = r;
      if (r < worst) {
        worst = r;
        worst_label = label;
      }
    }
    out["per_group"] = per;
    out["worst_group"] = {{"label", worst_label}, {"reward", worst}};
  }
  std::cout << out.dump() << '\n';
  return kExitOk;
}

struct ExperimentFlags {
  std::string name, out = "results", scale = "ci", config;
  int reps = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<std::string> set;
  bool list = false;
};

int cmd_experiment(CLI::App* cmd, ExperimentFlags& f) {
  if (f.list) {
    std::cout << drl::registry_manifest().dump(2) << '\n';
    return kExitOk;
  }
  drl::require(!f.name.empty(), ErrorKind::validation, "experiment name required (see --list)");
  Resolver r(cmd, f.config);
  r.resolve("reps", f.reps);
  r.resolve("seed", f.seed);
  r.resolve("scale", f.scale);
  r.resolve("threads", f.threads);
  r.resolve("out", f.out);
  drl::ExperimentOptions opt;
  opt.reps = f.reps;
  opt.seed = f.seed;
  opt.scale = drl::scale_from_string(f.scale);
  opt.threads = f.threads;
  if (!f.config.empty()) {
    const json file = read_json_file(f.config);
    if (file.contains("overrides")) opt.overrides = file.at("overrides");
  }
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    drl::require(eq != std::string::npos, ErrorKind::validation, "--set expects key=value");
    json v;
    try {
      v = json::parse(kv.substr(eq + 1));
    } catch (const json::exception&) {
      v = kv.substr(eq + 1);
    }
    opt.overrides[kv.substr(0, eq)] = v;
  }
  std::cerr << "resolved-config: "
            << json{{"command", "experiment"},
                    {"name", f.name},
                    {"reps", f.reps},
                    {"seed", f.seed},
                    {"scale", f.scale},
                    {"threads", f.threads},
                    {"out", f.out},
                    {"overrides", opt.overrides}}
                   .dump()
            << '\n';
  const auto res = drl::run_experiment(f.name, opt);
  for (const auto& path : drl::write_result(res, f.out)) std::cout << path << '\n';
  return kExitOk;
}

int report(const drl::Error& e) {
  std::string msg = e.what();
  for (auto& ch : msg)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: " << drl::to_string(e.kind()) << ": " << msg << '\n';
  return e.is_numeric() || e.kind() == ErrorKind::internal ? kExitNumeric : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group distributionally robust learning"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print version and build fingerprint");

  FitFlags fit, fed;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a robust aggregate model");
  add_fit_flags(fit_cmd, fit);
  auto* fed_cmd = app.add_subcommand("federate", "Fit through the simulated multi-site protocol");
  add_fit_flags(fed_cmd, fed);
  fed_cmd->add_option("--transcript", fed.transcript, "Transcript JSONL path");
  fed_cmd->add_option("--audit", fed.audit, "Privacy audit JSON path");

  std::string model_path, data_path, out_path, outcome_column = "y", group_column;
  auto* pred_cmd = app.add_subcommand("predict", "Predict with a saved model");
  pred_cmd->add_option("model", model_path, "Model JSON")->required();
  pred_cmd->add_option("x", data_path, "Covariate CSV")->required();
  pred_cmd->add_option("--out", out_path, "Prediction CSV (stdout when omitted)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Reward of a saved model on labeled data");
  eval_cmd->add_option("model", model_path, "Model JSON")->required();
  eval_cmd->add_option("data", data_path, "Labeled CSV")->required();
  eval_cmd->add_option("--outcome-column", outcome_column, "Outcome column");
  eval_cmd->add_option("--group-column", group_column, "Optional group column");

  ExperimentFlags exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a registered simulation experiment");
  exp_cmd->add_option("name", exp.name, "Experiment name");
  exp_cmd->add_flag("--list", exp.list, "List registered experiments");
  exp_cmd->add_option("--reps", exp.reps, "Replications (0 = scale default)");
  exp_cmd->add_option("--seed", exp.seed, "Root seed");
  exp_cmd->add_option("--scale", exp.scale, "full | ci");
  exp_cmd->add_option("--out", exp.out, "Output directory");
  exp_cmd->add_option("--threads", exp.threads, "Worker cap (0 = all cores)");
  exp_cmd->add_option("--config", exp.config, "JSON config file; flags override it");
  exp_cmd->add_option("--set", exp.set, "Override key=value (value parsed as JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: usage: " << msg << '\n';
    return kExitInvalid;
  }

  if (version) {
    std::cout << "drl " << drl::kVersion << " build " << build_fingerprint() << '\n';
    return kExitOk;
  }
  try {
    if (*fit_cmd) return cmd_fit(fit_cmd, fit);
    if (*fed_cmd) return cmd_federate(fed_cmd, fed);
    if (*pred_cmd) return cmd_predict(model_path, data_path, out_path);
    if (*eval_cmd) return cmd_evaluate(model_path, data_path, outcome_column, group_column);
    if (*exp_cmd) return cmd_experiment(exp_cmd, exp);
    std::cout << app.help();
    return kExitInvalid;
  } catch (const drl::Error& e) {
    return report(e);
  } catch (const nlohmann::json::exception& e) {
    return report(drl::Error(ErrorKind::schema, e.what()));
  } catch (const std::exception& e) {
    return report(drl::Error(ErrorKind::internal, e.what()));
  }
}
