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

#pragma once

// In-process simulation of the multi-site protocol. Source sites and the
// target site are actors that only see serialized messages from each other;
// a coordinator runs them phase by phase with a barrier in between.

#include "drl/core.hpp"
#include "drl/data.hpp"
#include "drl/density_ratio.hpp"
#include "drl/estimator.hpp"
#include "drl/learners.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace drl {

enum class MessageKind {
  predictor_bundle,
  ratio_bundle,
  bias_terms,
  target_covariates,
  gamma_request,
  weight_result
};

inline std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::predictor_bundle: return "predictor_bundle";
    case MessageKind::ratio_bundle: return "ratio_bundle";
    case MessageKind::bias_terms: return "bias_terms";
    case MessageKind::target_covariates: return "target_covariates";
    case MessageKind::gamma_request: return "gamma_request";
    case MessageKind::weight_result: return "weight_result";
  }
  return "?";
}

enum class Phase { local_fits, broadcast, bias_terms, transmit, assembly, weight_solve };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::local_fits: return "local_fits";
    case Phase::broadcast: return "broadcast";
    case Phase::bias_terms: return "bias_terms";
    case Phase::transmit: return "transmit";
    case Phase::assembly: return "assembly";
    case Phase::weight_solve: return "weight_solve";
  }
  return "?";
}

inline constexpr const char* kTargetSite = "target";
inline constexpr const char* kAllSites = "all";

inline std::string source_site(int gid) { return "source-" + std::to_string(gid); }

/// One immutable serialized message. `receiver` is a site id or "all" (every
/// site except the sender).
struct SiteMessage {
  MessageKind kind = MessageKind::predictor_bundle;
  std::string sender;
  std::string receiver;
  std::string scope;  // full | A | B, empty when not scoped
  Phase phase = Phase::local_fits;
  std::string payload;

  std::size_t byte_size() const { return payload.size(); }
  nlohmann::json body() const { return nlohmann::json::parse(payload); }
};

struct TranscriptLog {
  std::vector<SiteMessage> messages;
  std::vector<Phase> barriers;  // phases in the order the coordinator closed them

  std::size_t count(MessageKind k) const {
    return static_cast<std::size_t>(
        std::count_if(messages.begin(), messages.end(), [&](const auto& m) { return m.kind == k; }));
  }

  /// Phases of the messages in the order they first appear.
  std::vector<Phase> phase_sequence() const {
    std::vector<Phase> seq;
    for (const auto& m : messages)
      if (seq.empty() || seq.back() != m.phase) seq.push_back(m.phase);
    return seq;
  }

  std::size_t total_bytes() const {
    std::size_t s = 0;
    for (const auto& m : messages) s += m.byte_size();
    return s;
  }

  static nlohmann::json metadata(const SiteMessage& m, std::size_t seq) {
    return {{"seq", seq},
            {"phase", std::string(to_string(m.phase))},
            {"kind", std::string(to_string(m.kind))},
            {"sender", m.sender},
            {"receiver", m.receiver},
            {"scope", m.scope},
            {"byte_size", m.byte_size()}};
  }

  /// JSON lines, one metadata record per message.
  void write_jsonl(const std::string& path) const {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::validation, "cannot write '" + path + "'");
    for (std::size_t i = 0; i < messages.size(); ++i) out << metadata(messages[i], i).dump() << '\n';
  }
};

/// Checks a message payload against its declared kind.
inline void validate_message(const SiteMessage& m) {
  nlohmann::json j;
  try {
    j = m.body();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, "message payload is not JSON: " + std::string(e.what()));
  }
  try {
    switch (m.kind) {
      case MessageKind::predictor_bundle: (void)predictor_from_json(j); break;
      case MessageKind::ratio_bundle: (void)ratio_from_json(j); break;
      case MessageKind::bias_terms:
        require(j.is_object() && j.contains("col_a") && j.contains("col_b") && j.contains("group"),
                ErrorKind::validation, "bias_terms payload lacks col_a/col_b/group");
        break;
      case MessageKind::target_covariates: (void)matrix_from_json(j); break;
      case MessageKind::gamma_request: break;
      case MessageKind::weight_result: (void)vector_from_json(j.at("weights")); break;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string(to_string(m.kind)) + " payload: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

struct ProtocolOptions {
  /// Called on each source site during the transmit phase with the messages
  /// it is about to send; tests use it to plant a dishonest message.
  std::function<void(const SourceGroup&, std::vector<SiteMessage>&)> tamper;
};

struct ProtocolResult {
  DRLModel model;
  TranscriptLog transcript;
};

namespace federated_detail {

inline const char* scope_tag(FitScope s) {
  return s == FitScope::full ? "full" : (s == FitScope::half_a ? "A" : "B");
}

/// Per-site mailbox; posting is thread safe, reading happens after the
/// barrier so no lock is needed there.
class Network {
 public:
  explicit Network(std::vector<std::string> sites) : sites_(std::move(sites)) {
    for (const auto& s : sites_) inbox_[s];
  }

  void post(SiteMessage m) {
    std::lock_guard<std::mutex> lock(mu_);
    pending_.push_back(std::move(m));
  }

  /// Barrier: validates and delivers the phase's messages in a fixed order
  /// (sender, then post order per sender), appends them to the transcript.
  void deliver(TranscriptLog& log) {
    std::stable_sort(pending_.begin(), pending_.end(), [&](const auto& a, const auto& b) {
      return rank(a.sender) < rank(b.sender);
    });
    for (auto& m : pending_) {
      try {
        validate_message(m);
      } catch (const Error& e) {
        throw Error(e.kind(), "phase " + std::string(to_string(m.phase)) + ": message from " +
                                  m.sender + ": " + e.what());
      }
      for (const auto& s : sites_) {
        if (s == m.sender) continue;
        if (m.receiver == kAllSites || m.receiver == s) inbox_[s].push_back(m);
      }
      log.messages.push_back(std::move(m));
    }
    pending_.clear();
  }

  const std::vector<SiteMessage>& inbox(const std::string& site) const { return inbox_.at(site); }

 private:
  std::size_t rank(const std::string& site) const {
    return static_cast<std::size_t>(std::find(sites_.begin(), sites_.end(), site) - sites_.begin());
  }

  std::vector<std::string> sites_;
  std::map<std::string, std::vector<SiteMessage>> inbox_;
  std::vector<SiteMessage> pending_;
  std::mutex mu_;
};

/// Runs fn(j) for every source site concurrently; a failure aborts the
/// phase and names it.
template <class Fn>
void run_sites(Phase phase, std::size_t l, Fn&& fn) {
  std::vector<std::exception_ptr> errors(l);
  std::vector<std::thread> actors;
  actors.reserve(l);
  for (std::size_t j = 0; j < l; ++j)
    actors.emplace_back([&, j] {
      try {
        fn(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  for (auto& t : actors) t.join();
  for (std::size_t j = 0; j < l; ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const Error& e) {
      throw Error(e.kind(), "phase " + std::string(to_string(phase)) + ": site " +
                                std::to_string(j) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::internal, "phase " + std::string(to_string(phase)) + ": site " +
                                           std::to_string(j) + ": " + e.what());
    }
  }
}

template <class Fn>
auto run_target(Phase phase, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "phase " + std::string(to_string(phase)) + ": target: " + e.what());
  }
}

}  // namespace federated_detail

/// Runs the protocol with one actor per source group plus the target. The
/// numerical steps are the ones fit_drl runs, on deserialized inputs, so the
/// weights are bit-identical to the monolithic estimator.
inline ProtocolResult run_protocol(const std::vector<SourceGroup>& input,
                                   const TargetSample& target, const FitConfig& c,
                                   const ProtocolOptions& opt = {}) {
  using namespace federated_detail;
  check_groups(input, &target);
  const std::size_t l = input.size();
  std::vector<SourceGroup> groups;
  for (const auto& g : input) groups.push_back(prepare_group(g, c));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < l; ++j) names.push_back(source_site(static_cast<int>(j)));
  names.push_back(kTargetSite);

  std::map<int, std::size_t> position;
  for (std::size_t j = 0; j < l; ++j) position[groups[j].group_id()] = j;
  auto slot = [&](const FittedPredictor& f) {
    const auto it = position.find(f.group_id());
    require(it != position.end(), ErrorKind::validation,
            "predictor bundle from unknown group " + std::to_string(f.group_id()));
    return it->second;
  };

  Network net(names);
  ProtocolResult res;
  const bool shift = c.shift != ShiftMode::none;

  // Local fits. Under covariate shift the target first ships its covariates
  // so that each site can fit its density ratios.
  std::vector<Matrix> site_target_x(l);
  if (shift) {
    net.post({MessageKind::target_covariates, kTargetSite, kAllSites, "", Phase::local_fits,
              matrix_to_json(target.covariates).dump()});
    net.deliver(res.transcript);
  }
  std::vector<SiteFits> sites(l);
  run_sites(Phase::local_fits, l, [&](std::size_t j) {
    const Matrix* tx = nullptr;
    if (shift) {
      for (const auto& m : net.inbox(names[j]))
        if (m.kind == MessageKind::target_covariates) site_target_x[j] = matrix_from_json(m.body());
      tx = &site_target_x[j];
    }
    sites[j] = fit_site(groups[j], tx, c);
  });
  res.transcript.barriers.push_back(Phase::local_fits);

  // Broadcast half fits (and ratio models) to every other site.
  run_sites(Phase::broadcast, l, [&](std::size_t j) {
    for (const auto* f : {&sites[j].half_a, &sites[j].half_b})
      net.post({MessageKind::predictor_bundle, names[j], kAllSites, scope_tag(f->scope()),
                Phase::broadcast, to_json(*f).dump()});
    if (shift)
      for (const auto* r : {&sites[j].ratio_a, &sites[j].ratio_b})
        net.post({MessageKind::ratio_bundle, names[j], kAllSites, scope_tag(r->scope),
                  Phase::broadcast, to_json(*r).dump()});
  });
  net.deliver(res.transcript);
  res.transcript.barriers.push_back(Phase::broadcast);

  // Each site rebuilds the half-fit lists from what it received plus its own.
  auto collect = [&](const std::string& site, std::size_t own, std::vector<FittedPredictor>& a,
                     std::vector<FittedPredictor>& b) {
    std::vector<std::optional<FittedPredictor>> oa(l), ob(l);
    if (own < l) {
      oa[own] = sites[own].half_a;
      ob[own] = sites[own].half_b;
    }
    for (const auto& m : net.inbox(site)) {
      if (m.kind != MessageKind::predictor_bundle || m.phase != Phase::broadcast) continue;
      FittedPredictor f = predictor_from_json(m.body());
      const std::size_t k = slot(f);
      (f.scope() == FitScope::half_a ? oa : ob)[k] = std::move(f);
    }
    for (std::size_t k = 0; k < l; ++k) {
      require(oa[k].has_value() && ob[k].has_value(), ErrorKind::validation,
              "missing half fits of group " + std::to_string(k) + " at " + site);
      a.push_back(*oa[k]);
      b.push_back(*ob[k]);
    }
  };

  std::vector<SiteBias> bias(l);
  run_sites(Phase::bias_terms, l, [&](std::size_t j) {
    std::vector<FittedPredictor> pa, pb;
    collect(names[j], j, pa, pb);
    bias[j] = site_bias_columns(pa, pb, groups[j], sites[j].ratio_a, sites[j].ratio_b,
                                static_cast<Index>(j), c.shift);
  });
  res.transcript.barriers.push_back(Phase::bias_terms);

  // Transmit: full fits and bias columns to the target.
  run_sites(Phase::transmit, l, [&](std::size_t j) {
    std::vector<SiteMessage> out;
    out.push_back({MessageKind::predictor_bundle, names[j], kTargetSite, "full", Phase::transmit,
                   to_json(sites[j].full).dump()});
    nlohmann::json b = {{"group", groups[j].group_id()},
                        {"col_a", vector_to_json(bias[j].col_a)},
                        {"col_b", vector_to_json(bias[j].col_b)}};
    out.push_back({MessageKind::bias_terms, names[j], kTargetSite, "", Phase::transmit, b.dump()});
    if (opt.tamper) opt.tamper(groups[j], out);
    for (auto& m : out) net.post(std::move(m));
  });
  net.deliver(res.transcript);
  res.transcript.barriers.push_back(Phase::transmit);

  // Assembly and weight solve at the target.
  res.model = run_target(Phase::assembly, [&] {
    std::vector<FittedPredictor> pa, pb;
    collect(kTargetSite, l, pa, pb);
    std::vector<std::optional<FittedPredictor>> full(l);
    std::vector<std::optional<SiteBias>> cols(l);
    for (const auto& m : net.inbox(kTargetSite)) {
      if (m.phase != Phase::transmit) continue;
      const auto j = m.body();
      if (m.kind == MessageKind::predictor_bundle && m.scope == "full") {
        FittedPredictor f = predictor_from_json(j);
        full[slot(f)] = std::move(f);
      } else if (m.kind == MessageKind::bias_terms) {
        const auto it = position.find(j.at("group").get<int>());
        require(it != position.end(), ErrorKind::validation,
                "bias terms from unknown group " + j.at("group").dump());
        // First delivery wins; extra messages stay in the transcript for the audit.
        auto& col = cols[it->second];
        if (!col) col = SiteBias{vector_from_json(j.at("col_a")), vector_from_json(j.at("col_b"))};
      }
    }
    std::vector<FittedPredictor> f;
    std::vector<SiteBias> b;
    for (std::size_t k = 0; k < l; ++k) {
      require(full[k].has_value() && cols[k].has_value(), ErrorKind::validation,
              "target is missing messages from group " + std::to_string(k));
      f.push_back(*full[k]);
      b.push_back(*cols[k]);
    }
    return assemble_drl(std::move(f), pa, pb, b, target, c);
  });
  res.transcript.barriers.push_back(Phase::assembly);
  run_target(Phase::weight_solve, [&] {
    net.post({MessageKind::weight_result, kTargetSite, kAllSites, "", Phase::weight_solve,
              nlohmann::json{{"weights", vector_to_json(res.model.weights.weights())}}.dump()});
    net.deliver(res.transcript);
    return 0;
  });
  res.transcript.barriers.push_back(Phase::weight_solve);
  return res;
}

// ---------------------------------------------------------------------------
// Privacy audit
// ---------------------------------------------------------------------------

struct PrivacyViolation {
  std::size_t message = 0;  // transcript index
  std::string kind;
  std::string sender;
  std::string detail;
};

struct AuditReport {
  bool passed = true;
  std::vector<PrivacyViolation> violations;
  std::map<std::string, std::size_t> edge_bytes;  // "sender->receiver"
  std::size_t total_bytes = 0;
};

namespace federated_detail {

inline void flatten_numbers(const nlohmann::json& j, std::vector<double>& out) {
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array() || j.is_object()) {
    for (const auto& v : j) flatten_numbers(v, out);
  }
}

inline std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v); }

/// A run of raw values that must not appear contiguously in any payload.
struct Needle {
  std::vector<double> values;
  std::string what;
};

}  // namespace federated_detail

/// Scans every payload except target_covariates for an exact contiguous
/// copy of a source covariate row (two consecutive rows when p = 1) or of
/// three consecutive outcomes of a group.
inline AuditReport audit_privacy(const TranscriptLog& log, const std::vector<SourceGroup>& groups) {
  using namespace federated_detail;
  std::vector<Needle> needles;
  for (const auto& g : groups) {
    const Matrix& x = g.covariates();
    const Vector& y = g.outcomes();
    const Index rows_per = x.cols() == 1 ? 2 : 1;
    for (Index i = 0; i + rows_per <= x.rows(); ++i) {
      Needle n;
      for (Index r = 0; r < rows_per; ++r)
        for (Index c = 0; c < x.cols(); ++c) n.values.push_back(x(i + r, c));
      n.what = "covariate row " + std::to_string(i) + " of group " + std::to_string(g.group_id());
      needles.push_back(std::move(n));
    }
    for (Index i = 0; i + 3 <= y.size(); ++i)
      needles.push_back({{y(i), y(i + 1), y(i + 2)},
                         "outcomes " + std::to_string(i) + ".." + std::to_string(i + 2) +
                             " of group " + std::to_string(g.group_id())});
  }
  std::unordered_multimap<std::uint64_t, std::size_t> by_first;
  for (std::size_t k = 0; k < needles.size(); ++k)
    by_first.emplace(bits(needles[k].values.front()), k);

  AuditReport rep;
  for (std::size_t mi = 0; mi < log.messages.size(); ++mi) {
    const auto& m = log.messages[mi];
    rep.edge_bytes[m.sender + "->" + m.receiver] += m.byte_size();
    rep.total_bytes += m.byte_size();
    if (m.kind == MessageKind::target_covariates) continue;
    std::vector<double> flat;
    flatten_numbers(m.body(), flat);
    bool hit = false;
    for (std::size_t i = 0; i < flat.size() && !hit; ++i) {
      const auto [lo, hi] = by_first.equal_range(bits(flat[i]));
      for (auto it = lo; it != hi && !hit; ++it) {
        const auto& nd = needles[it->second];
        if (i + nd.values.size() > flat.size()) continue;
        bool eq = true;
        for (std::size_t t = 1; t < nd.values.size() && eq; ++t)
          eq = bits(flat[i + t]) == bits(nd.values[t]);
        if (eq) {
          rep.violations.push_back({mi, std::string(to_string(m.kind)), m.sender,
                                    "payload embeds " + nd.what});
          hit = true;
        }
      }
    }
  }
  rep.passed = rep.violations.empty();
  return rep;
}

inline nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : r.violations)
    v.push_back({{"message", x.message}, {"kind", x.kind}, {"sender", x.sender},
                 {"detail", x.detail}});
  return {{"passed", r.passed}, {"violations", v}, {"edge_bytes", r.edge_bytes},
          {"total_bytes", r.total_bytes}};
}

}  // namespace drl
