#include "posp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace posp::sim {
namespace {

using nlohmann::json;
using protocol::ExecutorStrategy;
using protocol::OrchestratorStrategy;

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(const std::string& text, const std::array<Enum, N>& values) {
  for (Enum v : values) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

constexpr std::array kExecutorStrategies = {
    ExecutorStrategy::honest,       ExecutorStrategy::always_fraud,
    ExecutorStrategy::fraud_with_probability, ExecutorStrategy::collude,
    ExecutorStrategy::unresponsive, ExecutorStrategy::free_rider};
constexpr std::array kOrchestratorStrategies = {
    OrchestratorStrategy::honest, OrchestratorStrategy::withhold, OrchestratorStrategy::equivocate,
    OrchestratorStrategy::leak};
constexpr std::array kCorruptModes = {model::CorruptMode::flip_last_bit, model::CorruptMode::constant,
                                      model::CorruptMode::offset};

/// Typed field access that records problems instead of throwing.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& errs)
      : obj_(obj), path_(std::move(path)), errs_(errs) {
    if (!obj_.is_object()) errs_.push_back(path_ + " must be an object");
  }

  ~Reader() {
    if (!obj_.is_object()) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!used_.contains(key)) errs_.push_back(where(key) + ": unknown key");
    }
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return obj_.is_object() && obj_.contains(key);
  }

  const json* raw(const std::string& key) {
    return has(key) ? &obj_.at(key) : nullptr;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const json* v = raw(key);
    if (v == nullptr) return fallback;
    return convert<T>(*v, key).value_or(fallback);
  }

  template <typename T>
  std::optional<T> get_opt(const std::string& key) {
    const json* v = raw(key);
    if (v == nullptr) return std::nullopt;
    return convert<T>(*v, key);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }
  std::vector<std::string>& errors() { return errs_; }

 private:
  template <typename T>
  std::optional<T> convert(const json& v, const std::string& key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (v.is_boolean()) return v.get<bool>();
      errs_.push_back(where(key) + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (v.is_string()) return v.get<std::string>();
      errs_.push_back(where(key) + " must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (v.is_number()) return v.get<double>();
      errs_.push_back(where(key) + " must be a number");
    } else {
      if (v.is_number_unsigned() ||
          (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        const auto u = v.get<std::uint64_t>();
        if (u <= std::numeric_limits<T>::max()) return static_cast<T>(u);
      }
      errs_.push_back(where(key) + " must be a non-negative integer in range");
    }
    return std::nullopt;
  }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& errs_;
  std::set<std::string> used_;
};

Amount read_tokens(Reader& r, const std::string& key, Amount fallback) {
  auto v = r.get_opt<double>(key);
  if (!v) return fallback;
  if (!std::isfinite(*v) || std::fabs(*v) > 1e12) {
    r.errors().push_back(r.where(key) + " is out of range");
    return fallback;
  }
  return protocol::to_units(*v);
}

void parse_adversaries(const json& node, ScenarioConfig& cfg, std::vector<std::string>& errs) {
  Reader r(node, "adversaries", errs);
  cfg.byzantine_fraction = r.get<double>("r", 0.0);
  if (const json* list = r.raw("executors")) {
    if (!list->is_array()) {
      errs.emplace_back("adversaries.executors must be an array");
    } else {
      for (std::size_t k = 0; k < list->size(); ++k) {
        Reader e((*list)[k], "adversaries.executors[" + std::to_string(k) + "]", errs);
        ExecutorGroupSpec spec;
        const auto name = e.get<std::string>("strategy", "always_fraud");
        if (auto s = parse_enum(name, kExecutorStrategies)) spec.strategy = *s;
        else errs.push_back(e.where("strategy") + ": unknown strategy '" + name + "'");
        spec.count = e.get_opt<std::uint32_t>("count");
        spec.q = e.get<double>("q", 1.0);
        spec.group = e.get_opt<std::uint32_t>("group");
        const auto mode = e.get<std::string>("corrupt", "flip_last_bit");
        if (auto m = parse_enum(mode, kCorruptModes)) spec.corrupt = *m;
        else errs.push_back(e.where("corrupt") + ": unknown mode '" + mode + "'");
        cfg.executor_adversaries.push_back(spec);
      }
    }
  }
  if (const json* list = r.raw("orchestrators")) {
    if (!list->is_array()) {
      errs.emplace_back("adversaries.orchestrators must be an array");
    } else {
      for (std::size_t k = 0; k < list->size(); ++k) {
        Reader o((*list)[k], "adversaries.orchestrators[" + std::to_string(k) + "]", errs);
        OrchestratorGroupSpec spec;
        const auto name = o.get<std::string>("strategy", "withhold");
        if (auto s = parse_enum(name, kOrchestratorStrategies)) spec.strategy = *s;
        else errs.push_back(o.where("strategy") + ": unknown strategy '" + name + "'");
        spec.count = o.get<std::uint32_t>("count", 1);
        cfg.orchestrator_adversaries.push_back(spec);
      }
    }
  }
  if (const json* list = r.raw("users")) {
    if (!list->is_array()) {
      errs.emplace_back("adversaries.users must be an array");
    } else {
      for (std::size_t k = 0; k < list->size(); ++k) {
        Reader u((*list)[k], "adversaries.users[" + std::to_string(k) + "]", errs);
        UserSpec spec;
        spec.user = u.get<std::uint32_t>("user", 0);
        if (auto e = u.get_opt<std::uint32_t>("collude_with")) spec.collude_with = *e;
        else errs.push_back(u.where("collude_with") + " is required");
        cfg.user_adversaries.push_back(spec);
      }
    }
  }
}

ScenarioConfig parse_document(const json& doc, std::vector<std::string>& errs) {
  ScenarioConfig cfg;
  Reader top(doc, "scenario", errs);
  if (!doc.is_object()) return cfg;

  if (auto seed = top.get_opt<std::string>("seed")) {
    try {
      cfg.master_seed = crypto::blob_from_hex<crypto::Seed>(*seed);
    } catch (const std::invalid_argument& e) {
      errs.push_back(std::string("scenario.seed: ") + e.what());
    }
  } else {
    errs.emplace_back("scenario.seed is required (64 hex characters)");
  }
  cfg.requests = top.get<std::uint64_t>("requests", 0);
  cfg.users = top.get<std::uint32_t>("users", 1);
  cfg.arrival_interval = top.get<std::uint64_t>("arrival_interval", 1);
  cfg.max_epochs = top.get<std::uint64_t>("max_epochs", 0);

  if (const json* m = top.raw("model")) {
    Reader r(*m, "model", errs);
    if (const json* dims = r.raw("dims")) {
      if (!dims->is_array()) {
        errs.emplace_back("model.dims must be an array of positive integers");
      } else {
        cfg.model_dims.clear();
        for (const auto& d : *dims) {
          if (!d.is_number_unsigned()) {
            errs.emplace_back("model.dims must be an array of positive integers");
            break;
          }
          cfg.model_dims.push_back(d.get<std::size_t>());
        }
      }
    }
  }

  protocol::NetworkConfig& net = cfg.network;
  if (const json* n = top.raw("network")) {
    Reader r(*n, "network", errs);
    net.executors = r.get<std::uint32_t>("N", net.executors);
    net.fault_bound = r.get<std::uint32_t>("f", net.fault_bound);
    net.challenge_prob = r.get<double>("p", net.challenge_prob);
    net.assert_timeout = r.get<std::uint32_t>("T_assert", net.assert_timeout);
    net.validate_timeout = r.get<std::uint32_t>("T_validate", net.validate_timeout);
    net.epoch_ticks = r.get<std::uint64_t>("epoch_ticks", net.epoch_ticks);
    net.message_delay = r.get<std::uint64_t>("message_delay", net.message_delay);
    net.settle_every = r.get<std::uint32_t>("settle_every", net.settle_every);
  }

  net.reward = protocol::to_units(1.2);
  net.slash = protocol::to_units(150.0);
  net.compute_cost = protocol::to_units(1.0);
  std::optional<Amount> payment;
  std::optional<Amount> penalty;
  if (const json* e = top.raw("economics")) {
    Reader r(*e, "economics", errs);
    net.reward = read_tokens(r, "R", net.reward);
    net.slash = read_tokens(r, "S", net.slash);
    net.compute_cost = read_tokens(r, "C", net.compute_cost);
    if (r.has("B")) payment = read_tokens(r, "B", 0);
    if (r.has("timeout_penalty")) penalty = read_tokens(r, "timeout_penalty", 0);
  }
  net.payment = payment.value_or(3 * net.reward);
  net.timeout_penalty = penalty.value_or(net.slash / 10);

  if (const json* a = top.raw("adversaries")) parse_adversaries(*a, cfg, errs);
  if (const json* m = top.raw("metrics")) {
    Reader r(*m, "metrics", errs);
    cfg.trace = r.get<bool>("trace", true);
  }
  return cfg;
}

json tokens(Amount units) { return protocol::to_tokens(units); }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::invalid_argument(join(errors)), errors_(std::move(errors)) {}

std::string_view to_string(ExecutorStrategy s) {
  switch (s) {
    case ExecutorStrategy::honest: return "honest";
    case ExecutorStrategy::always_fraud: return "always_fraud";
    case ExecutorStrategy::fraud_with_probability: return "fraud_with_probability";
    case ExecutorStrategy::collude: return "collude";
    case ExecutorStrategy::unresponsive: return "unresponsive";
    case ExecutorStrategy::free_rider: return "free_rider";
  }
  return "?";
}

std::string_view to_string(OrchestratorStrategy s) {
  switch (s) {
    case OrchestratorStrategy::honest: return "honest";
    case OrchestratorStrategy::withhold: return "withhold";
    case OrchestratorStrategy::equivocate: return "equivocate";
    case OrchestratorStrategy::leak: return "leak";
  }
  return "?";
}

std::string_view to_string(model::CorruptMode m) {
  switch (m) {
    case model::CorruptMode::flip_last_bit: return "flip_last_bit";
    case model::CorruptMode::constant: return "constant";
    case model::CorruptMode::offset: return "offset";
  }
  return "?";
}

std::uint32_t executor_budget(double r, std::uint32_t n) {
  return static_cast<std::uint32_t>(std::floor(r * n + 1e-9));
}

std::vector<std::string> validation_errors(const ScenarioConfig& cfg) {
  std::vector<std::string> errs = protocol::validation_errors(cfg.network);
  for (auto& e : errs) e = "network/economics: " + e;
  if (cfg.requests > 10'000'000) errs.emplace_back("requests must be <= 10^7");
  if (cfg.users < 1) errs.emplace_back("users must be >= 1");
  if (cfg.arrival_interval < 1) errs.emplace_back("arrival_interval must be >= 1 tick");
  if (cfg.model_dims.size() < 2) errs.emplace_back("model.dims needs at least two entries");
  for (std::size_t d : cfg.model_dims) {
    if (d < 1 || d > 4096) {
      errs.emplace_back("model.dims entries must lie in [1, 4096]");
      break;
    }
  }
  if (!(cfg.byzantine_fraction >= 0.0 && cfg.byzantine_fraction < 1.0)) {
    errs.emplace_back("adversaries.r must lie in [0, 1)");
  }
  int open_counts = 0;
  for (const auto& spec : cfg.executor_adversaries) {
    if (!(spec.q >= 0.0 && spec.q <= 1.0)) errs.emplace_back("adversaries.executors q must lie in [0, 1]");
    if (!spec.count) ++open_counts;
  }
  if (open_counts > 1) errs.emplace_back("at most one executor adversary entry may omit count");
  for (const auto& u : cfg.user_adversaries) {
    if (u.user >= cfg.users) errs.emplace_back("adversaries.users: user index out of range");
    if (u.collude_with >= cfg.network.executors) {
      errs.emplace_back("adversaries.users: collude_with executor out of range");
    }
  }
  return errs;
}

void require_valid(const ScenarioConfig& cfg) {
  auto errs = validation_errors(cfg);
  if (!errs.empty()) throw ConfigError(std::move(errs));
}

ScenarioConfig parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  std::vector<std::string> errs;
  ScenarioConfig cfg = parse_document(doc, errs);
  if (!errs.empty()) throw ConfigError(std::move(errs));
  require_valid(cfg);
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read " + path});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  const protocol::NetworkConfig& n = cfg.network;
  json doc;
  doc["seed"] = crypto::to_hex(cfg.master_seed);
  doc["requests"] = cfg.requests;
  doc["users"] = cfg.users;
  doc["arrival_interval"] = cfg.arrival_interval;
  if (cfg.max_epochs != 0) doc["max_epochs"] = cfg.max_epochs;
  doc["model"]["dims"] = cfg.model_dims;
  doc["network"] = {{"N", n.executors},          {"f", n.fault_bound},
                    {"p", n.challenge_prob},     {"T_assert", n.assert_timeout},
                    {"T_validate", n.validate_timeout}, {"epoch_ticks", n.epoch_ticks},
                    {"message_delay", n.message_delay}, {"settle_every", n.settle_every}};
  doc["economics"] = {{"B", tokens(n.payment)},
                      {"R", tokens(n.reward)},
                      {"S", tokens(n.slash)},
                      {"C", tokens(n.compute_cost)},
                      {"timeout_penalty", tokens(n.timeout_penalty)}};
  json adv;
  adv["r"] = cfg.byzantine_fraction;
  adv["executors"] = json::array();
  for (const auto& s : cfg.executor_adversaries) {
    json e = {{"strategy", to_string(s.strategy)}, {"q", s.q}, {"corrupt", to_string(s.corrupt)}};
    if (s.count) e["count"] = *s.count;
    if (s.group) e["group"] = *s.group;
    adv["executors"].push_back(e);
  }
  adv["orchestrators"] = json::array();
  for (const auto& s : cfg.orchestrator_adversaries) {
    adv["orchestrators"].push_back({{"strategy", to_string(s.strategy)}, {"count", s.count}});
  }
  adv["users"] = json::array();
  for (const auto& s : cfg.user_adversaries) {
    adv["users"].push_back({{"user", s.user}, {"collude_with", s.collude_with}});
  }
  doc["adversaries"] = adv;
  doc["metrics"] = {{"trace", cfg.trace}};
  return doc.dump(2) + "\n";
}

std::vector<ExecutorId> BehaviorTable::byzantine_executors() const {
  std::vector<ExecutorId> out;
  for (ExecutorId e = 0; e < executors.size(); ++e) {
    if (executors[e].byzantine()) out.push_back(e);
  }
  return out;
}

std::size_t BehaviorTable::byzantine_orchestrators() const {
  return static_cast<std::size_t>(std::count_if(orchestrators.begin(), orchestrators.end(),
                                                [](const auto& b) { return b.byzantine(); }));
}

namespace {

std::vector<std::uint32_t> permutation(const crypto::Seed& seed, std::uint32_t n) {
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t k = 0; k < n; ++k) order[k] = k;
  for (std::uint32_t k = 0; k + 1 < n; ++k) {
    const auto pick = k + static_cast<std::uint32_t>(crypto::bucket(seed, crypto::be64(k), n - k));
    std::swap(order[k], order[pick]);
  }
  return order;
}

}  // namespace

BehaviorTable assign_adversaries(const ScenarioConfig& cfg) {
  require_valid(cfg);
  const std::uint32_t n = cfg.network.executors;
  const std::uint32_t budget = executor_budget(cfg.byzantine_fraction, n);
  BehaviorTable table;
  table.executors.resize(n);
  table.orchestrators.resize(cfg.network.committee_size());
  table.users.resize(cfg.users);

  std::uint64_t fixed = 0;
  for (const auto& spec : cfg.executor_adversaries) fixed += spec.count.value_or(0);
  if (fixed > budget) {
    throw ConfigError({"executor adversaries (" + std::to_string(fixed) + ") exceed floor(r N) = " +
                       std::to_string(budget)});
  }
  const auto order = permutation(crypto::derive_seed(cfg.master_seed, "executor-adversaries"), n);
  std::uint32_t next = 0;
  for (const auto& spec : cfg.executor_adversaries) {
    const std::uint32_t count = spec.count.value_or(budget - static_cast<std::uint32_t>(fixed));
    for (std::uint32_t k = 0; k < count; ++k) {
      auto& b = table.executors[order[next++]];
      b.strategy = spec.strategy;
      b.q = spec.q;
      b.group = spec.group;
      b.corrupt = spec.corrupt;
    }
  }
  for (const auto& u : cfg.user_adversaries) {
    table.users[u.user].collude_with = u.collude_with;
    table.executors[u.collude_with].user_partner = true;
  }
  const auto byzantine = table.byzantine_executors();
  if (byzantine.size() > budget) {
    throw ConfigError({"Byzantine executors (" + std::to_string(byzantine.size()) +
                       ") exceed floor(r N) = " + std::to_string(budget)});
  }

  std::uint32_t bad_orchestrators = 0;
  for (const auto& spec : cfg.orchestrator_adversaries) {
    if (spec.strategy != protocol::OrchestratorStrategy::honest) bad_orchestrators += spec.count;
  }
  if (bad_orchestrators > cfg.network.fault_bound) {
    throw ConfigError({"Byzantine orchestrators (" + std::to_string(bad_orchestrators) +
                       ") exceed f = " + std::to_string(cfg.network.fault_bound)});
  }
  const auto committee = permutation(crypto::derive_seed(cfg.master_seed, "orchestrator-adversaries"),
                                     cfg.network.committee_size());
  std::uint32_t slot = 0;
  const std::set<ExecutorId> targets(byzantine.begin(), byzantine.end());
  for (const auto& spec : cfg.orchestrator_adversaries) {
    if (spec.strategy == protocol::OrchestratorStrategy::honest) continue;
    for (std::uint32_t k = 0; k < spec.count; ++k) {
      auto& b = table.orchestrators[committee[slot++]];
      b.strategy = spec.strategy;
      if (spec.strategy == protocol::OrchestratorStrategy::leak) b.leak_targets = targets;
    }
  }
  return table;
}

}  // namespace posp::sim
