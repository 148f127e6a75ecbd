#include "posp/simulator.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <variant>

namespace posp::sim {
namespace {

using protocol::Account;
using protocol::Address;
using protocol::Epoch;
using protocol::LedgerDelta;
using protocol::Message;
using protocol::NodeKind;
using protocol::Phase;
using protocol::RequestId;
using protocol::Timer;

std::string describe(const Address& a) {
  switch (a.kind) {
    case NodeKind::user: return "user:" + std::to_string(a.index);
    case NodeKind::orchestrator: return "orch:" + std::to_string(a.index);
    case NodeKind::executor: return "exec:" + std::to_string(a.index);
    case NodeKind::arbitration: return "arbitration";
    case NodeKind::settlement: return "settlement";
  }
  return "?";
}

class Simulation final : public protocol::NodeContext {
 public:
  Simulation(const ScenarioConfig& cfg, const World& world, const BehaviorTable& behaviors,
             const RunSeeds& seeds, const RunOptions& options)
      : cfg_(cfg),
        world_(world),
        behaviors_(behaviors),
        seeds_(seeds),
        options_(options),
        beacon_(seeds.beacon),
        arbitration_(cfg.network, world.pki, world.model, cache_),
        settlement_(cfg.network, world.pki, ledger_, &arbitration_, cache_) {
    const auto& net = cfg_.network;
    for (protocol::UserId u = 0; u < cfg_.users; ++u) {
      users_.emplace_back(u, world_.user_keys[u], behaviors_.users[u]);
    }
    std::optional<protocol::OrchestratorId> observer;
    for (protocol::OrchestratorId o = 0; o < net.committee_size(); ++o) {
      if (!observer && !behaviors_.orchestrators[o].byzantine()) observer = o;
    }
    for (protocol::OrchestratorId o = 0; o < net.committee_size(); ++o) {
      orchestrators_.emplace_back(o, world_.orchestrator_keys[o], behaviors_.orchestrators[o],
                                  observer == o);
    }
    for (ExecutorId e = 0; e < net.executors; ++e) {
      executors_.emplace_back(e, world_.executor_keys[e], seeds_.coins, behaviors_.executors[e],
                              world_.model, &board_);
    }
    const std::uint64_t per_user = (cfg_.requests + cfg_.users - 1) / cfg_.users;
    for (protocol::UserId u = 0; u < cfg_.users; ++u) {
      ledger_.fund(Account::user(u), net.payment * static_cast<Amount>(per_user));
    }
    for (ExecutorId e = 0; e < net.executors; ++e) ledger_.fund(Account::executor(e), net.slash);
    evaluations_.assign(net.executors, 0);
  }

  RunResult run() {
    const auto& net = cfg_.network;
    const Tick last_arrival = cfg_.requests == 0 ? 0 : 1 + (cfg_.requests - 1) * cfg_.arrival_interval;
    const std::uint64_t max_epochs =
        cfg_.max_epochs != 0 ? cfg_.max_epochs : net.epoch_of(last_arrival) + 1000;
    const Tick limit = max_epochs * net.epoch_ticks;
    if (cfg_.requests > 0) schedule_arrival(0);

    while (!heap_.empty()) {
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      Event ev = std::move(heap_.back());
      heap_.pop_back();
      if (ev.at > limit) break;
      now_ = ev.at;
      current_ = ++metrics_.events;
      if (options_.trace) hash_event(ev);
      if (options_.log == LogLevel::events) log_event(ev);
      dispatch(ev);
    }
    metrics_.end_tick = now_;
    return finish();
  }

  Tick now() const override { return now_; }
  const protocol::NetworkConfig& config() const override { return cfg_.network; }
  const protocol::Pki& pki() const override { return world_.pki; }
  crypto::VerifyCache& verifier() override { return cache_; }

  void send(Address from, Address to, Message msg, std::optional<Tick> delay) override {
    push({now_ + delay.value_or(cfg_.network.message_delay), next_seq_++, to, from, std::move(msg)});
  }

  void schedule(Address owner, Tick at, Timer timer) override {
    push({std::max(at, now_), next_seq_++, owner, owner, timer});
  }

  const crypto::Seed& beacon(Epoch t) override { return beacon_.get(t, epoch(), current_); }

  void observe_phase(const protocol::RequestLifecycle& life) override {
    auto& info = requests_.at(life.reqid);
    if (life.phase == Phase::asserted) info.accepted_event = current_;
    const auto& h = life.history;
    if ((life.phase == Phase::challenged || life.phase == Phase::unchallenged_done) && h.size() >= 2 &&
        h[h.size() - 2] == Phase::asserted) {
      const auto drawn = beacon_.drawn_at(*life.t_chal);
      if (!info.accepted_event || !drawn || *drawn < *info.accepted_event) {
        ++metrics_.causality_violations;
      }
    }
  }

  void observe_concluded(const protocol::RequestLifecycle& life,
                         const std::vector<LedgerDelta>& deltas) override {
    auto& info = requests_.at(life.reqid);
    ++metrics_.concluded;
    if (!protocol::is_valid_phase_path(life.history)) ++metrics_.phase_violations;
    if (protocol::audit_request(deltas, cfg_.network)) ++metrics_.conservation_violations;
    info.deltas = deltas;

    const model::Vector& truth = truth_of(info);
    const bool fraud = life.y_asserter && *life.y_asserter != truth;
    if (fraud) ++metrics_.fraudulent_assertions;
    switch (life.phase) {
      case Phase::unchallenged_done:
        ++metrics_.unchallenged;
        break;
      case Phase::matched_done:
        ++metrics_.challenges;
        ++metrics_.matched;
        break;
      case Phase::arbitrated_done:
        ++metrics_.challenges;
        ++metrics_.arbitrations;
        if (fraud) ++metrics_.detected_frauds;
        break;
      default:
        ++metrics_.phase_violations;
        break;
    }
    if (fraud && life.phase != Phase::arbitrated_done) {
      ++metrics_.undetected_frauds;
      ++metrics_.passed_fraudulent_assertions;
    }
  }

  void observe_timeout(const protocol::RequestLifecycle&, protocol::Role,
                       const protocol::TimeoutAction& act) override {
    ++metrics_.timeouts;
    if (act.replacement != act.penalized) ++metrics_.reassignments;
  }

  void observe_evaluation(ExecutorId e) override { ++evaluations_.at(e); }

  void observe_result(protocol::UserId, const RequestId& reqid, const model::Vector& y) override {
    ++metrics_.results_delivered;
    auto it = requests_.find(reqid);
    if (it != requests_.end() && y == truth_of(it->second)) ++metrics_.correct_results;
  }

 private:
  struct Event {
    Tick at = 0;
    std::uint64_t seq = 0;
    Address to;
    Address from;
    std::variant<Message, Timer> payload;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  struct RequestInfo {
    std::uint64_t index = 0;
    model::Vector x;
    std::optional<model::Vector> truth;
    std::optional<std::uint64_t> accepted_event;
    std::optional<std::vector<LedgerDelta>> deltas;
  };

  void push(Event ev) {
    heap_.push_back(std::move(ev));
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }

  void schedule_arrival(std::uint64_t k) {
    const auto user = static_cast<protocol::UserId>(k % cfg_.users);
    push({1 + k * cfg_.arrival_interval, next_seq_++, Address::user(user), Address::user(user),
          Timer{protocol::TimerKind::submit, {}, 1, k}});
  }

  const model::Vector& truth_of(RequestInfo& info) {
    if (!info.truth) info.truth = model::forward(world_.model, info.x);
    return *info.truth;
  }

  void dispatch(const Event& ev) {
    if (const auto* timer = std::get_if<Timer>(&ev.payload)) {
      if (ev.to.kind == NodeKind::user) {
        submit_request(ev.to.index, timer->value);
      } else if (ev.to.kind == NodeKind::orchestrator) {
        orchestrators_[ev.to.index].on_timer(*this, *timer);
      }
      return;
    }
    const Message& msg = std::get<Message>(ev.payload);
    switch (ev.to.kind) {
      case NodeKind::user: users_[ev.to.index].on_message(*this, msg); break;
      case NodeKind::orchestrator: orchestrators_[ev.to.index].on_message(*this, msg); break;
      case NodeKind::executor: executors_[ev.to.index].on_message(*this, msg); break;
      case NodeKind::arbitration: on_arbitration(std::get<protocol::ArbitrationRequest>(msg)); break;
      case NodeKind::settlement: on_settlement(std::get<protocol::SettlementVote>(msg)); break;
    }
  }

  void submit_request(protocol::UserId user, std::uint64_t k) {
    if (k + 1 < cfg_.requests) schedule_arrival(k + 1);
    model::Vector x = request_input(seeds_.inputs, k, world_.model.input_dim());
    RequestInfo info;
    info.index = k;
    info.x = x;
    const RequestId reqid = users_[user].submit(*this, std::move(x), crypto::be64(k));
    requests_.emplace(reqid, std::move(info));
    ++metrics_.requests;
  }

  void on_arbitration(const protocol::ArbitrationRequest& req) {
    auto res = arbitration_.submit(req);
    if (!res) return;
    const protocol::ArbitrationOutcome& out = res.value();
    ArbitrationRecord rec;
    rec.outcome = out;
    check_arbitration(req.evidence, rec);
    arbitrations_.push_back(std::move(rec));
    for (protocol::OrchestratorId o = 0; o < cfg_.network.committee_size(); ++o) {
      send(Address::arbitration(), Address::orchestrator(o), protocol::ArbitrationResult{out},
           std::nullopt);
    }
  }

  // Recomputes the reference output on the request's recorded input and
  // checks every verdict and every ledger entry of the outcome against it.
  void check_arbitration(const protocol::ArbitrationEvidence& ev, ArbitrationRecord& rec) {
    auto it = requests_.find(ev.reqid);
    bool ok = it != requests_.end() && it->second.x == ev.x;
    const model::Vector truth = model::forward(world_.model, ev.x);
    rec.asserter_output_correct = ev.y_asserter == truth;
    rec.validator_output_correct = ev.y_validator == truth;
    const auto& out = rec.outcome;
    ok = ok && out.y_true == truth;
    ok = ok && (out.asserter_verdict == protocol::Verdict::honest) == rec.asserter_output_correct;
    ok = ok && (out.validator_verdict == protocol::Verdict::honest) == rec.validator_output_correct;
    for (const auto& d : out.deltas) {
      const bool is_asserter = d.account == Account::executor(ev.asserter);
      const bool correct = is_asserter ? rec.asserter_output_correct : rec.validator_output_correct;
      if (d.reason == protocol::Reason::slash) ok = ok && !correct;
      else ok = ok && correct;
    }
    if (!ok) ++metrics_.arbitration_violations;
  }

  void on_settlement(const protocol::SettlementVote& vote) {
    auto res = settlement_.submit(vote);
    if (!res) {
      if (res.error() == protocol::Rejection::conservation_violation) ++metrics_.conservation_violations;
      return;
    }
    metrics_.settled += res.value().settled.size();
    for (protocol::OrchestratorId o = 0; o < cfg_.network.committee_size(); ++o) {
      send(Address::settlement(), Address::orchestrator(o), res.value(), std::nullopt);
    }
  }

  void hash_event(const Event& ev) {
    crypto::Canonical c;
    c.field_u64(ev.at).field_u64(ev.seq);
    c.field_u64(static_cast<std::uint64_t>(ev.to.kind)).field_u64(ev.to.index);
    c.field_u64(static_cast<std::uint64_t>(ev.from.kind)).field_u64(ev.from.index);
    if (const auto* t = std::get_if<Timer>(&ev.payload)) {
      c.field("Timer").field_u64(static_cast<std::uint64_t>(t->kind)).field(t->reqid);
      c.field_u64(t->attempt).field_u64(t->value);
    } else {
      c.field(protocol::encode(std::get<Message>(ev.payload)));
    }
    trace_.update(c.bytes());
  }

  void log_event(const Event& ev) const {
    std::cerr << ev.at << ' ' << ev.seq << ' ' << describe(ev.from) << " -> " << describe(ev.to) << ' ';
    if (const auto* t = std::get_if<Timer>(&ev.payload)) {
      std::cerr << "Timer(" << static_cast<int>(t->kind) << ")\n";
    } else {
      std::cerr << protocol::message_name(std::get<Message>(ev.payload)) << '\n';
    }
  }

  RunResult finish() {
    const auto& net = cfg_.network;
    MetricsReport& m = metrics_;
    const std::uint64_t decided = m.concluded;
    m.challenge_rate = decided == 0 ? 0.0 : static_cast<double>(m.challenges) / decided;
    m.cheat_pass_rate = m.fraudulent_assertions == 0
                            ? 0.0
                            : static_cast<double>(m.passed_fraudulent_assertions) / m.fraudulent_assertions;
    m.rejected_batches = settlement_.rejected_batches();
    m.opening_supply = ledger_.opening_supply();
    m.circulating = ledger_.circulating();
    m.burned = ledger_.burned();
    m.supply_conserved = ledger_.supply_conserved();
    m.all_settled = m.concluded == m.requests && m.settled == m.requests;

    // Replays the observer's concluded entries for settled requests on top
    // of the opening balances; the contract's ledger must agree exactly.
    protocol::Ledger replay;
    const std::uint64_t per_user = (cfg_.requests + cfg_.users - 1) / cfg_.users;
    for (protocol::UserId u = 0; u < cfg_.users; ++u) {
      replay.fund(Account::user(u), net.payment * static_cast<Amount>(per_user));
    }
    for (ExecutorId e = 0; e < net.executors; ++e) replay.fund(Account::executor(e), net.slash);
    for (const auto& reqid : settlement_.settled()) {
      auto it = requests_.find(reqid);
      if (it == requests_.end() || !it->second.deltas) {
        ++m.conservation_violations;
        continue;
      }
      replay.apply(*it->second.deltas);
    }
    if (replay.balances() != ledger_.balances()) ++m.conservation_violations;

    m.executors.resize(net.executors);
    for (ExecutorId e = 0; e < net.executors; ++e) {
      NodePayoff& p = m.executors[e];
      p.ledger_net = ledger_.balance(Account::executor(e)) - net.slash;
      p.evaluations = evaluations_[e];
      p.payoff = protocol::to_tokens(p.ledger_net) -
                 protocol::to_tokens(net.compute_cost) * static_cast<double>(p.evaluations);
    }
    m.users.resize(cfg_.users);
    for (protocol::UserId u = 0; u < cfg_.users; ++u) {
      m.users[u] = ledger_.balance(Account::user(u)) - net.payment * static_cast<Amount>(per_user);
    }
    if (options_.trace) m.trace_hash = trace_.digest();
    if (options_.log != LogLevel::off) {
      std::cerr << "posp: " << m.requests << " requests, " << m.concluded << " concluded, " << m.settled
                << " settled, " << m.challenges << " challenges, " << m.arbitrations << " arbitrations, "
                << m.events << " events\n";
    }

    RunResult out;
    out.metrics = std::move(m);
    out.ledger = ledger_.balances();
    out.arbitrations = std::move(arbitrations_);
    out.behaviors = behaviors_;
    return out;
  }

  const ScenarioConfig& cfg_;
  const World& world_;
  const BehaviorTable& behaviors_;
  RunSeeds seeds_;
  RunOptions options_;

  Tick now_ = 0;
  std::uint64_t current_ = 0;
  std::uint64_t next_seq_ = 0;
  std::vector<Event> heap_;
  crypto::Sha256Stream trace_;
  crypto::VerifyCache cache_;
  BeaconOracle beacon_;
  protocol::Ledger ledger_;
  protocol::ArbitrationContract arbitration_;
  protocol::SettlementContract settlement_;
  protocol::CollusionBoard board_;
  std::vector<protocol::User> users_;
  std::vector<protocol::Orchestrator> orchestrators_;
  std::vector<protocol::Executor> executors_;
  std::vector<std::uint64_t> evaluations_;
  std::map<RequestId, RequestInfo> requests_;
  std::vector<ArbitrationRecord> arbitrations_;
  MetricsReport metrics_;
};

}  // namespace

LogLevel log_level_from_env() {
  const char* v = std::getenv("POSP_LOG");
  if (v == nullptr) return LogLevel::off;
  const std::string s(v);
  if (s == "summary") return LogLevel::summary;
  if (s == "events") return LogLevel::events;
  return LogLevel::off;
}

World build_world(const ScenarioConfig& cfg) {
  World w;
  w.model = model::generate_model(crypto::derive_seed(cfg.master_seed, "model"), cfg.model_dims);
  auto keys = [&](std::string_view label, std::uint32_t count, std::vector<crypto::KeyPair>& out,
                  std::vector<protocol::PublicKey>& pks) {
    for (std::uint32_t k = 0; k < count; ++k) {
      out.push_back(crypto::KeyPair::from_seed(crypto::derive_seed(cfg.master_seed, label, k)));
      pks.push_back(out.back().public_key());
    }
  };
  keys("user-key", cfg.users, w.user_keys, w.pki.users);
  keys("orchestrator-key", cfg.network.committee_size(), w.orchestrator_keys, w.pki.orchestrators);
  keys("executor-key", cfg.network.executors, w.executor_keys, w.pki.executors);
  return w;
}

RunSeeds RunSeeds::derive(const crypto::Seed& parent) {
  return {crypto::derive_seed(parent, "beacon"), crypto::derive_seed(parent, "inputs"),
          crypto::derive_seed(parent, "coins")};
}

const crypto::Seed& BeaconOracle::get(protocol::Epoch t, protocol::Epoch current,
                                      std::uint64_t event) {
  if (t > current) {
    throw protocol::ProtocolViolation("beacon for epoch " + std::to_string(t) +
                                      " requested during epoch " + std::to_string(current));
  }
  auto it = seeds_.find(t);
  if (it == seeds_.end()) {
    it = seeds_.emplace(t, std::make_pair(seed_at(root_, t), event)).first;
  }
  return it->second.first;
}

crypto::Seed BeaconOracle::seed_at(const crypto::Seed& root, protocol::Epoch t) {
  crypto::Seed s;
  s.bytes = crypto::prf(root, crypto::be64(t)).bytes;
  return s;
}

std::optional<std::uint64_t> BeaconOracle::drawn_at(protocol::Epoch t) const {
  auto it = seeds_.find(t);
  if (it == seeds_.end()) return std::nullopt;
  return it->second.second;
}

model::Vector request_input(const crypto::Seed& inputs, std::uint64_t k, std::size_t dim) {
  return model::random_vector(crypto::derive_seed(inputs, "request", k), "x", dim);
}

RunResult run(const ScenarioConfig& cfg, const World& world, const BehaviorTable& behaviors,
              const RunSeeds& seeds, const RunOptions& options) {
  Simulation sim(cfg, world, behaviors, seeds, options);
  return sim.run();
}

RunResult run(const ScenarioConfig& cfg, const RunOptions& options) {
  require_valid(cfg);
  const BehaviorTable behaviors = assign_adversaries(cfg);
  const World world = build_world(cfg);
  RunOptions opts = options;
  opts.trace = opts.trace && cfg.trace;
  return run(cfg, world, behaviors, RunSeeds::derive(cfg.master_seed), opts);
}

RunResult leak_attack(const ScenarioConfig& cfg, const RunOptions& options) {
  const bool leaks = std::any_of(cfg.orchestrator_adversaries.begin(), cfg.orchestrator_adversaries.end(),
                                 [](const OrchestratorGroupSpec& s) {
                                   return s.strategy == protocol::OrchestratorStrategy::leak && s.count > 0;
                                 });
  if (!leaks) throw ConfigError({"leak_attack needs at least one leaking orchestrator"});
  return run(cfg, options);
}

}  // namespace posp::sim
