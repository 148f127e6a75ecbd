#include "posp/protocol.hpp"

#include <cmath>
#include <numeric>

namespace posp::protocol {
namespace {

using crypto::Canonical;

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

void put(Canonical& c, const model::Vector& v) { c.field(model::encode(v)); }

void put(Canonical& c, const LedgerDelta& d) {
  c.field_u64(static_cast<std::uint64_t>(d.account.kind));
  c.field_u64(d.account.index);
  c.field_u64(static_cast<std::uint64_t>(d.amount));
  c.field_u64(static_cast<std::uint64_t>(d.reason));
  c.field(d.reqid);
}

void put(Canonical& c, const ArbitrationEvidence& ev) {
  put(c, ev.x);
  c.field(ev.reqid);
  c.field_u64(ev.asserter);
  put(c, ev.y_asserter);
  c.field(ev.sig_asserter);
  c.field_u64(ev.validator);
  put(c, ev.y_validator);
  c.field(ev.sig_validator);
}

struct MessageEncoder {
  Canonical& c;

  void operator()(const RequestSubmission& m) {
    c.field_u64(m.user).field(m.user_pk);
    put(c, m.x);
    c.field(m.nonce).field(m.user_sig);
  }
  void operator()(const ConsensusVote& m) {
    c.field_u64(m.from).field_u64(static_cast<std::uint64_t>(m.kind)).field(m.reqid);
    c.field_u64(static_cast<std::uint64_t>(m.role)).field_u64(m.attempt).field_u64(m.epoch);
    c.field(m.content);
  }
  void operator()(const TaskAssignment& m) {
    c.field_u64(m.from).field(m.reqid);
    put(c, m.x);
    c.field(m.orch_sig).field_u64(static_cast<std::uint64_t>(m.role)).field_u64(m.attempt);
  }
  void operator()(const ExecutionResponse& m) {
    c.field_u64(m.from).field(m.reqid);
    put(c, m.x);
    put(c, m.y);
    c.field(m.sig).field_u64(static_cast<std::uint64_t>(m.role)).field_u64(m.attempt);
  }
  void operator()(const ResultNotice& m) {
    c.field_u64(m.from).field(m.reqid).field_u64(m.executor);
    put(c, m.y);
    c.field(m.executor_sig);
  }
  void operator()(const ArbitrationRequest& m) {
    c.field_u64(m.from);
    put(c, m.evidence);
    c.field(m.orch_sig);
  }
  void operator()(const ArbitrationResult& m) {
    const auto& o = m.outcome;
    c.field(o.reqid);
    put(c, o.y_true);
    c.field_u64(o.asserter).field_u64(o.validator);
    c.field_u64(static_cast<std::uint64_t>(o.asserter_verdict));
    c.field_u64(static_cast<std::uint64_t>(o.validator_verdict));
    for (const auto& d : o.deltas) put(c, d);
  }
  void operator()(const SettlementProposal& m) {
    c.field_u64(m.from).field(encode(m.batch));
  }
  void operator()(const SettlementVote& m) {
    c.field_u64(m.from).field(encode(m.batch)).field(m.sig);
  }
  void operator()(const SettlementReceipt& m) {
    c.field_u64(m.round);
    for (const auto& r : m.settled) c.field(r);
  }
  void operator()(const LeakedResult& m) {
    c.field_u64(m.from).field(m.reqid);
    put(c, m.y);
  }
};

}  // namespace

Amount to_units(double tokens) {
  const double scaled = std::round(tokens * static_cast<double>(kUnitsPerToken));
  if (!(std::fabs(scaled) < 9.0e18)) throw std::invalid_argument("token amount out of range");
  return static_cast<Amount>(scaled);
}

double to_tokens(Amount units) { return static_cast<double>(units) / static_cast<double>(kUnitsPerToken); }

std::vector<std::string> validation_errors(const NetworkConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.executors < 2) errs.emplace_back("N must be >= 2");
  if (!(cfg.challenge_prob >= 0.0 && cfg.challenge_prob <= 1.0)) errs.emplace_back("p must lie in [0, 1]");
  if (cfg.assert_timeout < 1) errs.emplace_back("T_assert must be >= 1 epoch");
  if (cfg.validate_timeout < 1) errs.emplace_back("T_validate must be >= 1 epoch");
  if (cfg.payment <= 0) errs.emplace_back("B must be > 0");
  if (cfg.reward < 0) errs.emplace_back("R must be >= 0");
  if (!(2 * cfg.reward < cfg.payment)) errs.emplace_back("R must be < B/2");
  if (cfg.slash < 0) errs.emplace_back("S must be >= 0");
  if (cfg.compute_cost < 0) errs.emplace_back("C must be >= 0");
  if (cfg.timeout_penalty < 0 || cfg.timeout_penalty > cfg.slash) {
    errs.emplace_back("timeout penalty must lie in [0, S]");
  }
  if (cfg.epoch_ticks < 1) errs.emplace_back("epoch_ticks must be >= 1");
  if (cfg.message_delay < 1) errs.emplace_back("message_delay must be >= 1 tick");
  if (cfg.settle_every < 1) errs.emplace_back("settle_every must be >= 1 epoch");
  return errs;
}

void require_valid(const NetworkConfig& cfg) {
  auto errs = validation_errors(cfg);
  if (!errs.empty()) throw std::invalid_argument(join(errs));
}

std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::invalid_signature: return "InvalidSignature";
    case Rejection::duplicate_request: return "DuplicateRequest";
    case Rejection::below_quorum: return "BelowQuorum";
    case Rejection::already_settled: return "AlreadySettled";
    case Rejection::conservation_violation: return "ConservationViolation";
    case Rejection::invalid_evidence_signature: return "InvalidEvidenceSignature";
    case Rejection::unknown_request: return "UnknownRequest";
    case Rejection::malformed: return "Malformed";
  }
  return "?";
}

std::string_view to_string(Role r) { return r == Role::asserter ? "asserter" : "validator"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::submitted: return "Submitted";
    case Phase::assigned: return "Assigned";
    case Phase::asserted: return "Asserted";
    case Phase::unchallenged_done: return "UnchallengedDone";
    case Phase::challenged: return "Challenged";
    case Phase::matched_done: return "MatchedDone";
    case Phase::arbitrating: return "Arbitrating";
    case Phase::arbitrated_done: return "ArbitratedDone";
    case Phase::reassigned: return "Reassigned";
  }
  return "?";
}

bool is_allowed_transition(Phase from, Phase to) {
  switch (from) {
    case Phase::submitted: return to == Phase::assigned;
    case Phase::assigned: return to == Phase::asserted || to == Phase::reassigned;
    case Phase::asserted: return to == Phase::unchallenged_done || to == Phase::challenged;
    case Phase::challenged:
      return to == Phase::matched_done || to == Phase::arbitrating || to == Phase::reassigned;
    case Phase::arbitrating: return to == Phase::arbitrated_done;
    case Phase::reassigned: return to == Phase::assigned || to == Phase::challenged;
    case Phase::unchallenged_done:
    case Phase::matched_done:
    case Phase::arbitrated_done: return false;
  }
  return false;
}

bool is_terminal(Phase p) {
  return p == Phase::unchallenged_done || p == Phase::matched_done || p == Phase::arbitrated_done;
}

void RequestLifecycle::advance(Phase next) {
  if (!is_allowed_transition(phase, next)) {
    throw ProtocolViolation("illegal phase transition " + std::string(to_string(phase)) + " -> " +
                            std::string(to_string(next)));
  }
  if (next == Phase::arbitrating &&
      (!y_asserter || !y_validator || *y_asserter == *y_validator)) {
    throw ProtocolViolation("arbitration requires two different outputs");
  }
  phase = next;
  history.push_back(next);
}

bool is_valid_phase_path(const std::vector<Phase>& history) {
  if (history.empty() || history.front() != Phase::submitted) return false;
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (!is_allowed_transition(history[k - 1], history[k])) return false;
  }
  return true;
}

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::user_payment: return "UserPayment";
    case Reason::asserter_reward: return "AsserterReward";
    case Reason::validator_reward: return "ValidatorReward";
    case Reason::slash: return "Slash";
    case Reason::slash_redistribution: return "SlashRedistribution";
    case Reason::burn: return "Burn";
    case Reason::timeout_penalty: return "TimeoutPenalty";
  }
  return "?";
}

std::string to_string(const Account& a) {
  switch (a.kind) {
    case AccountKind::user: return "user:" + std::to_string(a.index);
    case AccountKind::executor: return "executor:" + std::to_string(a.index);
    case AccountKind::sink: return "sink";
  }
  return "?";
}

std::string_view message_name(const Message& m) {
  static constexpr std::string_view names[] = {
      "RequestSubmission", "ConsensusVote",      "TaskAssignment",
      "ExecutionResponse", "ResultNotice",       "ArbitrationRequest",
      "ArbitrationResult", "SettlementProposal", "SettlementVote",
      "SettlementReceipt", "LeakedResult"};
  return names[m.index()];
}

Bytes encode(const Message& m) {
  Canonical c;
  c.field(message_name(m));
  std::visit(MessageEncoder{c}, m);
  return c.take();
}

Bytes user_request_payload(const model::Vector& x, crypto::ByteView nonce, const RequestId& reqid) {
  Canonical c;
  c.field("Request");
  put(c, x);
  c.field(nonce).field(reqid);
  return c.take();
}

Bytes task_payload(const model::Vector& x, const RequestId& reqid) {
  Canonical c;
  put(c, x);
  c.field(reqid);
  return c.take();
}

Bytes execution_payload(const model::Vector& x, const RequestId& reqid, const model::Vector& y) {
  Canonical c;
  put(c, x);
  c.field(reqid);
  put(c, y);
  return c.take();
}

Bytes arbitration_payload(const ArbitrationEvidence& ev) {
  Canonical c;
  c.field("Arbitration");
  put(c, ev);
  return c.take();
}

Bytes encode(const SettlementBatch& batch) {
  Canonical c;
  c.field_u64(batch.round);
  for (const auto& d : batch.deltas) put(c, d);
  return c.take();
}

Digest batch_hash(const SettlementBatch& batch) { return crypto::sha256(encode(batch)); }

Bytes settlement_payload(std::uint64_t round, const Digest& hash) {
  Canonical c;
  c.field("Settlement").field_u64(round).field(hash);
  return c.take();
}

RequestId request_id(const RequestSubmission& msg) {
  return crypto::derive_reqid(msg.user_pk, model::encode(msg.x), msg.nonce);
}

RequestSubmission user_submit(UserId user, const KeyPair& key, model::Vector x, Bytes nonce) {
  RequestSubmission msg;
  msg.user = user;
  msg.user_pk = key.public_key();
  msg.x = std::move(x);
  msg.nonce = std::move(nonce);
  msg.user_sig = key.sign(user_request_payload(msg.x, msg.nonce, request_id(msg)));
  return msg;
}

Result<RequestId> orch_accept_request(const RequestSubmission& msg, const Pki& pki,
                                      const std::set<RequestId>& known, crypto::VerifyCache& cache) {
  if (msg.user >= pki.users.size() || pki.users[msg.user] != msg.user_pk) {
    return Rejection::invalid_signature;
  }
  const RequestId reqid = request_id(msg);
  if (!cache.verify(msg.user_pk, user_request_payload(msg.x, msg.nonce, reqid), msg.user_sig)) {
    return Rejection::invalid_signature;
  }
  if (known.contains(reqid)) return Rejection::duplicate_request;
  return reqid;
}

Bytes selection_string(const PublicKey& pk_user, const model::Vector& x, const RequestId& reqid,
                       std::uint32_t attempt) {
  Canonical c;
  c.field(pk_user);
  put(c, x);
  c.field(reqid);
  if (attempt > 1) c.field("attempt_" + std::to_string(attempt));
  return c.take();
}

ExecutorId orch_select_asserter(const RequestId& reqid, const PublicKey& pk_user,
                                const model::Vector& x, const Seed& tau_req, std::uint32_t n,
                                std::uint32_t attempt) {
  return static_cast<ExecutorId>(
      crypto::bucket(tau_req, selection_string(pk_user, x, reqid, attempt), n));
}

bool orch_challenge_decision(const RequestId& reqid, const PublicKey& pk_user,
                             const model::Vector& x, const Seed& tau_chal, double p,
                             std::uint32_t attempt) {
  return crypto::sampled(tau_chal, selection_string(pk_user, x, reqid, attempt), p);
}

ExecutorId orch_select_validator(const RequestId& reqid, const PublicKey& pk_user,
                                 const model::Vector& x, const Seed& tau_chal, std::uint32_t n,
                                 ExecutorId asserter, std::uint32_t attempt) {
  if (n < 2) throw std::invalid_argument("validator selection needs N >= 2");
  auto j = static_cast<ExecutorId>(
      crypto::bucket(tau_chal, selection_string(pk_user, x, reqid, attempt), n));
  if (j == asserter) j = (asserter + 1) % n;
  return j;
}

Route orch_compare_and_route(const model::Vector& y_asserter, const model::Vector& y_validator) {
  return model::encode(y_asserter) == model::encode(y_validator) ? Route::matched : Route::arbitrate;
}

std::vector<LedgerDelta> close_request(const RequestId& reqid, UserId user, Amount payment,
                                       std::vector<LedgerDelta> deltas) {
  std::vector<LedgerDelta> out;
  out.reserve(deltas.size() + 2);
  out.push_back({Account::user(user), -payment, Reason::user_payment, reqid});
  Amount sum = -payment;
  for (auto& d : deltas) {
    sum += d.amount;
    out.push_back(std::move(d));
  }
  out.push_back({Account::sink(), -sum, Reason::burn, reqid});
  return out;
}

std::vector<LedgerDelta> unchallenged_deltas(const RequestLifecycle& life, const NetworkConfig& cfg,
                                             std::vector<LedgerDelta> penalties) {
  penalties.push_back(
      {Account::executor(life.asserter), cfg.reward, Reason::asserter_reward, life.reqid});
  return close_request(life.reqid, life.user, cfg.payment, std::move(penalties));
}

std::vector<LedgerDelta> matched_deltas(const RequestLifecycle& life, const NetworkConfig& cfg,
                                        std::vector<LedgerDelta> penalties) {
  if (!life.validator) throw ProtocolViolation("matched challenge without a validator");
  penalties.push_back(
      {Account::executor(life.asserter), cfg.reward, Reason::asserter_reward, life.reqid});
  penalties.push_back(
      {Account::executor(*life.validator), cfg.reward, Reason::validator_reward, life.reqid});
  return close_request(life.reqid, life.user, cfg.payment, std::move(penalties));
}

TimeoutAction orch_handle_timeout(RequestLifecycle& life, Role role, const NetworkConfig& cfg,
                                  const Seed& tau) {
  const Phase waiting = role == Role::asserter ? Phase::assigned : Phase::challenged;
  if (life.phase != waiting) {
    throw ProtocolViolation("timeout for the " + std::string(to_string(role)) + " in phase " +
                            std::string(to_string(life.phase)));
  }
  TimeoutAction act;
  act.attempt = life.attempt + 1;
  if (role == Role::asserter) {
    act.penalized = life.asserter;
    act.replacement = orch_select_asserter(life.reqid, life.user_pk, life.x, tau, cfg.executors,
                                           act.attempt);
    life.asserter = act.replacement;
  } else {
    act.penalized = *life.validator;
    act.replacement = orch_select_validator(life.reqid, life.user_pk, life.x, tau, cfg.executors,
                                            life.asserter, act.attempt);
    life.validator = act.replacement;
  }
  act.penalty = {Account::executor(act.penalized), -cfg.timeout_penalty, Reason::timeout_penalty,
                 life.reqid};
  life.attempt = act.attempt;
  life.advance(Phase::reassigned);
  life.advance(waiting);
  return act;
}

std::optional<std::string> audit_request(const std::vector<LedgerDelta>& deltas,
                                         const NetworkConfig& cfg) {
  if (deltas.empty()) return "no entries";
  const RequestId& reqid = deltas.front().reqid;
  Amount sum = 0;
  Amount rewards = 0;
  Amount slashed = 0;
  Amount redistributed = 0;
  int payments = 0;
  int burns = 0;
  for (const auto& d : deltas) {
    if (d.reqid != reqid) return "entries for more than one request";
    if (__builtin_add_overflow(sum, d.amount, &sum)) return "amount overflow";
    switch (d.reason) {
      case Reason::user_payment:
        ++payments;
        if (d.account.kind != AccountKind::user || d.amount != -cfg.payment) return "UserPayment must debit B from a user";
        break;
      case Reason::asserter_reward:
      case Reason::validator_reward:
        if (d.account.kind != AccountKind::executor || d.amount < 0) return "reward must credit an executor";
        rewards += d.amount;
        break;
      case Reason::slash:
        if (d.account.kind != AccountKind::executor || d.amount != -cfg.slash) return "Slash must be exactly -S";
        slashed += cfg.slash;
        break;
      case Reason::slash_redistribution:
        if (d.account.kind != AccountKind::executor || d.amount < 0) return "redistribution must credit an executor";
        redistributed += d.amount;
        break;
      case Reason::timeout_penalty:
        if (d.account.kind != AccountKind::executor || d.amount > 0 || -d.amount > cfg.slash) {
          return "TimeoutPenalty must debit at most S from an executor";
        }
        break;
      case Reason::burn:
        ++burns;
        if (d.account.kind != AccountKind::sink || d.amount < 0) return "Burn must be a non-negative sink credit";
        break;
    }
  }
  if (payments != 1) return "expected exactly one UserPayment";
  if (burns != 1) return "expected exactly one Burn";
  if (rewards > cfg.payment) return "rewards exceed B";
  if (redistributed > slashed) return "redistribution exceeds slashed deposits";
  if (sum != 0) return "entries do not sum to zero";
  return std::nullopt;
}

}  // namespace posp::protocol
