#include "posp/orchestrator.hpp"

namespace posp::protocol {
namespace {

Digest message_digest(const Message& m) { return crypto::sha256(encode(m)); }

SettlementBatch tampered(SettlementBatch batch, std::uint32_t salt) {
  if (!batch.deltas.empty()) batch.deltas.front().amount += 1 + salt;
  return batch;
}

}  // namespace

Orchestrator::Orchestrator(OrchestratorId id, KeyPair key, OrchestratorBehavior behavior,
                           bool observer)
    : id_(id), key_(std::move(key)), behavior_(std::move(behavior)), observer_(observer) {}

const RequestLifecycle* Orchestrator::lifecycle(const RequestId& reqid) const {
  auto it = records_.find(reqid);
  return it == records_.end() ? nullptr : &it->second.life;
}

void Orchestrator::on_message(NodeContext& ctx, const Message& msg) {
  if (silent()) return;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RequestSubmission>) on_submission(ctx, m);
        else if constexpr (std::is_same_v<T, ConsensusVote>) on_vote(ctx, m);
        else if constexpr (std::is_same_v<T, ExecutionResponse>) on_response(ctx, m);
        else if constexpr (std::is_same_v<T, ArbitrationResult>) on_arbitration(ctx, m);
        else if constexpr (std::is_same_v<T, SettlementProposal>) on_proposal(ctx, m);
        else if constexpr (std::is_same_v<T, SettlementReceipt>) on_receipt(ctx, m);
      },
      msg);
}

void Orchestrator::on_timer(NodeContext& ctx, const Timer& timer) {
  if (silent()) return;
  const NetworkConfig& cfg = ctx.config();
  if (timer.kind == TimerKind::settlement) {
    next_settlement_.reset();
    if (timer.value % cfg.committee_size() == id_) propose(ctx, timer.value);
    if (!unsettled_.empty()) schedule_settlement(ctx);
    return;
  }
  auto it = records_.find(timer.reqid);
  if (it == records_.end()) return;
  Record& rec = it->second;
  RequestLifecycle& life = rec.life;
  switch (timer.kind) {
    case TimerKind::process_request: {
      const ExecutorId who = orch_select_asserter(life.reqid, life.user_pk, life.x,
                                                  ctx.beacon(life.t_req), cfg.executors);
      life.asserter = who;
      advance(ctx, rec, Phase::assigned);
      assign(ctx, rec, Role::asserter, who);
      break;
    }
    case TimerKind::assert_deadline:
      if (timer.attempt != life.attempt) break;
      rec.assert_deadline_passed = true;
      if (life.phase == Phase::asserted) {
        decide_challenge(ctx, rec);
      } else if (life.phase == Phase::assigned) {
        broadcast_vote(ctx, {id_, VoteKind::timeout, life.reqid, Role::asserter, life.attempt, 0, {}});
      }
      break;
    case TimerKind::validate_deadline:
      if (timer.attempt == life.attempt && life.phase == Phase::challenged) {
        broadcast_vote(ctx, {id_, VoteKind::timeout, life.reqid, Role::validator, life.attempt, 0, {}});
      }
      break;
    default:
      break;
  }
}

void Orchestrator::on_submission(NodeContext& ctx, const RequestSubmission& msg) {
  auto res = orch_accept_request(msg, ctx.pki(), known_, ctx.verifier());
  if (!res) return;
  const RequestId reqid = res.value();
  known_.insert(reqid);
  submissions_.emplace(reqid, msg);
  broadcast_vote(ctx, {id_, VoteKind::accept_request, reqid, Role::asserter, 1, ctx.epoch() + 1,
                       message_digest(msg)});
  if (auto it = accept_votes_.find(reqid); it != accept_votes_.end() && it->second.decided()) {
    const auto& [content, t_req] = *it->second.decided();
    if (content == message_digest(msg)) accept_request(ctx, reqid, t_req);
  }
}

void Orchestrator::on_vote(NodeContext& ctx, const ConsensusVote& vote) {
  const std::uint32_t quorum = ctx.config().quorum();
  switch (vote.kind) {
    case VoteKind::accept_request: {
      auto [it, _] = accept_votes_.try_emplace(vote.reqid, quorum);
      if (auto decided = it->second.add(vote.from, {vote.content, vote.epoch})) {
        auto sub = submissions_.find(vote.reqid);
        if (sub != submissions_.end() && message_digest(sub->second) == decided->first) {
          accept_request(ctx, vote.reqid, decided->second);
        }
      }
      break;
    }
    case VoteKind::accept_result: {
      const VoteKey key{vote.reqid, vote.role, vote.attempt};
      auto [it, _] = result_votes_.try_emplace(key, quorum);
      if (it->second.add(vote.from, vote.content)) try_accept_result(ctx, key);
      break;
    }
    case VoteKind::timeout: {
      const VoteKey key{vote.reqid, vote.role, vote.attempt};
      auto [it, _] = timeout_votes_.try_emplace(key, quorum);
      if (it->second.add(vote.from, 0)) timed_out(ctx, key);
      break;
    }
  }
}

void Orchestrator::accept_request(NodeContext& ctx, const RequestId& reqid, Epoch t_req) {
  if (records_.contains(reqid)) return;
  auto sub = submissions_.find(reqid);
  Record rec;
  rec.life.reqid = reqid;
  rec.life.user = sub->second.user;
  rec.life.user_pk = sub->second.user_pk;
  rec.life.x = std::move(sub->second.x);
  rec.life.t_req = t_req;
  rec.assign_epoch = t_req;
  submissions_.erase(sub);
  accept_votes_.erase(reqid);
  auto& stored = records_.emplace(reqid, std::move(rec)).first->second;
  if (observer_) ctx.observe_phase(stored.life);
  ctx.schedule(Address::orchestrator(id_), ctx.epoch_start(t_req),
               {TimerKind::process_request, reqid, 1, 0});
}

void Orchestrator::on_response(NodeContext& ctx, const ExecutionResponse& msg) {
  auto it = records_.find(msg.reqid);
  if (it == records_.end()) return;
  const RequestLifecycle& life = it->second.life;
  if (msg.attempt != life.attempt) return;
  if (msg.role == Role::asserter) {
    if (life.phase != Phase::assigned || msg.from != life.asserter) return;
  } else {
    if (life.phase != Phase::challenged || life.validator != msg.from) return;
  }
  if (model::encode(msg.x) != model::encode(life.x)) return;
  if (msg.from >= ctx.pki().executors.size() ||
      !ctx.verifier().verify(ctx.pki().executors[msg.from],
                             execution_payload(msg.x, msg.reqid, msg.y), msg.sig)) {
    return;
  }
  const VoteKey key{msg.reqid, msg.role, msg.attempt};
  const Digest content = message_digest(msg);
  responses_[key].emplace(content, msg);
  broadcast_vote(ctx, {id_, VoteKind::accept_result, msg.reqid, msg.role, msg.attempt, 0, content});
  try_accept_result(ctx, key);
}

void Orchestrator::try_accept_result(NodeContext& ctx, const VoteKey& key) {
  auto tally = result_votes_.find(key);
  auto stored = responses_.find(key);
  if (tally == result_votes_.end() || !tally->second.decided() || stored == responses_.end()) return;
  auto resp_it = stored->second.find(*tally->second.decided());
  if (resp_it == stored->second.end()) return;
  const ExecutionResponse resp = resp_it->second;
  responses_.erase(stored);
  result_votes_.erase(tally);

  Record& rec = records_.at(key.reqid);
  RequestLifecycle& life = rec.life;
  if (life.attempt != key.attempt) return;
  const NetworkConfig& cfg = ctx.config();

  if (key.role == Role::asserter) {
    // Past the deadline the timeout vote decides.
    if (life.phase != Phase::assigned || rec.assert_deadline_passed) return;
    life.y_asserter = resp.y;
    life.sig_asserter = resp.sig;
    advance(ctx, rec, Phase::asserted);
    return;
  }

  if (life.phase != Phase::challenged) return;
  life.y_validator = resp.y;
  life.sig_validator = resp.sig;
  if (orch_compare_and_route(*life.y_asserter, *life.y_validator) == Route::matched) {
    advance(ctx, rec, Phase::matched_done);
    conclude(ctx, rec, matched_deltas(life, cfg, rec.penalties));
    notify_user(ctx, rec, life.asserter, *life.y_asserter, *life.sig_asserter);
    return;
  }
  advance(ctx, rec, Phase::arbitrating);
  ArbitrationEvidence ev;
  ev.x = life.x;
  ev.reqid = life.reqid;
  ev.asserter = life.asserter;
  ev.y_asserter = *life.y_asserter;
  ev.sig_asserter = *life.sig_asserter;
  ev.validator = *life.validator;
  ev.y_validator = *life.y_validator;
  ev.sig_validator = *life.sig_validator;
  if (equivocating()) std::swap(ev.y_asserter, ev.y_validator);
  ArbitrationRequest req;
  req.from = id_;
  req.orch_sig = key_.sign(arbitration_payload(ev), ctx.verifier());
  req.evidence = std::move(ev);
  ctx.send(Address::orchestrator(id_), Address::arbitration(), std::move(req));
}

void Orchestrator::decide_challenge(NodeContext& ctx, Record& rec) {
  const NetworkConfig& cfg = ctx.config();
  RequestLifecycle& life = rec.life;
  const Epoch t_chal = rec.assign_epoch + cfg.assert_timeout;
  life.t_chal = t_chal;
  const Seed& tau = ctx.beacon(t_chal);
  if (!orch_challenge_decision(life.reqid, life.user_pk, life.x, tau, cfg.challenge_prob,
                               life.attempt)) {
    advance(ctx, rec, Phase::unchallenged_done);
    conclude(ctx, rec, unchallenged_deltas(life, cfg, rec.penalties));
    notify_user(ctx, rec, life.asserter, *life.y_asserter, *life.sig_asserter);
    return;
  }
  const ExecutorId j = orch_select_validator(life.reqid, life.user_pk, life.x, tau, cfg.executors,
                                             life.asserter, life.attempt);
  life.validator = j;
  rec.challenge_epoch = t_chal;
  advance(ctx, rec, Phase::challenged);
  assign(ctx, rec, Role::validator, j);
}

void Orchestrator::timed_out(NodeContext& ctx, const VoteKey& key) {
  auto it = records_.find(key.reqid);
  if (it == records_.end()) return;
  Record& rec = it->second;
  RequestLifecycle& life = rec.life;
  const Phase waiting = key.role == Role::asserter ? Phase::assigned : Phase::challenged;
  if (life.attempt != key.attempt || life.phase != waiting) return;
  const NetworkConfig& cfg = ctx.config();
  const Epoch deadline = key.role == Role::asserter ? rec.assign_epoch + cfg.assert_timeout
                                                    : rec.challenge_epoch + cfg.validate_timeout;
  const TimeoutAction act = orch_handle_timeout(life, key.role, cfg, ctx.beacon(deadline));
  rec.penalties.push_back(act.penalty);
  if (observer_) {
    ctx.observe_phase(life);
    ctx.observe_timeout(life, key.role, act);
  }
  if (key.role == Role::asserter) {
    rec.assign_epoch = deadline;
    rec.assert_deadline_passed = false;
  } else {
    rec.challenge_epoch = deadline;
  }
  assign(ctx, rec, key.role, act.replacement);
}

void Orchestrator::assign(NodeContext& ctx, Record& rec, Role role, ExecutorId who) {
  const NetworkConfig& cfg = ctx.config();
  const RequestLifecycle& life = rec.life;
  if (role == Role::validator && behavior_.strategy == OrchestratorStrategy::leak &&
      behavior_.leak_targets.contains(who)) {
    ctx.send(Address::orchestrator(id_), Address::executor(who),
             LeakedResult{id_, life.reqid, *life.y_asserter}, Tick{0});
  }
  send_signed_task(ctx, rec, role, who);
  const Address self = Address::orchestrator(id_);
  if (role == Role::asserter) {
    ctx.schedule(self, ctx.epoch_start(rec.assign_epoch + cfg.assert_timeout),
                 {TimerKind::assert_deadline, life.reqid, life.attempt, 0});
  } else {
    ctx.schedule(self, ctx.epoch_start(rec.challenge_epoch + cfg.validate_timeout),
                 {TimerKind::validate_deadline, life.reqid, life.attempt, 0});
  }
}

void Orchestrator::send_signed_task(NodeContext& ctx, const Record& rec, Role role, ExecutorId who) {
  TaskAssignment task;
  task.from = id_;
  task.reqid = rec.life.reqid;
  task.x = equivocating() ? model::corrupt(rec.life.x, model::CorruptMode::flip_last_bit) : rec.life.x;
  task.orch_sig = key_.sign(task_payload(task.x, task.reqid), ctx.verifier());
  task.role = role;
  task.attempt = rec.life.attempt;
  ctx.send(Address::orchestrator(id_), Address::executor(who), std::move(task));
}

void Orchestrator::on_arbitration(NodeContext& ctx, const ArbitrationResult& msg) {
  const ArbitrationOutcome& out = msg.outcome;
  auto it = records_.find(out.reqid);
  if (it == records_.end() || it->second.life.phase != Phase::arbitrating) return;
  Record& rec = it->second;
  const RequestLifecycle& life = rec.life;
  if (out.asserter != life.asserter || out.validator != life.validator) return;
  std::vector<LedgerDelta> entries = rec.penalties;
  entries.insert(entries.end(), out.deltas.begin(), out.deltas.end());
  advance(ctx, rec, Phase::arbitrated_done);
  conclude(ctx, rec, close_request(life.reqid, life.user, ctx.config().payment, std::move(entries)));
  if (out.asserter_verdict == Verdict::honest) {
    notify_user(ctx, rec, life.asserter, *life.y_asserter, *life.sig_asserter);
  } else if (out.validator_verdict == Verdict::honest) {
    notify_user(ctx, rec, *life.validator, *life.y_validator, *life.sig_validator);
  }
}

void Orchestrator::conclude(NodeContext& ctx, Record& rec, std::vector<LedgerDelta> deltas) {
  if (auto err = audit_request(deltas, ctx.config())) {
    throw ProtocolViolation("request entries fail the conservation audit: " + *err);
  }
  if (observer_) ctx.observe_concluded(rec.life, deltas);
  rec.deltas = std::move(deltas);
  unsettled_.insert(rec.life.reqid);
  ++concluded_;
  schedule_settlement(ctx);
  retry_deferred(ctx);
}

void Orchestrator::notify_user(NodeContext& ctx, const Record& rec, ExecutorId signer,
                               const model::Vector& y, const Signature& sig) {
  ResultNotice n;
  n.from = id_;
  n.reqid = rec.life.reqid;
  n.executor = signer;
  n.y = equivocating() ? model::corrupt(y, model::CorruptMode::offset) : y;
  n.executor_sig = sig;
  ctx.send(Address::orchestrator(id_), Address::user(rec.life.user), std::move(n));
}

void Orchestrator::schedule_settlement(NodeContext& ctx) {
  if (next_settlement_) return;
  const std::uint32_t every = ctx.config().settle_every;
  const std::uint64_t round = ctx.epoch() / every + 1;
  next_settlement_ = round;
  ctx.schedule(Address::orchestrator(id_), ctx.epoch_start(round * every),
               {TimerKind::settlement, {}, 1, round});
}

void Orchestrator::propose(NodeContext& ctx, std::uint64_t round) {
  if (unsettled_.empty()) return;
  SettlementBatch batch;
  batch.round = round;
  for (const auto& reqid : unsettled_) {
    const auto& deltas = *records_.at(reqid).deltas;
    batch.deltas.insert(batch.deltas.end(), deltas.begin(), deltas.end());
  }
  const std::uint32_t n = ctx.config().committee_size();
  for (OrchestratorId o = 0; o < n; ++o) {
    ctx.send(Address::orchestrator(id_), Address::orchestrator(o),
             SettlementProposal{id_, equivocating() ? tampered(batch, o) : batch});
  }
}

std::optional<bool> Orchestrator::check_batch(const SettlementBatch& batch) const {
  if (batch.deltas.empty()) return false;
  std::size_t k = 0;
  while (k < batch.deltas.size()) {
    const RequestId& reqid = batch.deltas[k].reqid;
    auto it = records_.find(reqid);
    if (it == records_.end() || !it->second.deltas) return std::nullopt;
    if (it->second.settled) return false;
    const auto& mine = *it->second.deltas;
    if (k + mine.size() > batch.deltas.size()) return false;
    for (const auto& d : mine) {
      if (!(batch.deltas[k++] == d)) return false;
    }
  }
  return true;
}

void Orchestrator::on_proposal(NodeContext& ctx, const SettlementProposal& msg) {
  const SettlementBatch& batch = msg.batch;
  if (msg.from != batch.round % ctx.config().committee_size()) return;
  if (voted_rounds_.contains(batch.round) || deferred_.contains(batch.round)) return;
  auto verdict = check_batch(batch);
  if (!verdict) {
    deferred_.emplace(batch.round, batch);
    return;
  }
  if (!*verdict) return;
  voted_rounds_.insert(batch.round);
  SettlementVote vote;
  vote.from = id_;
  vote.batch = equivocating() ? tampered(batch, id_) : batch;
  vote.sig = key_.sign(settlement_payload(vote.batch.round, batch_hash(vote.batch)), ctx.verifier());
  ctx.send(Address::orchestrator(id_), Address::settlement(), std::move(vote));
}

void Orchestrator::retry_deferred(NodeContext& ctx) {
  for (auto it = deferred_.begin(); it != deferred_.end();) {
    auto verdict = check_batch(it->second);
    if (!verdict) {
      ++it;
      continue;
    }
    SettlementBatch batch = std::move(it->second);
    it = deferred_.erase(it);
    if (*verdict) on_proposal(ctx, {static_cast<OrchestratorId>(batch.round % ctx.config().committee_size()),
                                    std::move(batch)});
  }
}

void Orchestrator::on_receipt(NodeContext&, const SettlementReceipt& msg) {
  for (const auto& reqid : msg.settled) {
    auto it = records_.find(reqid);
    if (it != records_.end()) it->second.settled = true;
    unsettled_.erase(reqid);
  }
  deferred_.erase(msg.round);
}

void Orchestrator::advance(NodeContext& ctx, Record& rec, Phase next) {
  rec.life.advance(next);
  if (observer_) ctx.observe_phase(rec.life);
}

void Orchestrator::broadcast_vote(NodeContext& ctx, ConsensusVote vote) {
  const std::uint32_t n = ctx.config().committee_size();
  for (OrchestratorId o = 0; o < n; ++o) {
    ConsensusVote v = vote;
    if (equivocating()) v.content.bytes[0] ^= static_cast<std::uint8_t>(o + 1);
    ctx.send(Address::orchestrator(id_), Address::orchestrator(o), v);
  }
}

}  // namespace posp::protocol
