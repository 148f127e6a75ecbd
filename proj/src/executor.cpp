#include "posp/executor.hpp"

namespace posp::protocol {
namespace {

std::optional<ExecutionResponse> execute(std::span<const TaskAssignment> msgs, Role role,
                                         ExecutorId self, const KeyPair& key,
                                         const model::ToyModel& model,
                                         std::span<const PublicKey> committee, std::uint32_t quorum,
                                         crypto::VerifyCache& cache) {
  if (msgs.empty()) return std::nullopt;
  const TaskAssignment& first = msgs.front();
  TaskQuorum tasks(committee, quorum);
  for (const auto& m : msgs) {
    if (m.role != role || m.reqid != first.reqid || m.attempt != first.attempt) continue;
    if (auto x = tasks.add(m, cache)) {
      ExecutionResponse r;
      r.from = self;
      r.reqid = m.reqid;
      r.y = model::forward(model, *x);
      r.x = std::move(*x);
      r.sig = key.sign(execution_payload(r.x, r.reqid, r.y));
      r.role = role;
      r.attempt = m.attempt;
      return r;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<model::Vector> TaskQuorum::add(const TaskAssignment& msg, crypto::VerifyCache& cache) {
  if (fired_) return std::nullopt;
  const Bytes payload = task_payload(msg.x, msg.reqid);
  if (collector_.add(msg.from, payload, msg.orch_sig, cache) != SignatureCollector::Added::fresh) {
    return std::nullopt;
  }
  inputs_.try_emplace(crypto::sha256(payload), msg.x);
  if (!collector_.certificate()) return std::nullopt;
  fired_ = true;
  return inputs_.at(collector_.certificate()->digest);
}

std::optional<ExecutionResponse> asserter_execute(std::span<const TaskAssignment> msgs,
                                                  ExecutorId self, const KeyPair& key,
                                                  const model::ToyModel& model,
                                                  std::span<const PublicKey> committee,
                                                  std::uint32_t quorum, crypto::VerifyCache& cache) {
  return execute(msgs, Role::asserter, self, key, model, committee, quorum, cache);
}

std::optional<ExecutionResponse> validator_execute(std::span<const TaskAssignment> msgs,
                                                   ExecutorId self, const KeyPair& key,
                                                   const model::ToyModel& model,
                                                   std::span<const PublicKey> committee,
                                                   std::uint32_t quorum, crypto::VerifyCache& cache) {
  return execute(msgs, Role::validator, self, key, model, committee, quorum, cache);
}

Executor::Executor(ExecutorId id, KeyPair key, const Seed& coin_seed, ExecutorBehavior behavior,
                   const model::ToyModel& model, CollusionBoard* board)
    : id_(id),
      key_(std::move(key)),
      coin_seed_(coin_seed),
      behavior_(std::move(behavior)),
      model_(model),
      board_(board) {}

void Executor::on_message(NodeContext& ctx, const Message& msg) {
  if (const auto* task = std::get_if<TaskAssignment>(&msg)) {
    on_task(ctx, *task);
  } else if (const auto* leak = std::get_if<LeakedResult>(&msg)) {
    leaked_.insert_or_assign(leak->reqid, leak->y);
  } else if (const auto* sub = std::get_if<RequestSubmission>(&msg)) {
    if (behavior_.user_partner) partner_requests_.insert(request_id(*sub));
  }
}

void Executor::on_task(NodeContext& ctx, const TaskAssignment& msg) {
  const TaskKey key{msg.reqid, msg.role, msg.attempt};
  const NetworkConfig& cfg = ctx.config();
  auto [it, _] = tasks_.try_emplace(key, ctx.pki().orchestrators, cfg.quorum());
  auto x = it->second.add(msg, ctx.verifier());
  if (!x) return;

  auto y = choose_output(ctx, key, *x);
  if (!y) return;
  if (behavior_.group && board_ && msg.role == Role::asserter) {
    board_->publish(*behavior_.group, msg.reqid, *y);
  }
  ExecutionResponse r;
  r.from = id_;
  r.reqid = msg.reqid;
  r.x = std::move(*x);
  r.y = std::move(*y);
  r.sig = key_.sign(execution_payload(r.x, r.reqid, r.y), ctx.verifier());
  r.role = msg.role;
  r.attempt = msg.attempt;
  const Address self = Address::executor(id_);
  for (OrchestratorId o = 0; o < cfg.committee_size(); ++o) {
    ctx.send(self, Address::orchestrator(o), r);
  }
}

bool Executor::coin(const TaskKey& key, double q) const {
  crypto::Canonical c;
  c.field_u64(id_).field(key.reqid).field_u64(static_cast<std::uint64_t>(key.role)).field_u64(key.attempt);
  return crypto::sampled(coin_seed_, c.bytes(), q);
}

std::optional<model::Vector> Executor::choose_output(NodeContext& ctx, const TaskKey& key,
                                                     const model::Vector& x) {
  bool fabricated = false;
  switch (behavior_.strategy) {
    case ExecutorStrategy::honest:
    case ExecutorStrategy::free_rider:
      break;
    case ExecutorStrategy::unresponsive:
      if (coin(key, behavior_.q)) return std::nullopt;
      break;
    case ExecutorStrategy::always_fraud:
      fabricated = true;
      break;
    case ExecutorStrategy::fraud_with_probability:
      fabricated = coin(key, behavior_.q);
      break;
    case ExecutorStrategy::collude:
      fabricated = key.role == Role::asserter;
      break;
  }
  if (key.role == Role::asserter && behavior_.user_partner && partner_requests_.contains(key.reqid)) {
    fabricated = true;
  }
  if (key.role == Role::validator) {
    if (behavior_.group && board_) {
      if (const auto* posted = board_->lookup(*behavior_.group, key.reqid)) return *posted;
    }
    if (behavior_.byzantine()) {
      if (auto it = leaked_.find(key.reqid); it != leaked_.end()) return it->second;
    }
  }
  if (fabricated) return fabricate(x);
  ctx.observe_evaluation(id_);
  return model::forward(model_, x);
}

model::Vector Executor::fabricate(const model::Vector& x) const {
  return model::corrupt(model::forward(model_, x), behavior_.corrupt);
}

}  // namespace posp::protocol
