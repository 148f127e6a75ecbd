// Orchestrator committee member. Agreement steps run as vote tallies over
// authenticated channels; signed artifacts (tasks, arbitration requests,
// settlement batches) carry the member's Ed25519 signature.
#pragma once

#include <map>
#include <optional>
#include <set>

#include "posp/node.hpp"
#include "posp/quorum.hpp"

namespace posp::protocol {

enum class OrchestratorStrategy : std::uint8_t {
  honest,
  withhold,     // sends nothing
  equivocate,   // conflicting votes, tampered tasks, evidence and batches
  leak,         // honest, plus hands asserter outputs to Byzantine validators
};

struct OrchestratorBehavior {
  OrchestratorStrategy strategy = OrchestratorStrategy::honest;
  /// Executors that receive leaked outputs.
  std::set<ExecutorId> leak_targets;

  bool byzantine() const { return strategy != OrchestratorStrategy::honest; }
};

class Orchestrator {
 public:
  /// An observer reports lifecycle events to the context's hooks.
  Orchestrator(OrchestratorId id, KeyPair key, OrchestratorBehavior behavior, bool observer);

  void on_message(NodeContext& ctx, const Message& msg);
  void on_timer(NodeContext& ctx, const Timer& timer);

  OrchestratorId id() const { return id_; }
  const OrchestratorBehavior& behavior() const { return behavior_; }

  /// Requests concluded locally but not yet settled on chain.
  std::size_t unsettled() const { return unsettled_.size(); }
  std::size_t concluded() const { return concluded_; }
  const RequestLifecycle* lifecycle(const RequestId& reqid) const;

 private:
  struct VoteKey {
    RequestId reqid;
    Role role;
    std::uint32_t attempt;
    friend auto operator<=>(const VoteKey&, const VoteKey&) = default;
  };

  struct Record {
    RequestLifecycle life;
    Epoch assign_epoch = 0;     // epoch of the current asserter assignment
    Epoch challenge_epoch = 0;  // epoch of the current validator assignment
    bool assert_deadline_passed = false;
    std::vector<LedgerDelta> penalties;
    std::optional<std::vector<LedgerDelta>> deltas;
    bool settled = false;
  };

  void on_submission(NodeContext& ctx, const RequestSubmission& msg);
  void on_vote(NodeContext& ctx, const ConsensusVote& vote);
  void on_response(NodeContext& ctx, const ExecutionResponse& msg);
  void on_arbitration(NodeContext& ctx, const ArbitrationResult& msg);
  void on_proposal(NodeContext& ctx, const SettlementProposal& msg);
  void on_receipt(NodeContext& ctx, const SettlementReceipt& msg);

  void accept_request(NodeContext& ctx, const RequestId& reqid, Epoch t_req);
  void try_accept_result(NodeContext& ctx, const VoteKey& key);
  void decide_challenge(NodeContext& ctx, Record& rec);
  void timed_out(NodeContext& ctx, const VoteKey& key);
  void assign(NodeContext& ctx, Record& rec, Role role, ExecutorId who);
  void conclude(NodeContext& ctx, Record& rec, std::vector<LedgerDelta> deltas);
  void notify_user(NodeContext& ctx, const Record& rec, ExecutorId signer, const model::Vector& y,
                   const Signature& sig);
  void schedule_settlement(NodeContext& ctx);
  void propose(NodeContext& ctx, std::uint64_t round);
  void retry_deferred(NodeContext& ctx);
  /// Accept (true), defer (nullopt) or reject (false) a proposed batch.
  std::optional<bool> check_batch(const SettlementBatch& batch) const;
  void advance(NodeContext& ctx, Record& rec, Phase next);

  void broadcast_vote(NodeContext& ctx, ConsensusVote vote);
  void send_signed_task(NodeContext& ctx, const Record& rec, Role role, ExecutorId who);
  bool silent() const { return behavior_.strategy == OrchestratorStrategy::withhold; }
  bool equivocating() const { return behavior_.strategy == OrchestratorStrategy::equivocate; }

  OrchestratorId id_;
  KeyPair key_;
  OrchestratorBehavior behavior_;
  bool observer_;

  std::set<RequestId> known_;
  std::map<RequestId, RequestSubmission> submissions_;
  std::map<RequestId, VoteTally<std::pair<Digest, Epoch>>> accept_votes_;
  std::map<VoteKey, VoteTally<Digest>> result_votes_;
  std::map<VoteKey, std::map<Digest, ExecutionResponse>> responses_;
  std::map<VoteKey, VoteTally<std::uint8_t>> timeout_votes_;
  std::map<RequestId, Record> records_;
  std::set<RequestId> unsettled_;
  std::map<std::uint64_t, SettlementBatch> deferred_;
  std::set<std::uint64_t> voted_rounds_;
  std::optional<std::uint64_t> next_settlement_;
  std::size_t concluded_ = 0;
};

}  // namespace posp::protocol
