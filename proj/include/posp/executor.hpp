// Executor node: waits for 2f+1 matching task assignments, then computes
// (or, under an adversarial strategy, fabricates, copies or withholds) the
// output and returns a signed response to the committee.
#pragma once

#include <map>
#include <optional>
#include <set>

#include "posp/node.hpp"
#include "posp/quorum.hpp"

namespace posp::protocol {

/// Gathers orchestrator task messages for one (reqid, role, attempt) and
/// yields the input once 2f+1 distinct orchestrators signed the same one.
class TaskQuorum {
 public:
  TaskQuorum(std::span<const PublicKey> committee, std::uint32_t quorum)
      : collector_(committee, quorum) {}

  /// Returns x the first time a quorum forms; forged or duplicate
  /// messages are ignored.
  std::optional<model::Vector> add(const TaskAssignment& msg, crypto::VerifyCache& cache);

 private:
  SignatureCollector collector_;
  std::map<Digest, model::Vector> inputs_;
  bool fired_ = false;
};

/// Honest response: forward(model, x) signed by `key`, once `msgs` contain
/// a quorum for one input. All messages must share reqid, role and attempt.
std::optional<ExecutionResponse> asserter_execute(std::span<const TaskAssignment> msgs,
                                                  ExecutorId self, const KeyPair& key,
                                                  const model::ToyModel& model,
                                                  std::span<const PublicKey> committee,
                                                  std::uint32_t quorum, crypto::VerifyCache& cache);

std::optional<ExecutionResponse> validator_execute(std::span<const TaskAssignment> msgs,
                                                   ExecutorId self, const KeyPair& key,
                                                   const model::ToyModel& model,
                                                   std::span<const PublicKey> committee,
                                                   std::uint32_t quorum, crypto::VerifyCache& cache);

enum class ExecutorStrategy : std::uint8_t {
  honest,
  always_fraud,            // fabricated output in every role
  fraud_with_probability,  // fabricated output with probability q per task
  collude,                 // fabricated output as asserter, honest otherwise
  unresponsive,            // silent with probability q per task
  free_rider,              // copies leaked asserter outputs as validator
};

struct ExecutorBehavior {
  ExecutorStrategy strategy = ExecutorStrategy::honest;
  double q = 1.0;
  /// Members publish their asserter output to the group and echo the
  /// group's output when validating.
  std::optional<std::uint32_t> group;
  model::CorruptMode corrupt = model::CorruptMode::flip_last_bit;
  /// Answers requests forwarded by a colluding user with fabricated output.
  bool user_partner = false;

  bool byzantine() const { return strategy != ExecutorStrategy::honest || group || user_partner; }
};

/// Outputs posted by collusion group members, keyed by group and reqid.
class CollusionBoard {
 public:
  void publish(std::uint32_t group, const RequestId& reqid, const model::Vector& y) {
    posts_.insert_or_assign({group, reqid}, y);
  }
  const model::Vector* lookup(std::uint32_t group, const RequestId& reqid) const {
    auto it = posts_.find({group, reqid});
    return it == posts_.end() ? nullptr : &it->second;
  }

 private:
  std::map<std::pair<std::uint32_t, RequestId>, model::Vector> posts_;
};

class Executor {
 public:
  /// Coins are prf(coin_seed, id || task), private to this executor.
  Executor(ExecutorId id, KeyPair key, const Seed& coin_seed, ExecutorBehavior behavior,
           const model::ToyModel& model, CollusionBoard* board = nullptr);

  void on_message(NodeContext& ctx, const Message& msg);

  ExecutorId id() const { return id_; }
  const ExecutorBehavior& behavior() const { return behavior_; }

 private:
  struct TaskKey {
    RequestId reqid;
    Role role;
    std::uint32_t attempt;
    friend auto operator<=>(const TaskKey&, const TaskKey&) = default;
  };

  void on_task(NodeContext& ctx, const TaskAssignment& msg);
  /// PRF coin private to this executor, fixed per task.
  bool coin(const TaskKey& key, double q) const;
  std::optional<model::Vector> choose_output(NodeContext& ctx, const TaskKey& key,
                                             const model::Vector& x);
  model::Vector fabricate(const model::Vector& x) const;

  ExecutorId id_;
  KeyPair key_;
  Seed coin_seed_;
  ExecutorBehavior behavior_;
  const model::ToyModel& model_;
  CollusionBoard* board_;
  std::map<TaskKey, TaskQuorum> tasks_;
  std::map<RequestId, model::Vector> leaked_;
  std::set<RequestId> partner_requests_;
};

}  // namespace posp::protocol
