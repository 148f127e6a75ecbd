// On-chain components: the arbitration contract that recomputes disputed
// outputs and the settlement contract that applies agreed balance batches.
#pragma once

#include <map>
#include <set>
#include <vector>

#include "posp/ledger.hpp"
#include "posp/quorum.hpp"

namespace posp::protocol {

/// Honest/dishonest verdicts and ledger entries for a disputed request.
/// Dishonest parties lose S; an honest party receives R plus the slashed
/// deposit of the other party. Entries exclude the user payment and burn.
ArbitrationOutcome judge(const ArbitrationEvidence& ev, const model::Vector& y_true,
                         const NetworkConfig& cfg);

class ArbitrationContract {
 public:
  ArbitrationContract(const NetworkConfig& cfg, const Pki& pki, const model::ToyModel& model,
                      crypto::VerifyCache& cache);

  /// Records one orchestrator's signed request. Returns the outcome once
  /// 2f+1 distinct orchestrators have signed identical evidence, BelowQuorum
  /// before that and DuplicateRequest after the outcome is recorded.
  Result<ArbitrationOutcome> submit(const ArbitrationRequest& req);

  const std::map<RequestId, ArbitrationOutcome>& outcomes() const { return outcomes_; }
  std::size_t evaluations() const { return evaluations_; }

 private:
  const NetworkConfig& cfg_;
  const Pki& pki_;
  const model::ToyModel& model_;
  crypto::VerifyCache& cache_;
  std::map<RequestId, SignatureCollector> pending_;
  std::map<Digest, ArbitrationEvidence> evidence_;
  std::map<RequestId, ArbitrationOutcome> outcomes_;
  std::set<RequestId> rejected_;
  std::size_t evaluations_ = 0;
};

class SettlementContract {
 public:
  /// `arbitration` may be null, in which case slashes are not cross-checked.
  SettlementContract(const NetworkConfig& cfg, const Pki& pki, Ledger& ledger,
                     const ArbitrationContract* arbitration, crypto::VerifyCache& cache);

  /// Records one orchestrator's signed batch; settles once 2f+1 distinct
  /// orchestrators have signed the same batch for a round.
  Result<SettlementReceipt> submit(const SettlementVote& vote);

  /// Verifies the certificate, rejects reqids settled before, audits each
  /// request's entries and applies the batch atomically.
  Result<SettlementReceipt> settle(const SettlementBatch& batch, const QuorumCertificate& qc);

  const std::set<RequestId>& settled() const { return settled_; }
  std::size_t rejected_batches() const { return rejected_batches_; }
  const Ledger& ledger() const { return ledger_; }

 private:
  std::optional<Rejection> check_arbitration(const RequestId& reqid,
                                             const std::vector<LedgerDelta>& entries) const;

  const NetworkConfig& cfg_;
  const Pki& pki_;
  Ledger& ledger_;
  const ArbitrationContract* arbitration_;
  crypto::VerifyCache& cache_;
  std::map<std::uint64_t, SignatureCollector> rounds_;
  std::map<Digest, SettlementBatch> batches_;
  std::set<std::uint64_t> closed_rounds_;
  std::set<RequestId> settled_;
  std::size_t rejected_batches_ = 0;
};

}  // namespace posp::protocol
