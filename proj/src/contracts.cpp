#include "posp/contracts.hpp"

#include <algorithm>

namespace posp::protocol {

ArbitrationOutcome judge(const ArbitrationEvidence& ev, const model::Vector& y_true,
                         const NetworkConfig& cfg) {
  ArbitrationOutcome out;
  out.reqid = ev.reqid;
  out.y_true = y_true;
  out.asserter = ev.asserter;
  out.validator = ev.validator;
  const Bytes truth = model::encode(y_true);
  const bool asserter_ok = model::encode(ev.y_asserter) == truth;
  const bool validator_ok = model::encode(ev.y_validator) == truth;
  out.asserter_verdict = asserter_ok ? Verdict::honest : Verdict::dishonest;
  out.validator_verdict = validator_ok ? Verdict::honest : Verdict::dishonest;

  auto add = [&](ExecutorId who, Amount amount, Reason reason) {
    out.deltas.push_back({Account::executor(who), amount, reason, ev.reqid});
  };
  if (!asserter_ok) add(ev.asserter, -cfg.slash, Reason::slash);
  if (!validator_ok) add(ev.validator, -cfg.slash, Reason::slash);
  if (asserter_ok && !validator_ok) {
    add(ev.asserter, cfg.reward, Reason::asserter_reward);
    add(ev.asserter, cfg.slash, Reason::slash_redistribution);
  } else if (validator_ok && !asserter_ok) {
    add(ev.validator, cfg.reward, Reason::validator_reward);
    add(ev.validator, cfg.slash, Reason::slash_redistribution);
  }
  return out;
}

ArbitrationContract::ArbitrationContract(const NetworkConfig& cfg, const Pki& pki,
                                         const model::ToyModel& model, crypto::VerifyCache& cache)
    : cfg_(cfg), pki_(pki), model_(model), cache_(cache) {}

Result<ArbitrationOutcome> ArbitrationContract::submit(const ArbitrationRequest& req) {
  const ArbitrationEvidence& ev = req.evidence;
  if (outcomes_.contains(ev.reqid) || rejected_.contains(ev.reqid)) {
    return Rejection::duplicate_request;
  }
  const Bytes payload = arbitration_payload(ev);
  auto [it, _] = pending_.try_emplace(ev.reqid, pki_.orchestrators, cfg_.quorum());
  SignatureCollector& collector = it->second;
  if (collector.add(req.from, payload, req.orch_sig, cache_) == SignatureCollector::Added::invalid) {
    return Rejection::invalid_signature;
  }
  const Digest digest = crypto::sha256(payload);
  evidence_.try_emplace(digest, ev);
  if (!collector.certificate()) return Rejection::below_quorum;

  const ArbitrationEvidence agreed = evidence_.at(collector.certificate()->digest);
  pending_.erase(it);
  const bool parties_known = agreed.asserter < pki_.executors.size() &&
                             agreed.validator < pki_.executors.size() &&
                             agreed.asserter != agreed.validator;
  if (!parties_known ||
      !cache_.verify(pki_.executors[agreed.asserter],
                     execution_payload(agreed.x, agreed.reqid, agreed.y_asserter),
                     agreed.sig_asserter) ||
      !cache_.verify(pki_.executors[agreed.validator],
                     execution_payload(agreed.x, agreed.reqid, agreed.y_validator),
                     agreed.sig_validator)) {
    rejected_.insert(agreed.reqid);
    return Rejection::invalid_evidence_signature;
  }
  if (orch_compare_and_route(agreed.y_asserter, agreed.y_validator) == Route::matched) {
    rejected_.insert(agreed.reqid);
    return Rejection::malformed;
  }
  ++evaluations_;
  const model::Vector y_true = model::forward(model_, agreed.x);
  ArbitrationOutcome outcome = judge(agreed, y_true, cfg_);
  outcomes_.emplace(agreed.reqid, outcome);
  return outcome;
}

SettlementContract::SettlementContract(const NetworkConfig& cfg, const Pki& pki, Ledger& ledger,
                                       const ArbitrationContract* arbitration,
                                       crypto::VerifyCache& cache)
    : cfg_(cfg), pki_(pki), ledger_(ledger), arbitration_(arbitration), cache_(cache) {}

Result<SettlementReceipt> SettlementContract::submit(const SettlementVote& vote) {
  if (closed_rounds_.contains(vote.batch.round)) return Rejection::already_settled;
  const Digest hash = batch_hash(vote.batch);
  const Bytes payload = settlement_payload(vote.batch.round, hash);
  auto [it, _] = rounds_.try_emplace(vote.batch.round, pki_.orchestrators, cfg_.quorum());
  if (it->second.add(vote.from, payload, vote.sig, cache_) == SignatureCollector::Added::invalid) {
    return Rejection::invalid_signature;
  }
  batches_.try_emplace(crypto::sha256(payload), vote.batch);
  const auto& qc = it->second.certificate();
  if (!qc) return Rejection::below_quorum;

  const QuorumCertificate cert = *qc;
  const SettlementBatch batch = batches_.at(cert.digest);
  closed_rounds_.insert(batch.round);
  rounds_.erase(it);
  return settle(batch, cert);
}

std::optional<Rejection> SettlementContract::check_arbitration(
    const RequestId& reqid, const std::vector<LedgerDelta>& entries) const {
  const bool has_slash = std::any_of(entries.begin(), entries.end(), [](const LedgerDelta& d) {
    return d.reason == Reason::slash || d.reason == Reason::slash_redistribution;
  });
  if (arbitration_ == nullptr) return std::nullopt;
  auto it = arbitration_->outcomes().find(reqid);
  if (it == arbitration_->outcomes().end()) {
    if (has_slash) return Rejection::conservation_violation;
    return std::nullopt;
  }
  std::vector<LedgerDelta> remaining = entries;
  for (const auto& d : it->second.deltas) {
    auto pos = std::find(remaining.begin(), remaining.end(), d);
    if (pos == remaining.end()) return Rejection::conservation_violation;
    remaining.erase(pos);
  }
  for (const auto& d : remaining) {
    if (d.reason != Reason::user_payment && d.reason != Reason::burn &&
        d.reason != Reason::timeout_penalty) {
      return Rejection::conservation_violation;
    }
  }
  return std::nullopt;
}

Result<SettlementReceipt> SettlementContract::settle(const SettlementBatch& batch,
                                                     const QuorumCertificate& qc) {
  if (qc.signatures.size() < cfg_.quorum()) {
    ++rejected_batches_;
    return Rejection::below_quorum;
  }
  const Bytes payload = settlement_payload(batch.round, batch_hash(batch));
  if (!is_valid_certificate(qc, payload, pki_.orchestrators, cfg_.quorum(), cache_)) {
    ++rejected_batches_;
    return Rejection::invalid_signature;
  }

  std::map<RequestId, std::vector<LedgerDelta>> per_request;
  std::vector<RequestId> order;
  for (const auto& d : batch.deltas) {
    auto [it, fresh] = per_request.try_emplace(d.reqid);
    if (fresh) order.push_back(d.reqid);
    it->second.push_back(d);
  }
  std::optional<Rejection> failure;
  for (const auto& reqid : order) {
    const auto& entries = per_request.at(reqid);
    if (settled_.contains(reqid)) {
      failure = Rejection::already_settled;
    } else if (audit_request(entries, cfg_)) {
      failure = Rejection::conservation_violation;
    } else {
      failure = check_arbitration(reqid, entries);
    }
    if (failure) break;
  }
  if (failure) {
    ++rejected_batches_;
    return *failure;
  }

  ledger_.apply(batch.deltas);
  if (!ledger_.supply_conserved()) throw ProtocolViolation("token supply changed outside burns");
  SettlementReceipt receipt;
  receipt.round = batch.round;
  receipt.settled = order;
  settled_.insert(order.begin(), order.end());
  return receipt;
}

}  // namespace posp::protocol
