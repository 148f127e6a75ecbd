#include "posp/quorum.hpp"

#include <set>

namespace posp::protocol {

void require_certificate(const QuorumCertificate& qc, crypto::ByteView message,
                         std::span<const PublicKey> committee, std::uint32_t quorum,
                         crypto::VerifyCache& cache) {
  if (crypto::sha256(message) != qc.digest) throw ProtocolViolation("certificate digest mismatch");
  if (qc.signatures.size() < quorum) throw ProtocolViolation("certificate below quorum");
  std::set<OrchestratorId> seen;
  for (const auto& [id, sig] : qc.signatures) {
    if (id >= committee.size()) throw ProtocolViolation("certificate signer outside the committee");
    if (!seen.insert(id).second) throw ProtocolViolation("certificate repeats a signer");
    if (!cache.verify(committee[id], message, sig)) {
      throw ProtocolViolation("certificate carries an invalid signature");
    }
  }
}

bool is_valid_certificate(const QuorumCertificate& qc, crypto::ByteView message,
                          std::span<const PublicKey> committee, std::uint32_t quorum,
                          crypto::VerifyCache& cache) {
  try {
    require_certificate(qc, message, committee, quorum, cache);
    return true;
  } catch (const ProtocolViolation&) {
    return false;
  }
}

SignatureCollector::Added SignatureCollector::add(OrchestratorId from, crypto::ByteView message,
                                                  const Signature& sig, crypto::VerifyCache& cache) {
  if (from >= committee_.size() || !cache.verify(committee_[from], message, sig)) {
    return Added::invalid;
  }
  const Digest digest = crypto::sha256(message);
  auto& sigs = by_digest_[digest];
  if (!sigs.emplace(from, sig).second) return Added::duplicate;
  if (!certificate_ && sigs.size() >= quorum_) {
    QuorumCertificate qc;
    qc.digest = digest;
    qc.signatures.assign(sigs.begin(), sigs.end());
    require_certificate(qc, message, committee_, quorum_, cache);
    certificate_ = std::move(qc);
  }
  return Added::fresh;
}

std::size_t SignatureCollector::count(const Digest& digest) const {
  auto it = by_digest_.find(digest);
  return it == by_digest_.end() ? 0 : it->second.size();
}

}  // namespace posp::protocol
