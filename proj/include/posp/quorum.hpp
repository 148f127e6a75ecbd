// Quorum certificates: 2f+1 distinct orchestrator signatures over one
// canonical message, plus the collectors that build them from votes.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "posp/protocol.hpp"

namespace posp::protocol {

struct QuorumCertificate {
  Digest digest;  // sha256 of the signed canonical message
  std::vector<std::pair<OrchestratorId, Signature>> signatures;
};

/// Checks that the certificate is over `message`, carries at least `quorum`
/// signatures from distinct committee members and that each one verifies.
/// Any failure is a ProtocolViolation: an action that consumes a certificate
/// must never proceed on a bad one.
void require_certificate(const QuorumCertificate& qc, crypto::ByteView message,
                         std::span<const PublicKey> committee, std::uint32_t quorum,
                         crypto::VerifyCache& cache);

bool is_valid_certificate(const QuorumCertificate& qc, crypto::ByteView message,
                          std::span<const PublicKey> committee, std::uint32_t quorum,
                          crypto::VerifyCache& cache);

/// Collects signatures per message digest until one digest reaches quorum.
class SignatureCollector {
 public:
  SignatureCollector(std::span<const PublicKey> committee, std::uint32_t quorum)
      : committee_(committee.begin(), committee.end()), quorum_(quorum) {}

  enum class Added { fresh, duplicate, invalid };

  /// Verifies `sig` from `from` over `message` and records it.
  Added add(OrchestratorId from, crypto::ByteView message, const Signature& sig,
            crypto::VerifyCache& cache);

  /// First certificate to reach quorum; stays fixed once formed.
  const std::optional<QuorumCertificate>& certificate() const { return certificate_; }
  std::size_t count(const Digest& digest) const;

 private:
  std::vector<PublicKey> committee_;
  std::uint32_t quorum_;
  std::map<Digest, std::map<OrchestratorId, Signature>> by_digest_;
  std::optional<QuorumCertificate> certificate_;
};

/// Counts unsigned votes per content over authenticated channels, one vote
/// per sender per key.
template <typename Content>
class VoteTally {
 public:
  explicit VoteTally(std::uint32_t quorum) : quorum_(quorum) {}

  /// Returns the content the first time it reaches quorum.
  std::optional<Content> add(OrchestratorId from, const Content& content) {
    if (decided_ || !voters_.insert(from).second) return std::nullopt;
    if (++counts_[content] >= quorum_) {
      decided_ = content;
      return content;
    }
    return std::nullopt;
  }

  const std::optional<Content>& decided() const { return decided_; }

 private:
  std::uint32_t quorum_;
  std::set<OrchestratorId> voters_;
  std::map<Content, std::uint32_t> counts_;
  std::optional<Content> decided_;
};

}  // namespace posp::protocol
