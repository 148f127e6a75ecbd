// Protocol vocabulary shared by every role: identifiers, token amounts,
// network configuration, request lifecycle, ledger entries, messages and
// the stateless protocol steps (selection, challenge decision, routing).
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "posp/crypto.hpp"
#include "posp/model.hpp"

namespace posp::protocol {

using crypto::Bytes;
using crypto::Digest;
using crypto::KeyPair;
using crypto::PublicKey;
using crypto::RequestId;
using crypto::Seed;
using crypto::Signature;

using Amount = std::int64_t;
inline constexpr Amount kUnitsPerToken = 1'000'000;

/// Nearest integer number of micro-token units.
Amount to_units(double tokens);
double to_tokens(Amount units);

using Tick = std::uint64_t;
using Epoch = std::uint64_t;
using ExecutorId = std::uint32_t;
using OrchestratorId = std::uint32_t;
using UserId = std::uint32_t;

struct NetworkConfig {
  std::uint32_t executors = 2;       // N
  std::uint32_t fault_bound = 1;     // f, committee of 3f+1
  double challenge_prob = 0.0;       // p
  std::uint32_t assert_timeout = 2;  // T_assert, epochs
  std::uint32_t validate_timeout = 2;
  Amount payment = 0;                // B
  Amount reward = 0;                 // R
  Amount slash = 0;                  // S
  Amount compute_cost = 0;           // C, off-ledger
  Amount timeout_penalty = 0;
  Tick epoch_ticks = 10;
  Tick message_delay = 1;
  std::uint32_t settle_every = 1;    // epochs between settlement rounds

  std::uint32_t committee_size() const { return 3 * fault_bound + 1; }
  std::uint32_t quorum() const { return 2 * fault_bound + 1; }
  Epoch epoch_of(Tick t) const { return t / epoch_ticks; }
};

std::vector<std::string> validation_errors(const NetworkConfig& config);
void require_valid(const NetworkConfig& config);

/// Broken protocol invariant (phase order, quorum soundness, conservation).
struct ProtocolViolation : std::logic_error {
  using std::logic_error::logic_error;
};

enum class Rejection {
  invalid_signature,
  duplicate_request,
  below_quorum,
  already_settled,
  conservation_violation,
  invalid_evidence_signature,
  unknown_request,
  malformed,
};

std::string_view to_string(Rejection r);

/// Value or rejection reason.
template <typename T>
class Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Rejection r) : v_(r) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return std::get<T>(v_); }
  T& value() { return std::get<T>(v_); }
  Rejection error() const { return std::get<Rejection>(v_); }

 private:
  std::variant<T, Rejection> v_;
};

enum class Role : std::uint8_t { asserter, validator };
std::string_view to_string(Role r);

enum class Phase : std::uint8_t {
  submitted,
  assigned,
  asserted,
  unchallenged_done,
  challenged,
  matched_done,
  arbitrating,
  arbitrated_done,
  reassigned,
};

std::string_view to_string(Phase p);

/// Reassigned returns to Assigned for a new asserter and to Challenged for a
/// new validator; every other edge follows the protocol order.
bool is_allowed_transition(Phase from, Phase to);
bool is_terminal(Phase p);

struct RequestLifecycle {
  RequestId reqid;
  UserId user = 0;
  PublicKey user_pk;
  model::Vector x;
  Epoch t_req = 0;
  std::optional<Epoch> t_chal;
  ExecutorId asserter = 0;
  std::optional<ExecutorId> validator;
  std::optional<model::Vector> y_asserter;
  std::optional<Signature> sig_asserter;
  std::optional<model::Vector> y_validator;
  std::optional<Signature> sig_validator;
  std::uint32_t attempt = 1;
  Phase phase = Phase::submitted;
  std::vector<Phase> history{Phase::submitted};

  /// Throws ProtocolViolation on an edge outside the phase graph.
  void advance(Phase next);
};

/// True iff consecutive entries are allowed transitions from Submitted.
bool is_valid_phase_path(const std::vector<Phase>& history);

enum class Reason : std::uint8_t {
  user_payment,
  asserter_reward,
  validator_reward,
  slash,
  slash_redistribution,
  burn,
  timeout_penalty,
};

std::string_view to_string(Reason r);

enum class AccountKind : std::uint8_t { user, executor, sink };

struct Account {
  AccountKind kind = AccountKind::sink;
  std::uint32_t index = 0;

  static Account user(UserId u) { return {AccountKind::user, u}; }
  static Account executor(ExecutorId e) { return {AccountKind::executor, e}; }
  static Account sink() { return {AccountKind::sink, 0}; }
  friend auto operator<=>(const Account&, const Account&) = default;
};

std::string to_string(const Account& a);

struct LedgerDelta {
  Account account;
  Amount amount = 0;
  Reason reason = Reason::burn;
  RequestId reqid;
  friend bool operator==(const LedgerDelta&, const LedgerDelta&) = default;
};

enum class Verdict : std::uint8_t { honest, dishonest };

struct ArbitrationOutcome {
  RequestId reqid;
  model::Vector y_true;
  ExecutorId asserter = 0;
  ExecutorId validator = 0;
  Verdict asserter_verdict = Verdict::honest;
  Verdict validator_verdict = Verdict::honest;
  std::vector<LedgerDelta> deltas;
};

// ---------------------------------------------------------------- messages

struct RequestSubmission {
  UserId user = 0;
  PublicKey user_pk;
  model::Vector x;
  Bytes nonce;
  Signature user_sig;
};

enum class VoteKind : std::uint8_t { accept_request, accept_result, timeout };

/// Orchestrator-to-orchestrator agreement vote over an authenticated channel.
struct ConsensusVote {
  OrchestratorId from = 0;
  VoteKind kind = VoteKind::accept_request;
  RequestId reqid;
  Role role = Role::asserter;
  std::uint32_t attempt = 1;
  Epoch epoch = 0;  // proposed t_req / t_chal
  Digest content;
};

struct TaskAssignment {
  OrchestratorId from = 0;
  RequestId reqid;
  model::Vector x;
  Signature orch_sig;
  Role role = Role::asserter;
  std::uint32_t attempt = 1;
};

struct ExecutionResponse {
  ExecutorId from = 0;
  RequestId reqid;
  model::Vector x;
  model::Vector y;
  Signature sig;
  Role role = Role::asserter;
  std::uint32_t attempt = 1;
};

struct ResultNotice {
  OrchestratorId from = 0;
  RequestId reqid;
  ExecutorId executor = 0;  // signer of y
  model::Vector y;
  Signature executor_sig;
};

struct ArbitrationEvidence {
  model::Vector x;
  RequestId reqid;
  ExecutorId asserter = 0;
  model::Vector y_asserter;
  Signature sig_asserter;
  ExecutorId validator = 0;
  model::Vector y_validator;
  Signature sig_validator;
};

struct ArbitrationRequest {
  OrchestratorId from = 0;
  ArbitrationEvidence evidence;
  Signature orch_sig;
};

struct ArbitrationResult {
  ArbitrationOutcome outcome;
};

struct SettlementBatch {
  std::uint64_t round = 0;
  std::vector<LedgerDelta> deltas;
};

struct SettlementProposal {
  OrchestratorId from = 0;
  SettlementBatch batch;
};

struct SettlementVote {
  OrchestratorId from = 0;
  SettlementBatch batch;
  Signature sig;
};

struct SettlementReceipt {
  std::uint64_t round = 0;
  std::vector<RequestId> settled;
};

/// Out-of-band copy of an asserter's output from a colluding orchestrator.
struct LeakedResult {
  OrchestratorId from = 0;
  RequestId reqid;
  model::Vector y;
};

using Message = std::variant<RequestSubmission, ConsensusVote, TaskAssignment, ExecutionResponse,
                             ResultNotice, ArbitrationRequest, ArbitrationResult,
                             SettlementProposal, SettlementVote, SettlementReceipt, LeakedResult>;

std::string_view message_name(const Message& m);

/// Canonical encoding of a whole message (trace hashing).
Bytes encode(const Message& m);

// ------------------------------------------------------ signing payloads

Bytes user_request_payload(const model::Vector& x, crypto::ByteView nonce, const RequestId& reqid);
Bytes task_payload(const model::Vector& x, const RequestId& reqid);
Bytes execution_payload(const model::Vector& x, const RequestId& reqid, const model::Vector& y);
Bytes arbitration_payload(const ArbitrationEvidence& ev);
Bytes encode(const SettlementBatch& batch);
Digest batch_hash(const SettlementBatch& batch);
Bytes settlement_payload(std::uint64_t round, const Digest& batch_hash);

// ------------------------------------------------------------------ PKI

struct Pki {
  std::vector<PublicKey> users;
  std::vector<PublicKey> orchestrators;
  std::vector<PublicKey> executors;
};

// ---------------------------------------------------------- protocol steps

RequestId request_id(const RequestSubmission& msg);

/// Signed request message (x, nonce, sigma_user).
RequestSubmission user_submit(UserId user, const KeyPair& key, model::Vector x, Bytes nonce);

/// Checks the user signature against the PKI and rejects reqids in `known`.
Result<RequestId> orch_accept_request(const RequestSubmission& msg, const Pki& pki,
                                      const std::set<RequestId>& known, crypto::VerifyCache& cache);

/// Canonical pk_user || x || reqid, with an "attempt_a" field for a > 1.
Bytes selection_string(const PublicKey& pk_user, const model::Vector& x, const RequestId& reqid,
                       std::uint32_t attempt = 1);

ExecutorId orch_select_asserter(const RequestId& reqid, const PublicKey& pk_user,
                                const model::Vector& x, const Seed& tau_req, std::uint32_t n,
                                std::uint32_t attempt = 1);

bool orch_challenge_decision(const RequestId& reqid, const PublicKey& pk_user,
                             const model::Vector& x, const Seed& tau_chal, double p,
                             std::uint32_t attempt = 1);

/// Bucket draw with the (i+1) mod N collision rule. Throws
/// std::invalid_argument for N < 2.
ExecutorId orch_select_validator(const RequestId& reqid, const PublicKey& pk_user,
                                 const model::Vector& x, const Seed& tau_chal, std::uint32_t n,
                                 ExecutorId asserter, std::uint32_t attempt = 1);

enum class Route : std::uint8_t { matched, arbitrate };

/// Byte-exact comparison of the two outputs.
Route orch_compare_and_route(const model::Vector& y_asserter, const model::Vector& y_validator);

/// Appends UserPayment and a balancing Burn to `deltas` for one request.
std::vector<LedgerDelta> close_request(const RequestId& reqid, UserId user, Amount payment,
                                       std::vector<LedgerDelta> deltas);

/// Ledger entries of a request that ends without a challenge.
std::vector<LedgerDelta> unchallenged_deltas(const RequestLifecycle& life, const NetworkConfig& cfg,
                                             std::vector<LedgerDelta> penalties = {});

/// Ledger entries of a challenge whose outputs matched.
std::vector<LedgerDelta> matched_deltas(const RequestLifecycle& life, const NetworkConfig& cfg,
                                        std::vector<LedgerDelta> penalties = {});

struct TimeoutAction {
  ExecutorId penalized = 0;
  ExecutorId replacement = 0;
  std::uint32_t attempt = 1;
  LedgerDelta penalty;
};

/// Penalizes the silent executor, bumps the attempt counter and reruns the
/// selection for `role` with the attempt-suffixed string; moves the
/// lifecycle through Reassigned back to the role's waiting phase.
TimeoutAction orch_handle_timeout(RequestLifecycle& life, Role role, const NetworkConfig& cfg,
                                  const Seed& tau);

/// Per-request audit: deltas sum to zero, exactly one UserPayment of -B,
/// rewards funded by B, redistribution funded by slashes, every slash is
/// -S and the burn is non-negative. Returns a description of the first
/// failure.
std::optional<std::string> audit_request(const std::vector<LedgerDelta>& deltas,
                                         const NetworkConfig& cfg);

}  // namespace posp::protocol
