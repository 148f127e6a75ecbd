// Environment a node state machine runs in: clock, transport, timers,
// beacon and observation hooks. The simulator provides the implementation.
#pragma once

#include <compare>
#include <optional>

#include "posp/protocol.hpp"

namespace posp::protocol {

enum class NodeKind : std::uint8_t { user, orchestrator, executor, arbitration, settlement };

struct Address {
  NodeKind kind = NodeKind::user;
  std::uint32_t index = 0;

  static Address user(UserId u) { return {NodeKind::user, u}; }
  static Address orchestrator(OrchestratorId o) { return {NodeKind::orchestrator, o}; }
  static Address executor(ExecutorId e) { return {NodeKind::executor, e}; }
  static Address arbitration() { return {NodeKind::arbitration, 0}; }
  static Address settlement() { return {NodeKind::settlement, 0}; }
  friend auto operator<=>(const Address&, const Address&) = default;
};

enum class TimerKind : std::uint8_t {
  submit,            // user: send request `value`
  process_request,   // orchestrator: t_req reached
  assert_deadline,   // orchestrator: challenge decision or asserter timeout
  validate_deadline, // orchestrator: validator timeout
  settlement,        // orchestrator: settlement round `value`
};

struct Timer {
  TimerKind kind = TimerKind::submit;
  RequestId reqid;
  std::uint32_t attempt = 1;
  std::uint64_t value = 0;
};

class NodeContext {
 public:
  virtual ~NodeContext() = default;

  virtual Tick now() const = 0;
  virtual const NetworkConfig& config() const = 0;
  virtual const Pki& pki() const = 0;

  /// Delivers after `delay` ticks, the link default when absent.
  virtual void send(Address from, Address to, Message msg, std::optional<Tick> delay = std::nullopt) = 0;
  virtual void schedule(Address owner, Tick at, Timer timer) = 0;

  /// Seed of epoch t. Throws ProtocolViolation when t lies in the future.
  virtual const Seed& beacon(Epoch t) = 0;
  virtual crypto::VerifyCache& verifier() = 0;

  Epoch epoch() const { return config().epoch_of(now()); }
  Tick epoch_start(Epoch t) const { return t * config().epoch_ticks; }

  virtual void observe_phase(const RequestLifecycle&) {}
  virtual void observe_concluded(const RequestLifecycle&, const std::vector<LedgerDelta>&) {}
  virtual void observe_timeout(const RequestLifecycle&, Role, const TimeoutAction&) {}
  virtual void observe_evaluation(ExecutorId) {}
  virtual void observe_result(UserId, const RequestId&, const model::Vector&) {}
};

}  // namespace posp::protocol
