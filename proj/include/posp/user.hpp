// Client node: signs and broadcasts requests and accepts a result once
// 2f+1 orchestrators forward the same signed output.
#pragma once

#include <map>
#include <optional>

#include "posp/node.hpp"
#include "posp/quorum.hpp"

namespace posp::protocol {

struct UserBehavior {
  /// Executor that receives a copy of every request for a rigged answer.
  std::optional<ExecutorId> collude_with;
};

class User {
 public:
  User(UserId id, KeyPair key, UserBehavior behavior = {});

  /// Broadcasts a signed request to the committee and returns its reqid.
  RequestId submit(NodeContext& ctx, model::Vector x, Bytes nonce);
  void on_message(NodeContext& ctx, const Message& msg);

  UserId id() const { return id_; }
  const UserBehavior& behavior() const { return behavior_; }
  std::size_t results() const { return results_; }

 private:
  UserId id_;
  KeyPair key_;
  UserBehavior behavior_;
  std::map<RequestId, model::Vector> pending_;
  std::map<RequestId, VoteTally<Digest>> notices_;
  std::map<RequestId, std::map<Digest, ResultNotice>> candidates_;
  std::size_t results_ = 0;
};

}  // namespace posp::protocol
