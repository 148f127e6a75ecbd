#include "posp/user.hpp"

namespace posp::protocol {

User::User(UserId id, KeyPair key, UserBehavior behavior)
    : id_(id), key_(std::move(key)), behavior_(behavior) {}

RequestId User::submit(NodeContext& ctx, model::Vector x, Bytes nonce) {
  RequestSubmission msg = user_submit(id_, key_, std::move(x), std::move(nonce));
  const RequestId reqid = request_id(msg);
  ctx.verifier().remember(key_.public_key(), user_request_payload(msg.x, msg.nonce, reqid), msg.user_sig);
  pending_.emplace(reqid, msg.x);
  const Address self = Address::user(id_);
  if (behavior_.collude_with) ctx.send(self, Address::executor(*behavior_.collude_with), msg, Tick{0});
  for (OrchestratorId o = 0; o < ctx.config().committee_size(); ++o) {
    ctx.send(self, Address::orchestrator(o), msg);
  }
  return reqid;
}

void User::on_message(NodeContext& ctx, const Message& msg) {
  const auto* notice = std::get_if<ResultNotice>(&msg);
  if (notice == nullptr) return;
  auto pending = pending_.find(notice->reqid);
  if (pending == pending_.end()) return;
  crypto::Canonical c;
  c.field_u64(notice->executor).field(model::encode(notice->y)).field(notice->executor_sig);
  const Digest content = crypto::sha256(c.bytes());
  candidates_[notice->reqid].try_emplace(content, *notice);
  auto [tally, _] = notices_.try_emplace(notice->reqid, ctx.config().quorum());
  auto decided = tally->second.add(notice->from, content);
  if (!decided) return;
  const ResultNotice agreed = candidates_[notice->reqid].at(*decided);
  const model::Vector x = std::move(pending->second);
  pending_.erase(pending);
  notices_.erase(tally);
  candidates_.erase(notice->reqid);
  if (agreed.executor >= ctx.pki().executors.size() ||
      !ctx.verifier().verify(ctx.pki().executors[agreed.executor],
                             execution_payload(x, agreed.reqid, agreed.y), agreed.executor_sig)) {
    return;
  }
  ++results_;
  ctx.observe_result(id_, agreed.reqid, agreed.y);
}

}  // namespace posp::protocol
