#include "posp/ledger.hpp"

namespace posp::protocol {

void Ledger::fund(const Account& account, Amount amount) {
  if (sealed_) throw ProtocolViolation("opening balances are fixed after the first settlement");
  if (account.kind == AccountKind::sink) throw ProtocolViolation("the burn sink cannot be funded");
  balances_[account] += amount;
  opening_supply_ += amount;
}

void Ledger::apply(const std::vector<LedgerDelta>& deltas) {
  Amount sum = 0;
  for (const auto& d : deltas) {
    if (__builtin_add_overflow(sum, d.amount, &sum)) throw ProtocolViolation("ledger batch overflow");
  }
  if (sum != 0) throw ProtocolViolation("ledger batch does not sum to zero");
  sealed_ = true;
  for (const auto& d : deltas) balances_[d.account] += d.amount;
}

Amount Ledger::balance(const Account& account) const {
  auto it = balances_.find(account);
  return it == balances_.end() ? 0 : it->second;
}

Amount Ledger::circulating() const {
  Amount total = 0;
  for (const auto& [account, amount] : balances_) {
    if (account.kind != AccountKind::sink) total += amount;
  }
  return total;
}

}  // namespace posp::protocol
