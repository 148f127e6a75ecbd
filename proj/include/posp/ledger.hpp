// Token balances held by the settlement contract.
#pragma once

#include <map>
#include <set>
#include <vector>

#include "posp/protocol.hpp"

namespace posp::protocol {

class Ledger {
 public:
  /// Credits an opening balance; only allowed before the first apply().
  void fund(const Account& account, Amount amount);

  /// Applies every delta or none. Throws ProtocolViolation if the entries
  /// do not sum to zero.
  void apply(const std::vector<LedgerDelta>& deltas);

  Amount balance(const Account& account) const;
  Amount opening_supply() const { return opening_supply_; }
  Amount burned() const { return balance(Account::sink()); }
  /// Sum over every non-sink account.
  Amount circulating() const;

  /// Circulating supply equals the opening supply minus burns.
  bool supply_conserved() const { return circulating() == opening_supply_ - burned(); }

  const std::map<Account, Amount>& balances() const { return balances_; }

 private:
  std::map<Account, Amount> balances_;
  Amount opening_supply_ = 0;
  bool sealed_ = false;
};

}  // namespace posp::protocol
