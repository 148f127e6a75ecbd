#include "posp/report.hpp"

#include "json.hpp"

namespace posp::sim {

using json = nlohmann::json;

std::string metrics_to_json(const MetricsReport& m) {
  json doc;
  doc["counts"] = {{"requests", m.requests},
                   {"concluded", m.concluded},
                   {"settled", m.settled},
                   {"results_delivered", m.results_delivered},
                   {"correct_results", m.correct_results},
                   {"unchallenged", m.unchallenged},
                   {"challenges", m.challenges},
                   {"matched", m.matched},
                   {"arbitrations", m.arbitrations},
                   {"undetected_frauds", m.undetected_frauds},
                   {"detected_frauds", m.detected_frauds},
                   {"fraudulent_assertions", m.fraudulent_assertions},
                   {"passed_fraudulent_assertions", m.passed_fraudulent_assertions},
                   {"timeouts", m.timeouts},
                   {"reassignments", m.reassignments},
                   {"rejected_batches", m.rejected_batches},
                   {"events", m.events}};
  doc["rates"] = {{"challenge_rate", m.challenge_rate}, {"cheat_pass_rate", m.cheat_pass_rate}};
  doc["invariants"] = {{"arbitration_violations", m.arbitration_violations},
                       {"conservation_violations", m.conservation_violations},
                       {"phase_violations", m.phase_violations},
                       {"causality_violations", m.causality_violations},
                       {"supply_conserved", m.supply_conserved},
                       {"all_settled", m.all_settled},
                       {"hold", m.invariants_hold()}};
  doc["supply"] = {{"opening_units", m.opening_supply},
                   {"circulating_units", m.circulating},
                   {"burned_units", m.burned}};
  json executors = json::array();
  for (std::size_t e = 0; e < m.executors.size(); ++e) {
    const NodePayoff& p = m.executors[e];
    executors.push_back({{"id", e},
                         {"ledger_net_units", p.ledger_net},
                         {"evaluations", p.evaluations},
                         {"payoff_tokens", p.payoff}});
  }
  doc["executors"] = executors;
  json users = json::array();
  for (std::size_t u = 0; u < m.users.size(); ++u) {
    users.push_back({{"id", u}, {"ledger_net_units", m.users[u]}});
  }
  doc["users"] = users;
  doc["end_tick"] = m.end_tick;
  doc["trace_hash"] = m.trace_hash ? json(crypto::to_hex(*m.trace_hash)) : json(nullptr);
  return doc.dump(2) + "\n";
}

std::string ledger_to_json(const std::map<protocol::Account, Amount>& ledger) {
  json doc;
  doc["executors"] = json::array();
  doc["users"] = json::array();
  doc["sink"] = 0;
  for (const auto& [account, amount] : ledger) {
    switch (account.kind) {
      case protocol::AccountKind::user:
        doc["users"].push_back({{"id", account.index}, {"units", amount}});
        break;
      case protocol::AccountKind::executor:
        doc["executors"].push_back({{"id", account.index}, {"units", amount}});
        break;
      case protocol::AccountKind::sink:
        doc["sink"] = amount;
        break;
    }
  }
  return doc.dump(2) + "\n";
}

}  // namespace posp::sim
