// JSON form of run results. Keys are sorted; amounts are integer units.
#pragma once

#include <string>

#include "posp/simulator.hpp"

namespace posp::sim {

std::string metrics_to_json(const MetricsReport& m);
/// {"executors": [...], "users": [...], "sink": n}, indexed by node id.
std::string ledger_to_json(const std::map<protocol::Account, Amount>& ledger);

}  // namespace posp::sim
