#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

#include "bnb/cards.hpp"
#include "bnb/engine.hpp"

namespace bnb::testing {

// Incident cards and split of the published homogeneous-centralized example game. The
// inject pile is ordered so the two injects that game drew come out first.
inline GameSetup published_setup(const CardRegistry& reg) {
  GameSetup s;
  s.scenario.cards = {reg.attack_index("ic.external_cloud_access"), reg.attack_index("pe.credential_stuffing"),
                      reg.attack_index("c2.http_exfil"), reg.attack_index("p.application_shimming")};
  for (const char* id : {"server_analysis", "endpoint_analysis", "crisis_management", "isolation"}) {
    s.established.push_back(reg.procedure_index(id));
  }
  std::sort(s.established.begin(), s.established.end());
  s.inject_pile = {reg.inject_index("lead_handler_has_a_baby"), reg.inject_index("honeypots_deployed")};
  for (std::size_t i = 0; i < reg.injects().size(); ++i) {
    if (std::find(s.inject_pile.begin(), s.inject_pile.end(), i) == s.inject_pile.end()) s.inject_pile.push_back(i);
  }
  return s;
}

inline const std::vector<int> kPublishedDice = {4, 16, 1, 14, 20, 15};
inline const std::vector<std::string> kPublishedChoices = {"endpoint_analysis", "server_analysis", "siem",
                                                           "isolation",         "ueba",            "memory_analysis"};

// Single-field corruptions of a card database document, each with a label.
inline std::vector<std::pair<std::string, nlohmann::json>> card_db_mutations(const nlohmann::json& base) {
  std::vector<std::pair<std::string, nlohmann::json>> out;
  auto add = [&](std::string label, auto&& fn) {
    nlohmann::json doc = base;
    fn(doc);
    out.emplace_back(std::move(label), std::move(doc));
  };
  const auto& attacks = base["attack_cards"];
  for (std::size_t i = 0; i < attacks.size(); i += 4) {
    const auto n = std::to_string(i);
    add("attack[" + n + "].stage=bogus", [&](auto& d) { d["attack_cards"][i]["stage"] = "Exfiltration"; });
    add("attack[" + n + "].stage=other", [&](auto& d) {
      d["attack_cards"][i]["stage"] = d["attack_cards"][i]["stage"] == "Persistence" ? "C2Exfil" : "Persistence";
    });
    add("attack[" + n + "].detection+=unknown",
        [&](auto& d) { d["attack_cards"][i]["detection"].push_back("Nonexistent Procedure"); });
    add("attack[" + n + "].detection=[]", [&](auto& d) { d["attack_cards"][i]["detection"] = nlohmann::json::array(); });
    add("attack[" + n + "].id=dup", [&](auto& d) {
      d["attack_cards"][i]["id"] = d["attack_cards"][(i + 1) % attacks.size()]["id"];
    });
    add("attack[" + n + "].removed", [&](auto& d) { d["attack_cards"].erase(i); });
    add("attack[" + n + "].extra_field", [&](auto& d) { d["attack_cards"][i]["artwork"] = "card.png"; });
    add("attack[" + n + "].name=renamed", [&](auto& d) { d["attack_cards"][i]["name"] = "Renamed Card"; });
  }
  add("attack[1].name=dup_in_stage", [&](auto& d) { d["attack_cards"][1]["name"] = d["attack_cards"][0]["name"]; });
  add("attack[0].detection=string", [&](auto& d) { d["attack_cards"][0]["detection"] = "siem"; });
  add("attack[0].detection.dup", [&](auto& d) {
    d["attack_cards"][0]["detection"].push_back(d["attack_cards"][0]["detection"][0]);
  });
  add("attack[0].detection.pop", [&](auto& d) { d["attack_cards"][0]["detection"].erase(0); });
  for (std::size_t i = 0; i < base["procedures"].size(); i += 3) {
    const auto n = std::to_string(i);
    add("procedure[" + n + "].removed", [&](auto& d) { d["procedures"].erase(i); });
    add("procedure[" + n + "].id=dup", [&](auto& d) {
      d["procedures"][i]["id"] = d["procedures"][(i + 1) % d["procedures"].size()]["id"];
    });
    add("procedure[" + n + "].name=renamed", [&](auto& d) { d["procedures"][i]["name"] = "Renamed Procedure"; });
    add("procedure[" + n + "].extra_field", [&](auto& d) { d["procedures"][i]["modifier"] = 3; });
  }
  add("procedure[0].name=empty", [&](auto& d) { d["procedures"][0]["name"] = ""; });
  for (std::size_t i = 0; i < base["injects"].size(); ++i) {
    const auto n = std::to_string(i);
    add("inject[" + n + "].kind=bogus", [&](auto& d) { d["injects"][i]["effect"]["kind"] = "Teleport"; });
  }
  auto find_inject = [&](const std::string& kind) {
    for (std::size_t i = 0; i < base["injects"].size(); ++i) {
      if (base["injects"][i]["effect"]["kind"] == kind) return i;
    }
    return std::size_t{0};
  };
  const auto silence = find_inject("SilenceDefender");
  const auto extend = find_inject("ExtendLastCooldown");
  const auto promote = find_inject("PromoteToEstablished");
  add("inject.silence.turns=0", [&](auto& d) { d["injects"][silence]["effect"]["turns"] = 0; });
  add("inject.silence.selector=bogus", [&](auto& d) { d["injects"][silence]["effect"]["selector"] = "Tallest"; });
  add("inject.silence.turns=2->1", [&](auto& d) {
    d["injects"][silence]["effect"]["turns"] = d["injects"][silence]["effect"]["turns"].template get<int>() == 1 ? 2 : 1;
  });
  add("inject.extend.extra_turns=0", [&](auto& d) { d["injects"][extend]["effect"]["extra_turns"] = 0; });
  add("inject.extend.extra_turns=-3", [&](auto& d) { d["injects"][extend]["effect"]["extra_turns"] = -3; });
  add("inject.promote.procedure=unknown", [&](auto& d) { d["injects"][promote]["effect"]["procedure"] = "nope"; });
  add("inject.promote.extra_param", [&](auto& d) { d["injects"][promote]["effect"]["turns"] = 1; });
  add("inject[0].removed", [&](auto& d) { d["injects"].erase(0); });
  add("inject[0].id=dup", [&](auto& d) { d["injects"][0]["id"] = d["injects"][1]["id"]; });
  add("inject[0].id=attack_id", [&](auto& d) { d["injects"][0]["id"] = d["attack_cards"][0]["id"]; });
  add("format=bogus", [&](auto& d) { d["format"] = "bnb-cards/9"; });
  add("version=bumped", [&](auto& d) { d["version"] = "9.9.9"; });
  add("top.extra_field", [&](auto& d) { d["assets"] = nlohmann::json::array(); });
  add("top.procedures=object", [&](auto& d) { d["procedures"] = nlohmann::json::object(); });
  return out;
}

}  // namespace bnb::testing
