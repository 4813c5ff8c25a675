#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bnb/cards.hpp"
#include "bnb/engine.hpp"
#include "bnb/error.hpp"
#include "bnb/prompts.hpp"
#include "bnb/rng.hpp"

namespace bnb {

enum class Skill { Leader, Expert, Member, Beginner };
enum class Specialty { Endpoint, NetworkTraffic, LogBehavior, DeceptionContainment, IncidentResponse, Generalist };
enum class Leadership { Centralized, Decentralized, Hybrid };

inline std::string_view skill_key(Skill s) {
  switch (s) {
    case Skill::Leader: return "Leader";
    case Skill::Expert: return "Expert";
    case Skill::Member: return "Member";
    case Skill::Beginner: return "Beginner";
  }
  return "?";
}

inline std::string_view specialty_key(Specialty s) {
  switch (s) {
    case Specialty::Endpoint: return "Endpoint";
    case Specialty::NetworkTraffic: return "NetworkTraffic";
    case Specialty::LogBehavior: return "LogBehavior";
    case Specialty::DeceptionContainment: return "DeceptionContainment";
    case Specialty::IncidentResponse: return "IncidentResponse";
    case Specialty::Generalist: return "Generalist";
  }
  return "?";
}

// Higher outranks lower when an inject targets "the most skilled handler".
inline int skill_rank(Skill s) {
  switch (s) {
    case Skill::Leader: return 3;
    case Skill::Expert: return 2;
    case Skill::Member: return 1;
    case Skill::Beginner: return 0;
  }
  return 0;
}

struct RoleSpec {
  std::string role_name;
  std::string responsibilities;
  Skill skill = Skill::Member;
  std::optional<Specialty> specialty;

  friend bool operator==(const RoleSpec&, const RoleSpec&) = default;
};

struct TeamStructure {
  std::string name;
  std::vector<RoleSpec> defenders;

  friend bool operator==(const TeamStructure&, const TeamStructure&) = default;
};

inline const std::vector<std::string>& team_structure_names() {
  static const std::vector<std::string> names = {"Homo-Cen", "Hetero-Cen", "Homo-Dec",
                                                 "Hetero-Dec", "Homo-Hyb", "Hetero-Hyb"};
  return names;
}

inline Leadership leadership_of(std::string_view structure) {
  if (structure.ends_with("-Cen")) return Leadership::Centralized;
  if (structure.ends_with("-Dec")) return Leadership::Decentralized;
  if (structure.ends_with("-Hyb")) return Leadership::Hybrid;
  throw Error("unknown team structure '" + std::string(structure) + "'");
}

namespace roles {

// Responsibility texts are editable defaults, not canonical game material.
inline RoleSpec leader() {
  return {"Team Leader",
          "- Coordinate the discussion, weigh every teammate's input, and make the final call on the Procedure for "
          "each turn.\n- Keep track of cooldowns, modifiers and which attack stages are still hidden.",
          Skill::Leader, Specialty::Generalist};
}
inline RoleSpec member(int n) {
  return {"Team Member " + std::to_string(n),
          "- Contribute general incident-response knowledge and propose Procedures with a short justification.\n"
          "- Support the team's decision and flag any Procedure that is on cooldown.",
          Skill::Member, Specialty::Generalist};
}
inline RoleSpec endpoint_expert() {
  return {"Endpoint Security Expert",
          "- Advise on host-based investigation: endpoint analysis, endpoint protection telemetry and memory "
          "forensics.\n- Explain which persistence and privilege-escalation techniques leave traces on hosts.",
          Skill::Expert, Specialty::Endpoint};
}
inline RoleSpec network_expert() {
  return {"Network Traffic Analysis Expert",
          "- Advise on network evidence: firewall logs, network threat hunting and egress monitoring.\n"
          "- Identify command-and-control and exfiltration channels worth investigating.",
          Skill::Expert, Specialty::NetworkTraffic};
}
inline RoleSpec log_expert() {
  return {"Log and Behavioral Analysis Expert",
          "- Advise on centralized log analysis and user and entity behavior analytics.\n"
          "- Spot credential misuse, abnormal logins and insider activity.",
          Skill::Expert, Specialty::LogBehavior};
}
inline RoleSpec deception_expert() {
  return {"Deception and Containment Expert",
          "- Advise on deception technology, isolation and containment of affected systems.\n"
          "- Weigh when containing a system is worth losing visibility into it.",
          Skill::Expert, Specialty::DeceptionContainment};
}
inline RoleSpec ir_expert() {
  return {"Incident Response Expert",
          "- Keep the investigation aligned with the incident-response lifecycle and crisis management.\n"
          "- Balance quick wins from Established Procedures against covering every attack stage.",
          Skill::Expert, Specialty::IncidentResponse};
}
inline RoleSpec generalist_expert(int n) {
  return {"Expert " + std::to_string(n),
          "- Use broad incident-response experience to guide the team toward effective Procedures.\n"
          "- Mentor the beginners: explain the reasoning behind each recommendation.",
          Skill::Expert, Specialty::Generalist};
}
inline RoleSpec beginner(int n) {
  return {"Beginner " + std::to_string(n),
          "- Ask questions when a recommendation is unclear and offer fresh ideas.\n"
          "- Learn from the experts and help track cooldowns and turn count.",
          Skill::Beginner, std::nullopt};
}

}  // namespace roles

inline void validate_team(const TeamStructure& team);

// The six team structures as named presets.
inline TeamStructure team_structure(std::string_view name) {
  using namespace roles;
  TeamStructure t{std::string(name), {}};
  if (name == "Homo-Cen") {
    t.defenders = {leader(), member(1), member(2), member(3), member(4)};
  } else if (name == "Hetero-Cen") {
    t.defenders = {leader(), endpoint_expert(), network_expert(), log_expert(), deception_expert()};
  } else if (name == "Homo-Dec") {
    t.defenders = {member(1), member(2), member(3), member(4), member(5)};
  } else if (name == "Hetero-Dec") {
    t.defenders = {endpoint_expert(), network_expert(), log_expert(), deception_expert(), ir_expert()};
  } else if (name == "Homo-Hyb") {
    t.defenders = {generalist_expert(1), generalist_expert(2), generalist_expert(3), beginner(1), beginner(2)};
  } else if (name == "Hetero-Hyb") {
    t.defenders = {endpoint_expert(), network_expert(), log_expert(), beginner(1), beginner(2)};
  } else {
    throw Error("unknown team structure '" + std::string(name) + "'");
  }
  validate_team(t);
  return t;
}

inline void validate_team(const TeamStructure& team) {
  const auto& d = team.defenders;
  auto fail = [&](const std::string& why) { throw Error("team structure " + team.name + ": " + why); };
  if (d.size() != kDefenderSlots) fail("needs exactly 5 defenders");
  auto count = [&](Skill s) { return std::count_if(d.begin(), d.end(), [&](const RoleSpec& r) { return r.skill == s; }); };
  std::set<std::string> names;
  for (const auto& r : d) {
    if (r.role_name.empty()) fail("role with empty name");
    if (!names.insert(r.role_name).second) fail("duplicate role name '" + r.role_name + "'");
  }
  if (count(Skill::Leader) > 1) fail("at most one Leader");
  auto distinct_specialists = [&](std::size_t n) {
    std::set<Specialty> seen;
    for (const auto& r : d) {
      if (r.skill == Skill::Expert && r.specialty && *r.specialty != Specialty::Generalist) seen.insert(*r.specialty);
    }
    return seen.size() == n && static_cast<std::size_t>(count(Skill::Expert)) == n;
  };
  const auto& n = team.name;
  bool ok = false;
  if (n == "Homo-Cen") {
    ok = count(Skill::Leader) == 1 && count(Skill::Member) == 4;
  } else if (n == "Hetero-Cen") {
    ok = count(Skill::Leader) == 1 && distinct_specialists(4);
  } else if (n == "Homo-Dec") {
    ok = count(Skill::Member) == 5;
  } else if (n == "Hetero-Dec") {
    ok = distinct_specialists(5);
  } else if (n == "Homo-Hyb") {
    ok = count(Skill::Expert) == 3 && count(Skill::Beginner) == 2;
  } else if (n == "Hetero-Hyb") {
    ok = distinct_specialists(3) && count(Skill::Beginner) == 2;
  } else {
    fail("not one of the six structures");
  }
  if (!ok) fail("composition does not match the structure");
}

inline nlohmann::json to_json(const RoleSpec& r) {
  nlohmann::json j{{"role_name", r.role_name},
                   {"responsibilities", r.responsibilities},
                   {"skill", std::string(skill_key(r.skill))}};
  j["specialty"] = r.specialty ? nlohmann::json(std::string(specialty_key(*r.specialty))) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const TeamStructure& t) {
  nlohmann::json j{{"name", t.name}, {"defenders", nlohmann::json::array()}};
  for (const auto& r : t.defenders) j["defenders"].push_back(to_json(r));
  return j;
}

inline RoleSpec role_from_json(const nlohmann::json& j) {
  RoleSpec r;
  r.role_name = j.at("role_name").get<std::string>();
  r.responsibilities = j.value("responsibilities", std::string{});
  const auto skill = j.at("skill").get<std::string>();
  bool found = false;
  for (auto s : {Skill::Leader, Skill::Expert, Skill::Member, Skill::Beginner}) {
    if (skill_key(s) == skill) {
      r.skill = s;
      found = true;
    }
  }
  if (!found) throw Error("unknown skill '" + skill + "'");
  if (j.contains("specialty") && !j["specialty"].is_null()) {
    const auto spec = j["specialty"].get<std::string>();
    found = false;
    for (auto s : {Specialty::Endpoint, Specialty::NetworkTraffic, Specialty::LogBehavior,
                   Specialty::DeceptionContainment, Specialty::IncidentResponse, Specialty::Generalist}) {
      if (specialty_key(s) == spec) {
        r.specialty = s;
        found = true;
      }
    }
    if (!found) throw Error("unknown specialty '" + spec + "'");
  }
  return r;
}

// Loads {"structures": [{"name": ..., "defenders": [...]}, ...]}; every entry is validated.
inline std::vector<TeamStructure> load_team_structures(const nlohmann::json& doc) {
  std::vector<TeamStructure> out;
  for (const auto& s : doc.at("structures")) {
    TeamStructure t{s.at("name").get<std::string>(), {}};
    for (const auto& r : s.at("defenders")) t.defenders.push_back(role_from_json(r));
    validate_team(t);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// System messages

enum class PromptTemplate { Captain, Defender };

inline std::string procedure_cards_text(const GameState& state) {
  const auto& procs = state.registry().procedures();
  std::ostringstream est, other;
  for (std::size_t p = 0; p < procs.size(); ++p) {
    (state.is_established(p) ? est : other) << "- " << procs[p].name << "\n";
  }
  return "Established Procedures (+3 modifier):\n" + est.str() + "Other Procedures (+0 modifier):\n" + other.str();
}

inline std::string incident_cards_text(const GameState& state) {
  std::ostringstream out;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& card = state.registry().attack_cards()[state.scenario().cards[i]];
    out << "- " << stage_display_name(card.stage) << ": " << card.name << " (detected by:";
    for (std::size_t k = 0; k < card.detection.size(); ++k) {
      out << (k ? ", " : " ") << state.registry().procedure(card.detection[k]).name;
    }
    out << ")\n";
  }
  return out.str();
}

// Captain text embeds the hidden scenario; defender text never does.
inline std::string render_system_message(PromptTemplate which, const RoleSpec& role, const GameState& state) {
  if (which == PromptTemplate::Captain) {
    return render_template(kCaptainTemplate, {{"Sequence of Game", std::string(kSequenceOfGame)},
                                              {"Incident Cards", incident_cards_text(state)},
                                              {"Procedure Cards", procedure_cards_text(state)}});
  }
  auto text = render_template(kDefenderTemplate, {{"Role Name", role.role_name},
                                                  {"Role Responsibilities", role.responsibilities}});
  return text + "\n\n" + std::string(kDecisionProtocol);
}

// ---------------------------------------------------------------------------------------------
// Information hiding

// Names of scenario cards not yet revealed, minus any name shared with a revealed card.
inline std::vector<std::string> hidden_card_names(const GameState& state) {
  std::vector<std::string> hidden, shown;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& name = state.registry().attack_cards()[state.scenario().cards[i]].name;
    (state.revealed()[i] ? shown : hidden).push_back(name);
  }
  std::erase_if(hidden, [&](const std::string& n) { return std::find(shown.begin(), shown.end(), n) != shown.end(); });
  return hidden;
}

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive occurrences of `needle` in `hay` with non-alphanumeric boundaries.
inline std::vector<std::size_t> find_phrase(std::string_view hay_lower, std::string_view needle_lower) {
  std::vector<std::size_t> hits;
  if (needle_lower.empty()) return hits;
  for (auto pos = hay_lower.find(needle_lower); pos != std::string_view::npos;
       pos = hay_lower.find(needle_lower, pos + 1)) {
    const auto end = pos + needle_lower.size();
    const bool left = pos == 0 || !is_word_char(hay_lower[pos - 1]) || !is_word_char(needle_lower.front());
    const bool right = end >= hay_lower.size() || !is_word_char(hay_lower[end]) || !is_word_char(needle_lower.back());
    if (left && right) hits.push_back(pos);
  }
  return hits;
}

}  // namespace detail

inline std::vector<std::string> revealed_card_names(const GameState& state) {
  std::vector<std::string> shown;
  for (std::size_t i = 0; i < 4; ++i) {
    if (state.revealed()[i]) shown.push_back(state.registry().attack_cards()[state.scenario().cards[i]].name);
  }
  return shown;
}

namespace detail {

// Lower-cased copy with revealed names blanked, so "Password Spray" is not found inside a
// revealed "Internal Password Spray".
inline std::string masked_lower(std::string_view text, const std::vector<std::string>& revealed) {
  auto out = lower(text);
  for (const auto& name : revealed) {
    const auto needle = lower(name);
    for (auto pos = out.find(needle); pos != std::string::npos; pos = out.find(needle, pos + needle.size())) {
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(pos), needle.size(), '\x01');
    }
  }
  return out;
}

}  // namespace detail

inline bool mentions_hidden_card(std::string_view text, const GameState& state) {
  const auto hay = detail::masked_lower(text, revealed_card_names(state));
  for (const auto& name : hidden_card_names(state)) {
    if (hay.find(detail::lower(name)) != std::string::npos) return true;
  }
  return false;
}

inline constexpr std::string_view kRedacted = "[REDACTED]";

// Blanks every attack card name that is not revealed, not only the scenario's hidden ones;
// redacting just the hidden ones would confirm a defender's correct guess.
inline std::string redact_hidden_cards(std::string text, const GameState& state) {
  const auto shown = revealed_card_names(state);
  std::vector<std::string> concealed;
  for (const auto& card : state.registry().attack_cards()) {
    if (std::find(shown.begin(), shown.end(), card.name) == shown.end()) concealed.push_back(card.name);
  }
  for (;;) {
    const auto hay = detail::masked_lower(text, shown);
    std::size_t best = std::string::npos, len = 0;
    for (const auto& name : concealed) {
      const auto pos = hay.find(detail::lower(name));
      if (pos < best || (pos == best && pos != std::string::npos && name.size() > len)) {
        best = pos;
        len = name.size();
      }
    }
    if (best == std::string::npos) return text;
    text.replace(best, len, kRedacted);
  }
}

// ---------------------------------------------------------------------------------------------
// Defender view

struct ProcedureView {
  std::string id;
  std::string name;
  bool established = false;
  bool available = false;
  int cooldown = 0;
  bool removed = false;
};

struct RevealedCardView {
  AttackStage stage{};
  std::string name;
};

struct PublicTurn {
  int turn = 0;
  std::string procedure;
  int natural = 0;
  int modifier = 0;
  bool success = false;
  std::optional<std::string> revealed;  // card name
  std::optional<std::string> inject;    // inject name
};

// What defenders are allowed to know.
struct DefenderView {
  int turn = 0;
  std::vector<ProcedureView> procedures;  // registry order
  std::vector<RevealedCardView> revealed;
  std::vector<PublicTurn> history;
  std::vector<std::string> inject_notices;
  std::vector<std::string> hints;

  std::vector<std::string> available_ids() const {
    std::vector<std::string> out;
    for (const auto& p : procedures) {
      if (p.available) out.push_back(p.id);
    }
    return out;
  }
};

inline DefenderView make_defender_view(const GameState& state, std::vector<std::string> inject_notices = {}) {
  const auto& reg = state.registry();
  DefenderView v;
  v.turn = state.turn();
  for (std::size_t p = 0; p < reg.procedures().size(); ++p) {
    v.procedures.push_back({reg.procedures()[p].id, reg.procedures()[p].name, state.is_established(p),
                            state.in_progress() && state.is_available(p), state.cooldown(p), state.is_removed(p)});
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (!state.revealed()[i]) continue;
    const auto& card = reg.attack_cards()[state.scenario().cards[i]];
    v.revealed.push_back({card.stage, card.name});
  }
  for (const auto& r : state.history()) {
    PublicTurn t{r.turn, reg.procedure(r.procedure).name, r.natural, r.modifier, r.success, {}, {}};
    if (r.revealed) t.revealed = reg.attack_cards()[reg.attack_index(*r.revealed)].name;
    if (r.inject) t.inject = reg.injects()[reg.inject_index(*r.inject)].name;
    v.history.push_back(std::move(t));
  }
  for (const auto& h : state.hints()) {
    v.hints.push_back("The " + std::string(stage_display_name(h.stage)) + " stage can be detected by " +
                      reg.procedures()[h.procedure].name + ".");
  }
  v.inject_notices = std::move(inject_notices);
  return v;
}

inline std::string render_view(const DefenderView& v) {
  std::ostringstream out;
  out << "Turn " << v.turn << " of " << kMaxTurns << ".\n";
  std::vector<std::string> available, cooling, removed;
  for (const auto& p : v.procedures) {
    const std::string label = p.name + (p.established ? " [Established +3]" : " [Other +0]");
    if (p.available) available.push_back(label);
    if (p.removed) removed.push_back(p.name);
    else if (p.cooldown > 0) cooling.push_back(p.name + " (" + std::to_string(p.cooldown) + " turn(s))");
  }
  auto join = [](const std::vector<std::string>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " | " : "") + xs[i];
    return s.empty() ? std::string("none") : s;
  };
  out << "Available procedures: " << join(available) << "\n";
  out << "On cooldown: " << join(cooling) << "\n";
  if (!removed.empty()) out << "Removed from play: " << join(removed) << "\n";
  std::vector<std::string> revealed;
  for (const auto& r : v.revealed) revealed.push_back(std::string(stage_display_name(r.stage)) + ": " + r.name);
  out << "Revealed attack cards (" << v.revealed.size() << "/4): " << join(revealed) << "\n";
  for (const auto& h : v.hints) out << "Hint: " << h << "\n";
  for (const auto& n : v.inject_notices) out << "Inject: " << n << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------------------------
// Scripted policies

enum class ScriptedPolicy { RandomValid, Greedy, Oracle };

inline std::string_view policy_key(ScriptedPolicy p) {
  switch (p) {
    case ScriptedPolicy::RandomValid: return "RandomValid";
    case ScriptedPolicy::Greedy: return "Greedy";
    case ScriptedPolicy::Oracle: return "Oracle";
  }
  return "?";
}

inline std::optional<ScriptedPolicy> parse_policy(std::string_view key) {
  for (auto p : {ScriptedPolicy::RandomValid, ScriptedPolicy::Greedy, ScriptedPolicy::Oracle}) {
    if (policy_key(p) == key) return p;
  }
  return std::nullopt;
}

// No procedure can be selected (injects removed the rest); the game cannot continue.
class Stalemate : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string greedy_pick(const DefenderView& view) {
  for (const auto& p : view.procedures) {
    if (p.available && p.established) return p.id;
  }
  for (const auto& p : view.procedures) {
    if (p.available) return p.id;
  }
  throw Stalemate("no available procedure");
}

}  // namespace detail

// RandomValid: uniform over available. Greedy: first available Established, else first available.
// Oracle: for the earliest unrevealed card with an available detector, its first Established
// detector, else its first detector (registry order); Greedy when nothing can detect.
inline std::string scripted_choice(ScriptedPolicy policy, const DefenderView& view, const GameState* oracle_state,
                                   Rng& rng) {
  const auto available = view.available_ids();
  if (available.empty()) throw Stalemate("no available procedure");
  switch (policy) {
    case ScriptedPolicy::RandomValid:
      return available[static_cast<std::size_t>(rng.uniform_below(available.size()))];
    case ScriptedPolicy::Greedy:
      return detail::greedy_pick(view);
    case ScriptedPolicy::Oracle: {
      if (!oracle_state) throw Error("Oracle policy needs the full game state");
      const auto& s = *oracle_state;
      const auto& reg = s.registry();
      for (std::size_t i = 0; i < 4; ++i) {
        if (s.revealed()[i]) continue;
        const auto& card = reg.attack_cards()[s.scenario().cards[i]];
        std::optional<std::size_t> fallback;
        for (std::size_t p = 0; p < reg.procedures().size(); ++p) {
          if (!card.detected_by(p) || !s.is_available(p)) continue;
          if (s.is_established(p)) return reg.procedures()[p].id;
          if (!fallback) fallback = p;
        }
        if (fallback) return reg.procedures()[*fallback].id;
      }
      return detail::greedy_pick(view);
    }
  }
  throw Error("unknown policy");
}

// ---------------------------------------------------------------------------------------------
// Decision parsing

struct ChoiceParse {
  std::optional<std::string> procedure;  // set iff a decision was made
  std::string reason;                    // why there is no decision
};

// Looks at the text after the first "CHOOSE:" on its line. A decision needs exactly one
// procedure name (or alias), whole-phrase and case-insensitive, and it must be available.
inline ChoiceParse parse_procedure_choice(std::string_view message, const CardRegistry& reg,
                                          const std::vector<std::string>& available) {
  const auto lower = detail::lower(message);
  const auto marker = lower.find(detail::lower(kDecisionMarker));
  if (marker == std::string::npos) return {std::nullopt, "no marker"};
  auto tail = std::string_view(lower).substr(marker + kDecisionMarker.size());
  tail = tail.substr(0, tail.find('\n'));

  std::set<std::size_t> distinct;
  for (std::size_t p = 0; p < reg.procedures().size(); ++p) {
    std::vector<std::string> names = {reg.procedures()[p].name};
    names.insert(names.end(), reg.procedures()[p].aliases.begin(), reg.procedures()[p].aliases.end());
    for (const auto& n : names) {
      if (!detail::find_phrase(tail, detail::lower(n)).empty()) distinct.insert(p);
    }
  }
  if (distinct.empty()) return {std::nullopt, "no procedure named"};
  if (distinct.size() > 1) return {std::nullopt, "ambiguous"};
  const auto& id = reg.procedures()[*distinct.begin()].id;
  if (std::find(available.begin(), available.end(), id) == available.end()) return {std::nullopt, "unavailable"};
  return {id, {}};
}

}  // namespace bnb
