#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bnb/error.hpp"
#include "bnb/rng.hpp"
#include "bnb/sha256.hpp"

namespace bnb {

enum class AttackStage { InitialCompromise = 0, PivotEscalate = 1, C2Exfil = 2, Persistence = 3 };

inline constexpr std::array<AttackStage, 4> kAttackStages = {
    AttackStage::InitialCompromise, AttackStage::PivotEscalate, AttackStage::C2Exfil,
    AttackStage::Persistence};

inline constexpr std::array<std::size_t, 4> kStageCardCounts = {10, 7, 6, 9};
inline constexpr std::size_t kProcedureCount = 11;
inline constexpr std::size_t kInjectCount = 9;

inline std::string_view stage_key(AttackStage s) {
  switch (s) {
    case AttackStage::InitialCompromise: return "InitialCompromise";
    case AttackStage::PivotEscalate: return "PivotEscalate";
    case AttackStage::C2Exfil: return "C2Exfil";
    case AttackStage::Persistence: return "Persistence";
  }
  return "?";
}

inline std::string_view stage_display_name(AttackStage s) {
  switch (s) {
    case AttackStage::InitialCompromise: return "Initial Compromise";
    case AttackStage::PivotEscalate: return "Pivot and Escalate";
    case AttackStage::C2Exfil: return "C2 and Exfil";
    case AttackStage::Persistence: return "Persistence";
  }
  return "?";
}

inline std::optional<AttackStage> parse_stage(std::string_view key) {
  for (auto s : kAttackStages) {
    if (stage_key(s) == key) return s;
  }
  return std::nullopt;
}

struct ProcedureCard {
  std::string id;
  std::string name;
  std::vector<std::string> aliases;

  friend bool operator==(const ProcedureCard&, const ProcedureCard&) = default;
};

// Bit i of a ProcedureMask refers to the procedure at registry index i.
using ProcedureMask = std::uint32_t;

struct AttackCard {
  std::string id;
  std::string name;
  AttackStage stage{};
  std::vector<std::string> detection;
  ProcedureMask detection_mask = 0;

  bool detected_by(std::size_t procedure_index) const {
    return (detection_mask >> procedure_index) & 1U;
  }

  friend bool operator==(const AttackCard&, const AttackCard&) = default;
};

enum class EffectKind {
  EndAsPentest,
  PromoteToEstablished,
  RemoveProcedure,
  RestoreProcedure,
  RevealStageHint,
  SilenceDefender,
  ExtendLastCooldown,
  NoMechanicalEffect,
};

enum class SilenceSelector { LeaderOrRandom, HighestSkill };

inline std::string_view effect_kind_key(EffectKind k) {
  switch (k) {
    case EffectKind::EndAsPentest: return "EndAsPentest";
    case EffectKind::PromoteToEstablished: return "PromoteToEstablished";
    case EffectKind::RemoveProcedure: return "RemoveProcedure";
    case EffectKind::RestoreProcedure: return "RestoreProcedure";
    case EffectKind::RevealStageHint: return "RevealStageHint";
    case EffectKind::SilenceDefender: return "SilenceDefender";
    case EffectKind::ExtendLastCooldown: return "ExtendLastCooldown";
    case EffectKind::NoMechanicalEffect: return "NoMechanicalEffect";
  }
  return "?";
}

inline std::string_view selector_key(SilenceSelector s) {
  return s == SilenceSelector::LeaderOrRandom ? "LeaderOrRandom" : "HighestSkill";
}

struct InjectEffect {
  EffectKind kind = EffectKind::NoMechanicalEffect;
  std::string procedure;  // PromoteToEstablished
  int turns = 0;          // SilenceDefender
  SilenceSelector selector = SilenceSelector::LeaderOrRandom;
  int extra_turns = 0;    // ExtendLastCooldown

  friend bool operator==(const InjectEffect&, const InjectEffect&) = default;
};

struct InjectCard {
  std::string id;
  std::string name;
  InjectEffect effect;

  friend bool operator==(const InjectCard&, const InjectCard&) = default;
};

// Immutable card database. Attack cards are stored grouped by stage (stage order, then file
// order within a stage); procedures and injects keep file order ("registry order").
class CardRegistry {
 public:
  static CardRegistry from_json(const nlohmann::json& doc, std::string content_hash = {});

  const std::vector<AttackCard>& attack_cards() const { return attacks_; }
  const std::vector<ProcedureCard>& procedures() const { return procedures_; }
  const std::vector<InjectCard>& injects() const { return injects_; }

  // Indices into attack_cards() for one stage.
  std::pair<std::size_t, std::size_t> stage_range(AttackStage s) const {
    const auto i = static_cast<std::size_t>(s);
    return {stage_begin_[i], stage_begin_[i + 1]};
  }
  std::size_t stage_size(AttackStage s) const {
    auto [b, e] = stage_range(s);
    return e - b;
  }

  std::optional<std::size_t> find_procedure(std::string_view id) const {
    for (std::size_t i = 0; i < procedures_.size(); ++i) {
      if (procedures_[i].id == id) return i;
    }
    return std::nullopt;
  }
  std::size_t procedure_index(std::string_view id) const {
    if (auto i = find_procedure(id)) return *i;
    throw UnknownProcedure("unknown procedure id '" + std::string(id) + "'");
  }
  const ProcedureCard& procedure(std::string_view id) const { return procedures_[procedure_index(id)]; }

  std::optional<std::size_t> find_attack(std::string_view id) const {
    for (std::size_t i = 0; i < attacks_.size(); ++i) {
      if (attacks_[i].id == id) return i;
    }
    return std::nullopt;
  }
  std::size_t attack_index(std::string_view id) const {
    if (auto i = find_attack(id)) return *i;
    throw Error("unknown attack card id '" + std::string(id) + "'");
  }

  std::optional<std::size_t> find_inject(std::string_view id) const {
    for (std::size_t i = 0; i < injects_.size(); ++i) {
      if (injects_[i].id == id) return i;
    }
    return std::nullopt;
  }
  std::size_t inject_index(std::string_view id) const {
    if (auto i = find_inject(id)) return *i;
    throw Error("unknown inject id '" + std::string(id) + "'");
  }

  const std::string& version() const { return version_; }
  // SHA-256 of the source document bytes; empty when built from an in-memory json value.
  const std::string& content_hash() const { return content_hash_; }

  friend bool operator==(const CardRegistry& a, const CardRegistry& b) {
    return a.version_ == b.version_ && a.procedures_ == b.procedures_ && a.attacks_ == b.attacks_ &&
           a.injects_ == b.injects_;
  }

 private:
  std::string version_;
  std::string content_hash_;
  std::vector<ProcedureCard> procedures_;
  std::vector<AttackCard> attacks_;
  std::vector<InjectCard> injects_;
  std::array<std::size_t, 5> stage_begin_{};
};

namespace detail {

using CardErr = CardDatabaseError::Kind;

[[noreturn]] inline void card_error(CardErr kind, const std::string& entry, const std::string& msg) {
  throw CardDatabaseError(kind, entry, "card database: " + entry + ": " + msg);
}

inline void expect_keys(const nlohmann::json& obj, const std::string& entry,
                        std::initializer_list<std::string_view> required,
                        std::initializer_list<std::string_view> optional = {}) {
  if (!obj.is_object()) card_error(CardErr::Schema, entry, "expected an object");
  for (auto key : required) {
    if (!obj.contains(std::string(key))) {
      card_error(CardErr::Schema, entry, "missing field '" + std::string(key) + "'");
    }
  }
  for (const auto& [key, _] : obj.items()) {
    const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                       std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) card_error(CardErr::Schema, entry, "unknown field '" + key + "'");
  }
}

inline std::string get_string(const nlohmann::json& obj, const char* key, const std::string& entry) {
  const auto& v = obj.at(key);
  if (!v.is_string()) card_error(CardErr::Schema, entry, std::string("field '") + key + "' must be a string");
  auto s = v.get<std::string>();
  if (s.empty()) card_error(CardErr::Schema, entry, std::string("field '") + key + "' must not be empty");
  return s;
}

inline int get_positive_int(const nlohmann::json& obj, const char* key, const std::string& entry) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) {
    card_error(CardErr::Schema, entry, std::string("field '") + key + "' must be an integer");
  }
  const auto n = v.get<long long>();
  if (n < 1 || n > 10) card_error(CardErr::Schema, entry, std::string("field '") + key + "' must be in 1..=10");
  return static_cast<int>(n);
}

inline const nlohmann::json& get_array(const nlohmann::json& obj, const char* key, const std::string& entry) {
  const auto& v = obj.at(key);
  if (!v.is_array()) card_error(CardErr::Schema, entry, std::string("field '") + key + "' must be an array");
  return v;
}

}  // namespace detail

inline CardRegistry CardRegistry::from_json(const nlohmann::json& doc, std::string content_hash) {
  using detail::CardErr;
  using detail::card_error;

  if (!doc.is_object()) card_error(CardErr::CountMismatch, "document", "expected a non-empty object");
  if (doc.empty()) {
    card_error(CardErr::CountMismatch, "document",
               "expected 32 attack cards, 11 procedures and 9 injects, found nothing");
  }
  detail::expect_keys(doc, "document", {"format", "version", "procedures", "attack_cards", "injects"});
  if (doc.at("format") != "bnb-cards/1") card_error(CardErr::Schema, "format", "expected 'bnb-cards/1'");

  CardRegistry reg;
  reg.version_ = detail::get_string(doc, "version", "version");
  reg.content_hash_ = std::move(content_hash);

  std::set<std::string> ids;
  auto claim_id = [&](const std::string& id) {
    if (!ids.insert(id).second) card_error(CardErr::DuplicateId, id, "duplicate id");
  };

  // Procedures
  std::set<std::string> procedure_names;
  for (const auto& p : detail::get_array(doc, "procedures", "procedures")) {
    const std::string entry = p.is_object() && p.contains("id") && p["id"].is_string()
                                  ? p["id"].get<std::string>() : "procedures[" + std::to_string(reg.procedures_.size()) + "]";
    detail::expect_keys(p, entry, {"id", "name"}, {"aliases"});
    ProcedureCard card{detail::get_string(p, "id", entry), detail::get_string(p, "name", entry), {}};
    if (p.contains("aliases")) {
      for (const auto& a : detail::get_array(p, "aliases", entry)) {
        if (!a.is_string() || a.get<std::string>().empty()) {
          card_error(CardErr::Schema, entry, "aliases must be non-empty strings");
        }
        card.aliases.push_back(a.get<std::string>());
      }
    }
    claim_id(card.id);
    if (!procedure_names.insert(card.name).second) card_error(CardErr::DuplicateId, entry, "duplicate procedure name");
    reg.procedures_.push_back(std::move(card));
  }
  if (reg.procedures_.size() != kProcedureCount) {
    card_error(CardErr::CountMismatch, "procedures",
               "expected 11 procedure cards, found " + std::to_string(reg.procedures_.size()));
  }

  // Attack cards, bucketed per stage preserving file order.
  std::array<std::vector<AttackCard>, 4> by_stage;
  for (const auto& a : detail::get_array(doc, "attack_cards", "attack_cards")) {
    const std::string entry = a.is_object() && a.contains("name") && a["name"].is_string()
                                  ? a["name"].get<std::string>() : "attack_cards[?]";
    detail::expect_keys(a, entry, {"id", "name", "stage", "detection"});
    AttackCard card;
    card.id = detail::get_string(a, "id", entry);
    card.name = detail::get_string(a, "name", entry);
    const auto stage = parse_stage(detail::get_string(a, "stage", entry));
    if (!stage) card_error(CardErr::Schema, entry, "unknown stage '" + a["stage"].get<std::string>() + "'");
    card.stage = *stage;
    const auto& det = detail::get_array(a, "detection", entry);
    if (det.empty() || det.size() > kProcedureCount) {
      card_error(CardErr::Invariant, entry, "detection list must hold 1..=11 procedures");
    }
    for (const auto& d : det) {
      if (!d.is_string()) card_error(CardErr::Schema, entry, "detection entries must be procedure ids");
      const auto pid = d.get<std::string>();
      const auto idx = reg.find_procedure(pid);
      if (!idx) card_error(CardErr::UnknownReference, entry, "detection references unknown procedure '" + pid + "'");
      if (card.detected_by(*idx)) card_error(CardErr::Invariant, entry, "procedure '" + pid + "' listed twice");
      card.detection_mask |= ProcedureMask{1} << *idx;
      card.detection.push_back(pid);
    }
    claim_id(card.id);
    auto& bucket = by_stage[static_cast<std::size_t>(card.stage)];
    for (const auto& other : bucket) {
      if (other.name == card.name) card_error(CardErr::DuplicateId, entry, "duplicate name within stage");
    }
    bucket.push_back(std::move(card));
  }
  std::size_t total = 0;
  for (auto s : kAttackStages) total += by_stage[static_cast<std::size_t>(s)].size();
  if (total != 32) {
    card_error(CardErr::CountMismatch, "attack_cards", "expected 32 attack cards, found " + std::to_string(total));
  }
  for (auto s : kAttackStages) {
    const auto i = static_cast<std::size_t>(s);
    if (by_stage[i].size() != kStageCardCounts[i]) {
      card_error(CardErr::CountMismatch, std::string(stage_key(s)),
                 "expected " + std::to_string(kStageCardCounts[i]) + " cards, found " +
                     std::to_string(by_stage[i].size()));
    }
    reg.stage_begin_[i] = reg.attacks_.size();
    for (auto& c : by_stage[i]) reg.attacks_.push_back(std::move(c));
  }
  reg.stage_begin_[4] = reg.attacks_.size();

  ProcedureMask covered = 0;
  for (const auto& a : reg.attacks_) covered |= a.detection_mask;
  for (std::size_t i = 0; i < reg.procedures_.size(); ++i) {
    if (!((covered >> i) & 1U)) {
      card_error(CardErr::Invariant, reg.procedures_[i].id, "procedure detects no attack card");
    }
  }

  // Injects
  for (const auto& j : detail::get_array(doc, "injects", "injects")) {
    const std::string entry = j.is_object() && j.contains("name") && j["name"].is_string()
                                  ? j["name"].get<std::string>() : "injects[?]";
    detail::expect_keys(j, entry, {"id", "name", "effect"});
    InjectCard card{detail::get_string(j, "id", entry), detail::get_string(j, "name", entry), {}};
    const auto& e = j.at("effect");
    if (!e.is_object() || !e.contains("kind") || !e["kind"].is_string()) {
      card_error(CardErr::Schema, entry, "effect must be an object with a 'kind'");
    }
    const auto kind = e["kind"].get<std::string>();
    auto& eff = card.effect;
    if (kind == "EndAsPentest" || kind == "RemoveProcedure" || kind == "RestoreProcedure" ||
        kind == "RevealStageHint" || kind == "NoMechanicalEffect") {
      detail::expect_keys(e, entry, {"kind"});
      eff.kind = kind == "EndAsPentest"      ? EffectKind::EndAsPentest
                 : kind == "RemoveProcedure"  ? EffectKind::RemoveProcedure
                 : kind == "RestoreProcedure" ? EffectKind::RestoreProcedure
                 : kind == "RevealStageHint"  ? EffectKind::RevealStageHint
                                              : EffectKind::NoMechanicalEffect;
    } else if (kind == "PromoteToEstablished") {
      detail::expect_keys(e, entry, {"kind", "procedure"});
      eff.kind = EffectKind::PromoteToEstablished;
      eff.procedure = detail::get_string(e, "procedure", entry);
      if (!reg.find_procedure(eff.procedure)) {
        card_error(CardErr::UnknownReference, entry, "effect references unknown procedure '" + eff.procedure + "'");
      }
    } else if (kind == "SilenceDefender") {
      detail::expect_keys(e, entry, {"kind", "turns", "selector"});
      eff.kind = EffectKind::SilenceDefender;
      eff.turns = detail::get_positive_int(e, "turns", entry);
      const auto sel = detail::get_string(e, "selector", entry);
      if (sel == "LeaderOrRandom") {
        eff.selector = SilenceSelector::LeaderOrRandom;
      } else if (sel == "HighestSkill") {
        eff.selector = SilenceSelector::HighestSkill;
      } else {
        card_error(CardErr::Schema, entry, "unknown selector '" + sel + "'");
      }
    } else if (kind == "ExtendLastCooldown") {
      detail::expect_keys(e, entry, {"kind", "extra_turns"});
      eff.kind = EffectKind::ExtendLastCooldown;
      eff.extra_turns = detail::get_positive_int(e, "extra_turns", entry);
    } else {
      card_error(CardErr::Schema, entry, "unknown effect kind '" + kind + "'");
    }
    claim_id(card.id);
    for (const auto& other : reg.injects_) {
      if (other.name == card.name) card_error(CardErr::DuplicateId, entry, "duplicate inject name");
    }
    reg.injects_.push_back(std::move(card));
  }
  if (reg.injects_.size() != kInjectCount) {
    card_error(CardErr::CountMismatch, "injects",
               "expected 9 inject cards, found " + std::to_string(reg.injects_.size()));
  }
  return reg;
}

// Parses and validates a card-database document.
inline CardRegistry load_registry(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CardDatabaseError(CardDatabaseError::Kind::Schema, "document",
                            std::string("card database: not valid JSON: ") + e.what());
  }
  return CardRegistry::from_json(doc, sha256_hex(text));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CardRegistry load_registry_file(const std::filesystem::path& path) {
  return load_registry(read_text_file(path));
}

// Hidden attack scenario: one attack_cards() index per stage, in stage order.
struct Scenario {
  std::array<std::size_t, 4> cards{};

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline Scenario draw_attack_scenario(const CardRegistry& reg, Rng& rng) {
  Scenario s;
  for (auto stage : kAttackStages) {
    auto [begin, end] = reg.stage_range(stage);
    s.cards[static_cast<std::size_t>(stage)] = begin + static_cast<std::size_t>(rng.uniform_below(end - begin));
  }
  return s;
}

struct ProcedureSplit {
  std::vector<std::size_t> established;  // registry indices, ascending
  std::vector<std::size_t> other;

  friend bool operator==(const ProcedureSplit&, const ProcedureSplit&) = default;
};

// Shuffles the procedure indices and takes the first k as Established.
inline ProcedureSplit initial_procedure_split(const CardRegistry& reg, Rng& rng, std::size_t k = 4) {
  const auto n = reg.procedures().size();
  if (k > n) throw Error("initial_procedure_split: k=" + std::to_string(k) + " out of range 0..=" + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  ProcedureSplit split;
  split.established.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  split.other.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(split.established.begin(), split.established.end());
  std::sort(split.other.begin(), split.other.end());
  return split;
}

// Unrevealed scenario cards detectable by the procedure, in stage order (as attack_cards() indices).
inline std::vector<std::size_t> detection_matches(const CardRegistry& reg, std::string_view procedure_id,
                                                  const Scenario& scenario, const std::array<bool, 4>& revealed) {
  const auto p = reg.procedure_index(procedure_id);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scenario.cards.size(); ++i) {
    if (!revealed[i] && reg.attack_cards()[scenario.cards[i]].detected_by(p)) out.push_back(scenario.cards[i]);
  }
  return out;
}

}  // namespace bnb
