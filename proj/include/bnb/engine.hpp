#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnb/cards.hpp"
#include "bnb/error.hpp"
#include "bnb/rng.hpp"

namespace bnb {

inline constexpr int kMaxTurns = 10;
inline constexpr int kDieSides = 20;
inline constexpr int kSuccessThreshold = 11;
inline constexpr int kEstablishedModifier = 3;
inline constexpr int kCooldownTurns = 3;
inline constexpr int kFailuresForInject = 3;
inline constexpr int kDefenderSlots = 5;

enum class GameStatus { InProgress, Victory, Loss, Pentest };
enum class InjectCause { NaturalRoll, ThreeFailures };

inline std::string_view status_key(GameStatus s) {
  switch (s) {
    case GameStatus::InProgress: return "InProgress";
    case GameStatus::Victory: return "Victory";
    case GameStatus::Loss: return "Loss";
    case GameStatus::Pentest: return "Pentest";
  }
  return "?";
}

inline std::string_view cause_key(InjectCause c) {
  return c == InjectCause::NaturalRoll ? "NaturalRoll" : "ThreeFailures";
}

struct TurnRecord {
  int turn = 0;
  std::string procedure;
  int natural = 0;
  int modifier = 0;
  bool success = false;
  std::optional<std::string> revealed;
  std::optional<std::string> inject;
  std::optional<InjectCause> inject_cause;

  friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

inline nlohmann::json to_json(const TurnRecord& r) {
  nlohmann::json j;
  j["turn"] = r.turn;
  j["procedure"] = r.procedure;
  j["natural"] = r.natural;
  j["modifier"] = r.modifier;
  j["success"] = r.success;
  j["revealed"] = r.revealed ? nlohmann::json(*r.revealed) : nlohmann::json(nullptr);
  j["inject"] = r.inject ? nlohmann::json(*r.inject) : nlohmann::json(nullptr);
  j["inject_cause"] = r.inject_cause ? nlohmann::json(std::string(cause_key(*r.inject_cause))) : nlohmann::json(nullptr);
  return j;
}

inline TurnRecord turn_record_from_json(const nlohmann::json& j) {
  TurnRecord r;
  r.turn = j.at("turn").get<int>();
  r.procedure = j.at("procedure").get<std::string>();
  r.natural = j.at("natural").get<int>();
  r.modifier = j.at("modifier").get<int>();
  r.success = j.at("success").get<bool>();
  if (!j.at("revealed").is_null()) r.revealed = j["revealed"].get<std::string>();
  if (!j.at("inject").is_null()) r.inject = j["inject"].get<std::string>();
  if (!j.at("inject_cause").is_null()) {
    const auto c = j["inject_cause"].get<std::string>();
    if (c == "NaturalRoll") {
      r.inject_cause = InjectCause::NaturalRoll;
    } else if (c == "ThreeFailures") {
      r.inject_cause = InjectCause::ThreeFailures;
    } else {
      throw Error("unknown inject_cause '" + c + "'");
    }
  }
  return r;
}

// Everything chosen before turn 1.
struct GameSetup {
  Scenario scenario;
  std::vector<std::size_t> established;  // procedure indices
  std::vector<std::size_t> inject_pile;  // inject indices; front is drawn first

  friend bool operator==(const GameSetup&, const GameSetup&) = default;
};

// Draw order: scenario (one uniform pick per stage, stage order), procedure split
// (Fisher-Yates over the 11 procedures), inject pile (Fisher-Yates over the 9 injects).
inline GameSetup draw_game_setup(const CardRegistry& reg, Rng& rng, std::size_t k_established) {
  GameSetup setup;
  setup.scenario = draw_attack_scenario(reg, rng);
  setup.established = initial_procedure_split(reg, rng, k_established).established;
  setup.inject_pile.resize(reg.injects().size());
  for (std::size_t i = 0; i < setup.inject_pile.size(); ++i) setup.inject_pile[i] = i;
  rng.shuffle(std::span<std::size_t>(setup.inject_pile));
  return setup;
}

struct ActiveSilence {
  std::string inject_id;
  SilenceSelector selector = SilenceSelector::LeaderOrRandom;
  int random_slot = 0;  // 0..4, used when the team has no leader
  int turns_remaining = 0;

  friend bool operator==(const ActiveSilence&, const ActiveSilence&) = default;
};

struct StageHint {
  AttackStage stage{};
  std::size_t procedure = 0;

  friend bool operator==(const StageHint&, const StageHint&) = default;
};

// What an inject changed. changed == false means the card had no effect.
struct EffectReport {
  std::string inject_id;
  EffectKind kind = EffectKind::NoMechanicalEffect;
  bool changed = false;
  std::vector<std::string> changes;
  std::optional<std::size_t> procedure;
  std::optional<ActiveSilence> silence;
  std::optional<StageHint> hint;
};

struct TurnResult {
  TurnRecord record;
  std::optional<EffectReport> effect;
};

// Exact success chance of one attempt: favorable naturals out of 20.
struct SuccessChance {
  int favorable = 0;
  int outcomes = kDieSides;

  double value() const { return static_cast<double>(favorable) / outcomes; }
};

inline SuccessChance success_probability(int modifier) {
  SuccessChance c;
  for (int natural = 1; natural <= kDieSides; ++natural) {
    if (natural + modifier >= kSuccessThreshold) ++c.favorable;
  }
  return c;
}

// The full game situation. Value type: copying a GameState forks the game, rng included.
//
// Randomness after setup, in order within a turn: the natural roll (unless dice are forced),
// then whatever the drawn inject needs (RemoveProcedure and RestoreProcedure pick a target
// uniformly, RevealStageHint picks one detector of the earliest unrevealed card,
// SilenceDefender(LeaderOrRandom) picks a defender slot in 0..4).
class GameState {
 public:
  static GameState new_game(std::shared_ptr<const CardRegistry> registry, std::uint64_t seed,
                            std::size_t k_established = 4,
                            std::optional<std::vector<int>> forced_dice = std::nullopt) {
    Rng rng(seed);
    auto setup = draw_game_setup(*registry, rng, k_established);
    return GameState(std::move(registry), seed, std::move(setup), std::move(rng), false, std::move(forced_dice));
  }

  // A game with a fixed setup; no setup draws are taken from the stream.
  static GameState from_setup(std::shared_ptr<const CardRegistry> registry, std::uint64_t seed, GameSetup setup,
                              std::optional<std::vector<int>> forced_dice = std::nullopt) {
    validate_setup(*registry, setup);
    return GameState(std::move(registry), seed, std::move(setup), Rng(seed), true, std::move(forced_dice));
  }

  const CardRegistry& registry() const { return *registry_; }
  const std::shared_ptr<const CardRegistry>& registry_ptr() const { return registry_; }
  std::uint64_t seed() const { return seed_; }
  const GameSetup& setup() const { return setup_; }
  bool setup_forced() const { return setup_forced_; }
  const std::optional<std::vector<int>>& forced_dice() const { return forced_dice_; }

  int turn() const { return turn_; }
  GameStatus status() const { return status_; }
  bool in_progress() const { return status_ == GameStatus::InProgress; }
  const Scenario& scenario() const { return setup_.scenario; }
  const std::array<bool, 4>& revealed() const { return revealed_; }
  int revealed_count() const { return static_cast<int>(std::count(revealed_.begin(), revealed_.end(), true)); }
  bool is_established(std::size_t p) const { return established_[p]; }
  int cooldown(std::size_t p) const { return cooldowns_[p]; }
  bool is_removed(std::size_t p) const { return removed_[p]; }
  int consecutive_failures() const { return failures_; }
  const std::vector<std::size_t>& inject_pile() const { return pile_; }
  const std::optional<std::size_t>& last_used_procedure() const { return last_used_; }
  const std::vector<ActiveSilence>& silences() const { return silences_; }
  const std::vector<StageHint>& hints() const { return hints_; }
  const std::vector<TurnRecord>& history() const { return history_; }
  int turns_played() const { return static_cast<int>(history_.size()); }

  std::vector<std::size_t> established_procedures() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < established_.size(); ++p) {
      if (established_[p]) out.push_back(p);
    }
    return out;
  }

  bool is_available(std::size_t p) const { return p < cooldowns_.size() && cooldowns_[p] == 0 && !removed_[p]; }

  // Procedures with no cooldown that have not been removed, in registry order.
  std::vector<std::size_t> available_procedures() const {
    require_in_progress("available_procedures");
    return available_unchecked();
  }

  std::vector<std::string> available_procedure_ids() const {
    std::vector<std::string> ids;
    for (auto p : available_procedures()) ids.push_back(registry_->procedures()[p].id);
    return ids;
  }

  // Plays one full turn with the chosen procedure.
  TurnResult resolve_attempt(std::string_view procedure_id) {
    require_in_progress("resolve_attempt");
    const auto p = registry_->procedure_index(procedure_id);
    if (removed_[p]) throw ProtocolViolation("procedure '" + std::string(procedure_id) + "' has been removed");
    if (cooldowns_[p] > 0) {
      throw ProtocolViolation("procedure '" + std::string(procedure_id) + "' is on cooldown for " +
                              std::to_string(cooldowns_[p]) + " more turn(s)");
    }
    if (forced_dice_ && dice_used_ >= forced_dice_->size()) throw Error("forced dice sequence exhausted");

    TurnResult result;
    auto& rec = result.record;
    rec.turn = turn_;
    rec.procedure = registry_->procedures()[p].id;
    rec.natural = forced_dice_ ? (*forced_dice_)[dice_used_++] : rng_.roll(kDieSides);
    if (rec.natural < 1 || rec.natural > kDieSides) throw Error("die value out of range: " + std::to_string(rec.natural));
    rec.modifier = established_[p] ? kEstablishedModifier : 0;
    rec.success = rec.natural + rec.modifier >= kSuccessThreshold;

    if (rec.success) {
      for (std::size_t i = 0; i < revealed_.size(); ++i) {
        const auto& card = registry_->attack_cards()[setup_.scenario.cards[i]];
        if (!revealed_[i] && card.detected_by(p)) {
          revealed_[i] = true;
          rec.revealed = card.id;
          break;
        }
      }
      failures_ = 0;
    } else {
      ++failures_;
    }

    for (auto& cd : cooldowns_) {
      if (cd > 0) --cd;
    }
    cooldowns_[p] = kCooldownTurns;
    last_used_ = p;
    for (auto& s : silences_) --s.turns_remaining;
    std::erase_if(silences_, [](const ActiveSilence& s) { return s.turns_remaining <= 0; });

    if (revealed_count() == 4) {
      status_ = GameStatus::Victory;
      history_.push_back(rec);
      return result;
    }

    std::optional<InjectCause> cause;
    if (rec.natural == 1 || rec.natural == kDieSides) {
      cause = InjectCause::NaturalRoll;
    } else if (failures_ >= kFailuresForInject) {
      cause = InjectCause::ThreeFailures;
    }
    if (failures_ >= kFailuresForInject) failures_ = 0;
    if (cause && !pile_.empty()) {
      const auto inject = pile_.front();
      rec.inject = registry_->injects()[inject].id;
      rec.inject_cause = cause;
      result.effect = apply_inject(inject);
    }

    if (status_ == GameStatus::InProgress) {
      if (turn_ >= kMaxTurns) {
        status_ = GameStatus::Loss;
      } else {
        ++turn_;
      }
    }
    history_.push_back(rec);
    return result;
  }

  // Applies one inject card's effect. The card leaves the pile if it is still in it.
  EffectReport apply_inject(std::size_t inject_index) {
    const auto& card = registry_->injects().at(inject_index);
    std::erase(pile_, inject_index);
    EffectReport rep;
    rep.inject_id = card.id;
    rep.kind = card.effect.kind;
    const auto& procs = registry_->procedures();
    switch (card.effect.kind) {
      case EffectKind::EndAsPentest:
        status_ = GameStatus::Pentest;
        rep.changed = true;
        rep.changes.push_back("status: Pentest");
        break;
      case EffectKind::PromoteToEstablished: {
        const auto p = registry_->procedure_index(card.effect.procedure);
        rep.procedure = p;
        if (!established_[p]) {
          established_[p] = true;
          rep.changed = true;
          rep.changes.push_back("established: +" + procs[p].id);
        }
        break;
      }
      case EffectKind::RemoveProcedure: {
        const auto candidates = available_unchecked();
        if (!candidates.empty()) {
          const auto p = candidates[static_cast<std::size_t>(rng_.uniform_below(candidates.size()))];
          removed_[p] = true;
          rep.procedure = p;
          rep.changed = true;
          rep.changes.push_back("removed: +" + procs[p].id);
        }
        break;
      }
      case EffectKind::RestoreProcedure: {
        std::vector<std::size_t> candidates;
        for (std::size_t p = 0; p < procs.size(); ++p) {
          if (removed_[p] || cooldowns_[p] > 0) candidates.push_back(p);
        }
        if (!candidates.empty()) {
          const auto p = candidates[static_cast<std::size_t>(rng_.uniform_below(candidates.size()))];
          rep.procedure = p;
          rep.changed = true;
          if (removed_[p]) {
            removed_[p] = false;
            rep.changes.push_back("removed: -" + procs[p].id);
          }
          if (cooldowns_[p] > 0) {
            cooldowns_[p] = 0;
            rep.changes.push_back("cooldown: " + procs[p].id + " -> 0");
          }
        }
        break;
      }
      case EffectKind::RevealStageHint: {
        for (std::size_t i = 0; i < revealed_.size(); ++i) {
          if (revealed_[i]) continue;
          const auto& target = registry_->attack_cards()[setup_.scenario.cards[i]];
          const auto& det = target.detection;
          const auto pick = registry_->procedure_index(det[static_cast<std::size_t>(rng_.uniform_below(det.size()))]);
          StageHint hint{target.stage, pick};
          hints_.push_back(hint);
          rep.hint = hint;
          rep.changed = true;
          rep.changes.push_back("hints: " + std::string(stage_key(target.stage)) + " detectable by " + procs[pick].id);
          break;
        }
        break;
      }
      case EffectKind::SilenceDefender: {
        ActiveSilence s;
        s.inject_id = card.id;
        s.selector = card.effect.selector;
        s.random_slot = card.effect.selector == SilenceSelector::LeaderOrRandom
                            ? static_cast<int>(rng_.uniform_below(kDefenderSlots)) : 0;
        s.turns_remaining = card.effect.turns;
        silences_.push_back(s);
        rep.silence = s;
        rep.changed = true;
        rep.changes.push_back("silenced: " + std::string(selector_key(s.selector)) + " for " +
                              std::to_string(s.turns_remaining) + " turn(s)");
        break;
      }
      case EffectKind::ExtendLastCooldown:
        if (last_used_) {
          const auto p = *last_used_;
          cooldowns_[p] += card.effect.extra_turns;
          rep.procedure = p;
          rep.changed = true;
          rep.changes.push_back("cooldown: " + procs[p].id + " -> " + std::to_string(cooldowns_[p]));
        }
        break;
      case EffectKind::NoMechanicalEffect:
        break;
    }
    if (!rep.changed) rep.changes.push_back("no effect");
    return rep;
  }

  // Canonical serialization (format tag bnb-state/1).
  nlohmann::json to_json() const {
    const auto& procs = registry_->procedures();
    nlohmann::json j;
    j["format"] = "bnb-state/1";
    j["seed"] = seed_;
    j["turn"] = turn_;
    j["status"] = std::string(status_key(status_));
    auto& sc = j["scenario"] = nlohmann::json::array();
    for (std::size_t i = 0; i < 4; ++i) {
      sc.push_back({{"card", registry_->attack_cards()[setup_.scenario.cards[i]].id}, {"revealed", revealed_[i]}});
    }
    j["established"] = nlohmann::json::array();
    j["removed"] = nlohmann::json::array();
    j["cooldowns"] = nlohmann::json::object();
    for (std::size_t p = 0; p < procs.size(); ++p) {
      if (established_[p]) j["established"].push_back(procs[p].id);
      if (removed_[p]) j["removed"].push_back(procs[p].id);
      j["cooldowns"][procs[p].id] = cooldowns_[p];
    }
    j["consecutive_failures"] = failures_;
    j["inject_pile"] = nlohmann::json::array();
    for (auto i : pile_) j["inject_pile"].push_back(registry_->injects()[i].id);
    j["last_used_procedure"] = last_used_ ? nlohmann::json(procs[*last_used_].id) : nlohmann::json(nullptr);
    j["silences"] = nlohmann::json::array();
    for (const auto& s : silences_) {
      j["silences"].push_back({{"inject", s.inject_id},
                               {"selector", std::string(selector_key(s.selector))},
                               {"random_slot", s.random_slot},
                               {"turns_remaining", s.turns_remaining}});
    }
    j["hints"] = nlohmann::json::array();
    for (const auto& h : hints_) {
      j["hints"].push_back({{"stage", std::string(stage_key(h.stage))}, {"procedure", procs[h.procedure].id}});
    }
    j["history"] = nlohmann::json::array();
    for (const auto& r : history_) j["history"].push_back(bnb::to_json(r));
    return j;
  }

 private:
  GameState(std::shared_ptr<const CardRegistry> registry, std::uint64_t seed, GameSetup setup, Rng rng,
            bool setup_forced, std::optional<std::vector<int>> forced_dice)
      : registry_(std::move(registry)),
        seed_(seed),
        setup_(std::move(setup)),
        setup_forced_(setup_forced),
        rng_(std::move(rng)),
        forced_dice_(std::move(forced_dice)) {
    const auto n = registry_->procedures().size();
    established_.assign(n, false);
    for (auto p : setup_.established) established_[p] = true;
    cooldowns_.assign(n, 0);
    removed_.assign(n, false);
    pile_ = setup_.inject_pile;
  }

  static void validate_setup(const CardRegistry& reg, const GameSetup& setup) {
    for (auto stage : kAttackStages) {
      auto [b, e] = reg.stage_range(stage);
      const auto c = setup.scenario.cards[static_cast<std::size_t>(stage)];
      if (c < b || c >= e) throw Error("setup: scenario card for " + std::string(stage_key(stage)) + " is from the wrong stage");
    }
    for (auto p : setup.established) {
      if (p >= reg.procedures().size()) throw Error("setup: established procedure index out of range");
    }
    std::vector<std::size_t> pile = setup.inject_pile;
    std::sort(pile.begin(), pile.end());
    if (std::adjacent_find(pile.begin(), pile.end()) != pile.end() ||
        (!pile.empty() && pile.back() >= reg.injects().size())) {
      throw Error("setup: inject pile must hold distinct known injects");
    }
  }

  void require_in_progress(const char* op) const {
    if (status_ != GameStatus::InProgress) {
      throw ProtocolViolation(std::string(op) + ": game is over (" + std::string(status_key(status_)) + ")");
    }
  }

  std::vector<std::size_t> available_unchecked() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < cooldowns_.size(); ++p) {
      if (is_available(p)) out.push_back(p);
    }
    return out;
  }

  std::shared_ptr<const CardRegistry> registry_;
  std::uint64_t seed_ = 0;
  GameSetup setup_;
  bool setup_forced_ = false;
  Rng rng_;
  std::optional<std::vector<int>> forced_dice_;
  std::size_t dice_used_ = 0;

  int turn_ = 1;
  GameStatus status_ = GameStatus::InProgress;
  std::array<bool, 4> revealed_{};
  std::vector<bool> established_;
  std::vector<int> cooldowns_;
  std::vector<bool> removed_;
  int failures_ = 0;
  std::vector<std::size_t> pile_;
  std::optional<std::size_t> last_used_;
  std::vector<ActiveSilence> silences_;
  std::vector<StageHint> hints_;
  std::vector<TurnRecord> history_;
};

}  // namespace bnb
