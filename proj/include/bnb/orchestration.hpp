#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bnb/agents.hpp"
#include "bnb/engine.hpp"
#include "bnb/llm_gateway.hpp"

namespace bnb {

enum class Outcome { Victory, Loss, Pentest, Invalid };

inline std::string_view outcome_key(Outcome o) {
  switch (o) {
    case Outcome::Victory: return "Victory";
    case Outcome::Loss: return "Loss";
    case Outcome::Pentest: return "Pentest";
    case Outcome::Invalid: return "Invalid";
  }
  return "?";
}

inline Outcome parse_outcome(std::string_view key) {
  for (auto o : {Outcome::Victory, Outcome::Loss, Outcome::Pentest, Outcome::Invalid}) {
    if (outcome_key(o) == key) return o;
  }
  throw Error("unknown outcome '" + std::string(key) + "'");
}

struct TranscriptMessage {
  std::string speaker;
  std::string role;  // "captain", "defender" or "tool"
  std::string content;
  bool redacted = false;

  friend bool operator==(const TranscriptMessage&, const TranscriptMessage&) = default;
};

struct Budgets {
  int per_turn = 10;   // defender messages within one turn
  int per_game = 300;  // all messages

  friend bool operator==(const Budgets&, const Budgets&) = default;
};

enum class CaptainCue { Opening, TurnStart, TurnResult, Closing };

// What an agent sees when asked to speak.
struct SpeakContext {
  const GameState& state;
  const TeamStructure& team;
  const DefenderView& view;
  std::optional<std::size_t> defender;  // slot; empty for the captain
  CaptainCue cue = CaptainCue::TurnStart;
  bool decider = false;
  int round = 0;
  const std::vector<TranscriptMessage>& transcript;  // public messages so far
  std::string cue_text;                              // facts the captain should narrate
};

struct ScriptedAgent {
  ScriptedPolicy policy = ScriptedPolicy::Greedy;
};
// Decider names choices[turn - 1]; everyone else agrees.
struct SequenceAgent {
  std::vector<std::string> choices;
};
struct LlmAgent {
  std::shared_ptr<LlmGateway> gateway;
};
struct CallbackAgent {
  std::string label;
  std::function<std::string(const SpeakContext&)> speak;
};
using AgentBinding = std::variant<ScriptedAgent, SequenceAgent, LlmAgent, CallbackAgent>;

inline std::string binding_label(const AgentBinding& b) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ScriptedAgent>) return "scripted:" + std::string(policy_key(a.policy));
        if constexpr (std::is_same_v<T, SequenceAgent>) return "sequence";
        if constexpr (std::is_same_v<T, LlmAgent>) return "llm:" + a.gateway->config().model;
        if constexpr (std::is_same_v<T, CallbackAgent>) return "callback:" + a.label;
      },
      b);
}

struct Bindings {
  AgentBinding captain = ScriptedAgent{};
  std::array<AgentBinding, kDefenderSlots> defenders;

  static Bindings scripted(ScriptedPolicy p) {
    Bindings b;
    b.defenders.fill(ScriptedAgent{p});
    return b;
  }
  static Bindings sequence(std::vector<std::string> choices) {
    Bindings b;
    b.defenders.fill(SequenceAgent{std::move(choices)});
    return b;
  }
  static Bindings llm(std::shared_ptr<LlmGateway> gateway) {
    Bindings b;
    b.captain = LlmAgent{gateway};
    b.defenders.fill(LlmAgent{gateway});
    return b;
  }
};

struct GameOptions {
  std::uint64_t seed = 0;
  std::size_t k_established = 4;
  std::optional<GameSetup> setup;
  std::optional<std::vector<int>> forced_dice;
  Budgets budgets;
};

// ---------------------------------------------------------------------------------------------
// Game log

struct LoggedTurn {
  TurnRecord record;
  std::vector<std::string> effect;  // engine change list; empty when no inject
  std::vector<TranscriptMessage> transcript;
};

struct AbortedTurn {
  int turn = 0;
  std::vector<TranscriptMessage> transcript;
};

struct LogSetup {
  std::string structure;
  std::uint64_t seed = 0;
  std::string card_db_hash;
  std::string card_db_version;
  std::size_t k_established = 4;
  std::vector<std::string> established;
  std::vector<std::string> other;
  std::vector<std::string> defenders;  // role names, roster order
  std::optional<std::vector<int>> forced_dice;
  bool forced_setup = false;
  nlohmann::json bindings;
  Budgets budgets;
};

// Never shown to defenders; strip with redact_log before sharing.
struct CaptainPrivate {
  std::vector<std::string> scenario;     // attack card ids, stage order
  std::vector<std::string> inject_pile;  // initial order
  nlohmann::json final_state;
};

struct GameSummary {
  Outcome outcome = Outcome::Invalid;
  int turns_played = 0;
  std::vector<std::string> revealed;  // attack card ids
  std::optional<std::string> invalid_reason;
};

struct GameLog {
  LogSetup setup;
  std::optional<CaptainPrivate> captain_private;
  std::vector<TranscriptMessage> preamble;
  std::vector<LoggedTurn> trajectory;
  std::optional<AbortedTurn> aborted_turn;
  std::vector<TranscriptMessage> closing;
  GameSummary summary;

  std::string file_name() const { return setup.structure + "_" + std::to_string(setup.seed) + ".json"; }
};

inline nlohmann::json to_json(const TranscriptMessage& m) {
  return {{"speaker", m.speaker}, {"role", m.role}, {"content", m.content}, {"redacted", m.redacted}};
}

inline nlohmann::json to_json(const std::vector<TranscriptMessage>& ms) {
  auto j = nlohmann::json::array();
  for (const auto& m : ms) j.push_back(to_json(m));
  return j;
}

inline nlohmann::json to_json(const GameLog& log) {
  const auto& s = log.setup;
  nlohmann::json j;
  j["format"] = "bnb-gamelog/1";
  j["setup"] = {{"structure", s.structure},
                {"seed", s.seed},
                {"card_db_hash", s.card_db_hash},
                {"card_db_version", s.card_db_version},
                {"k_established", s.k_established},
                {"established", s.established},
                {"other", s.other},
                {"defenders", s.defenders},
                {"forced_dice", s.forced_dice ? nlohmann::json(*s.forced_dice) : nlohmann::json(nullptr)},
                {"forced_setup", s.forced_setup},
                {"bindings", s.bindings},
                {"budgets", {{"per_turn", s.budgets.per_turn}, {"per_game", s.budgets.per_game}}}};
  if (log.captain_private) {
    j["captain_private"] = {{"scenario", log.captain_private->scenario},
                            {"inject_pile", log.captain_private->inject_pile},
                            {"final_state", log.captain_private->final_state}};
  }
  j["preamble"] = to_json(log.preamble);
  j["trajectory"] = nlohmann::json::array();
  for (const auto& t : log.trajectory) {
    j["trajectory"].push_back({{"record", to_json(t.record)}, {"effect", t.effect}, {"transcript", to_json(t.transcript)}});
  }
  j["aborted_turn"] = log.aborted_turn ? nlohmann::json{{"turn", log.aborted_turn->turn},
                                                        {"transcript", to_json(log.aborted_turn->transcript)}}
                                       : nlohmann::json(nullptr);
  j["closing"] = to_json(log.closing);
  j["summary"] = {{"outcome", std::string(outcome_key(log.summary.outcome))},
                  {"turns_played", log.summary.turns_played},
                  {"revealed", log.summary.revealed},
                  {"invalid_reason", log.summary.invalid_reason ? nlohmann::json(*log.summary.invalid_reason)
                                                                : nlohmann::json(nullptr)}};
  return j;
}

namespace detail {

inline std::vector<TranscriptMessage> transcript_from_json(const nlohmann::json& j) {
  std::vector<TranscriptMessage> out;
  for (const auto& m : j) {
    TranscriptMessage t{m.at("speaker").get<std::string>(), m.at("role").get<std::string>(),
                        m.at("content").get<std::string>(), m.at("redacted").get<bool>()};
    if (t.role != "captain" && t.role != "defender" && t.role != "tool") throw Error("unknown speaker role " + t.role);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

// Parses and structurally validates a log document. Throws Error naming the problem.
inline GameLog game_log_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "bnb-gamelog/1") throw Error("unsupported format tag");
    GameLog log;
    const auto& s = j.at("setup");
    auto& ls = log.setup;
    ls.structure = s.at("structure").get<std::string>();
    ls.seed = s.at("seed").get<std::uint64_t>();
    ls.card_db_hash = s.at("card_db_hash").get<std::string>();
    ls.card_db_version = s.at("card_db_version").get<std::string>();
    ls.k_established = s.at("k_established").get<std::size_t>();
    ls.established = s.at("established").get<std::vector<std::string>>();
    ls.other = s.at("other").get<std::vector<std::string>>();
    ls.defenders = s.at("defenders").get<std::vector<std::string>>();
    if (!s.at("forced_dice").is_null()) ls.forced_dice = s.at("forced_dice").get<std::vector<int>>();
    ls.forced_setup = s.at("forced_setup").get<bool>();
    ls.bindings = s.at("bindings");
    ls.budgets = {s.at("budgets").at("per_turn").get<int>(), s.at("budgets").at("per_game").get<int>()};
    if (j.contains("captain_private")) {
      const auto& c = j.at("captain_private");
      log.captain_private = CaptainPrivate{c.at("scenario").get<std::vector<std::string>>(),
                                           c.at("inject_pile").get<std::vector<std::string>>(), c.at("final_state")};
      if (log.captain_private->scenario.size() != 4) throw Error("captain_private.scenario needs 4 cards");
    }
    log.preamble = detail::transcript_from_json(j.at("preamble"));
    int expected_turn = 1;
    for (const auto& t : j.at("trajectory")) {
      LoggedTurn lt{turn_record_from_json(t.at("record")), t.at("effect").get<std::vector<std::string>>(),
                    detail::transcript_from_json(t.at("transcript"))};
      if (lt.record.turn != expected_turn++) throw Error("trajectory turns must count up from 1");
      log.trajectory.push_back(std::move(lt));
    }
    if (!j.at("aborted_turn").is_null()) {
      log.aborted_turn = AbortedTurn{j.at("aborted_turn").at("turn").get<int>(),
                                     detail::transcript_from_json(j.at("aborted_turn").at("transcript"))};
    }
    log.closing = detail::transcript_from_json(j.at("closing"));
    const auto& sm = j.at("summary");
    log.summary.outcome = parse_outcome(sm.at("outcome").get<std::string>());
    log.summary.turns_played = sm.at("turns_played").get<int>();
    log.summary.revealed = sm.at("revealed").get<std::vector<std::string>>();
    if (!sm.at("invalid_reason").is_null()) log.summary.invalid_reason = sm.at("invalid_reason").get<std::string>();
    if (log.summary.turns_played != static_cast<int>(log.trajectory.size())) {
      throw Error("summary.turns_played does not match the trajectory");
    }
    if ((log.summary.outcome == Outcome::Invalid) != log.summary.invalid_reason.has_value()) {
      throw Error("invalid_reason must be set exactly when the outcome is Invalid");
    }
    return log;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("game log: ") + e.what());
  } catch (const Error& e) {
    throw Error(std::string("game log: ") + e.what());
  }
}

// The shareable form: everything but the captain's private section.
inline nlohmann::json redact_log(nlohmann::json log) {
  log.erase("captain_private");
  return log;
}

// ---------------------------------------------------------------------------------------------
// Turn-taking

// Slot silenced by `s`: Leader if the team has one (else the drawn random slot), or the first
// defender of the highest skill rank.
inline std::size_t silence_target(const TeamStructure& team, const ActiveSilence& s) {
  const auto& d = team.defenders;
  if (s.selector == SilenceSelector::LeaderOrRandom) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i].skill == Skill::Leader) return i;
    }
    return static_cast<std::size_t>(s.random_slot) % d.size();
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (skill_rank(d[i].skill) > skill_rank(d[best].skill)) best = i;
  }
  return best;
}

inline std::vector<bool> silenced_slots(const GameState& state, const TeamStructure& team) {
  std::vector<bool> out(team.defenders.size(), false);
  for (const auto& s : state.silences()) out[silence_target(team, s)] = true;
  return out;
}

// Centralized: the Leader. Hybrid: the first Expert. Decentralized: rotates by turn.
// A silenced decider hands over to the next defender who is not silenced.
inline std::size_t designated_decider(const TeamStructure& team, int turn, const std::vector<bool>& silenced) {
  const auto n = team.defenders.size();
  std::size_t slot = 0;
  switch (leadership_of(team.name)) {
    case Leadership::Centralized:
    case Leadership::Hybrid: {
      const auto want = leadership_of(team.name) == Leadership::Centralized ? Skill::Leader : Skill::Expert;
      for (std::size_t i = 0; i < n; ++i) {
        if (team.defenders[i].skill == want) {
          slot = i;
          break;
        }
      }
      if (!silenced[slot]) return slot;
      for (std::size_t i = 0; i < n; ++i) {
        if (!silenced[i]) return i;
      }
      break;
    }
    case Leadership::Decentralized:
      slot = static_cast<std::size_t>(turn - 1) % n;
      for (std::size_t k = 0; k < n; ++k) {
        if (!silenced[(slot + k) % n]) return (slot + k) % n;
      }
      break;
  }
  throw Error("every defender is silenced");
}

struct SessionMonitor {
  int game_messages = 0;
  int turn_messages = 0;        // defender messages this turn
  int unavailable_choices = 0;  // this turn
  bool premature_end_game = false;
};

inline constexpr int kMaxUnavailableChoices = 3;

// Reason the session must end as Invalid, if any.
inline std::optional<std::string> detect_invalid(const SessionMonitor& m, const Budgets& b, GameStatus status) {
  if (m.premature_end_game) return "premature END_GAME";
  if (m.unavailable_choices >= kMaxUnavailableChoices) return "protocol violation";
  if (status == GameStatus::InProgress && m.game_messages >= b.per_game) return "message budget exhausted";
  return std::nullopt;
}

class InvalidGame : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------------------------
// Public narration

inline std::string describe_effect(const EffectReport& rep, const GameState& state, const TeamStructure& team) {
  const auto& reg = state.registry();
  auto pname = [&](std::size_t p) { return reg.procedures()[p].name; };
  switch (rep.kind) {
    case EffectKind::EndAsPentest:
      return "The incident was a penetration test. The game ends here.";
    case EffectKind::PromoteToEstablished:
      return rep.changed ? pname(*rep.procedure) + " is now an Established Procedure (+3)."
                         : pname(*rep.procedure) + " was already Established; nothing changes.";
    case EffectKind::RemoveProcedure:
      return rep.changed ? pname(*rep.procedure) + " has been taken away for the rest of the game."
                         : "No procedure was available to take away.";
    case EffectKind::RestoreProcedure:
      return rep.changed ? pname(*rep.procedure) + " is available again." : "Every procedure is already available.";
    case EffectKind::RevealStageHint:
      return rep.changed ? "The " + std::string(stage_display_name(rep.hint->stage)) + " stage can be detected by " +
                               pname(rep.hint->procedure) + "."
                         : "There is nothing left to hint at.";
    case EffectKind::SilenceDefender:
      return team.defenders[silence_target(team, *rep.silence)].role_name + " is unavailable for the next " +
             std::to_string(rep.silence->turns_remaining) + " turn(s).";
    case EffectKind::ExtendLastCooldown:
      return rep.changed ? pname(*rep.procedure) + " is now on cooldown for " +
                               std::to_string(state.cooldown(*rep.procedure)) + " turn(s)."
                         : "No procedure has been used yet; nothing changes.";
    case EffectKind::NoMechanicalEffect:
      return "No effect on play.";
  }
  return {};
}

inline std::string describe_result(const TurnResult& r, const GameState& state, const TeamStructure& team) {
  const auto& reg = state.registry();
  const auto& rec = r.record;
  std::string out = "Turn " + std::to_string(rec.turn) + ": " + reg.procedure(rec.procedure).name + " rolled a natural " +
                    std::to_string(rec.natural) + " with +" + std::to_string(rec.modifier) + " for " +
                    std::to_string(rec.natural + rec.modifier) + ": " + (rec.success ? "success" : "failure") + ".";
  if (rec.revealed) {
    const auto& card = reg.attack_cards()[reg.attack_index(*rec.revealed)];
    out += " Revealed the " + std::string(stage_display_name(card.stage)) + " card: " + card.name + ".";
  } else {
    out += " The procedure did not reveal anything new.";
  }
  if (rec.inject) {
    const auto& inj = reg.injects()[reg.inject_index(*rec.inject)];
    out += "\nInject drawn (" +
           std::string(*rec.inject_cause == InjectCause::NaturalRoll ? "natural roll" : "three consecutive failures") +
           "): " + inj.name + ". " + describe_effect(*r.effect, state, team);
  }
  return out;
}

namespace detail {

inline std::string scripted_captain_text(CaptainCue cue, const GameState& state) {
  switch (cue) {
    case CaptainCue::Opening:
      return "Welcome, Defenders. Our monitoring flagged unusual activity overnight and we believe an attacker is "
             "inside the network. Four stages of this breach are hidden from you. Uncover all of them within " +
             std::to_string(kMaxTurns) + " turns.\n" + procedure_cards_text(state);
    case CaptainCue::TurnStart:
      return "Turn " + std::to_string(state.turn()) + " begins. Discuss and select one Procedure.";
    case CaptainCue::TurnResult:
      return "Noted. " + std::to_string(state.revealed_count()) + " of 4 attack cards are revealed.";
    case CaptainCue::Closing:
      switch (state.status()) {
        case GameStatus::Victory: return "Victory! You uncovered every stage of the breach.";
        case GameStatus::Loss: return "Time is up. The breach went undetected.";
        case GameStatus::Pentest: return "It was a pentest all along. The game ends.";
        case GameStatus::InProgress: break;
      }
      return "The game has ended.";
  }
  return {};
}

inline std::string captain_cue_prompt(CaptainCue cue, const GameState& state, const std::string& facts) {
  switch (cue) {
    case CaptainCue::Opening:
      return "Set the scene for the Defenders and introduce the Procedure cards. Setup facts:\n" + facts;
    case CaptainCue::TurnStart:
      return "Announce turn " + std::to_string(state.turn()) +
             ", remind the Defenders of cooldowns and modifier changes, and prompt them to choose one Procedure. "
             "Current facts:\n" + facts;
    case CaptainCue::TurnResult:
      return "The dice have been rolled. Narrate this result to the Defenders:\n" + facts;
    case CaptainCue::Closing:
      return "The game is over (" + std::string(status_key(state.status())) +
             "). Announce the result to the Defenders. Do not type the end keyword; it is added for you.";
  }
  return {};
}

inline std::string defender_cue_prompt(const RoleSpec& role, bool decider, Leadership leadership) {
  std::string s = role.role_name + ", it is your turn to speak. ";
  if (decider) {
    s += "You are the designated decider this turn: after weighing the discussion, end with a line "
         "\"CHOOSE: <Procedure name>\".";
  } else if (leadership == Leadership::Decentralized) {
    s += "Share your view. Any Defender may settle the turn with a line \"CHOOSE: <Procedure name>\".";
  } else {
    s += "Share your view with the team; the designated decider makes the final call.";
  }
  return s;
}

inline std::vector<ChatMessage> chat_history(const std::vector<TranscriptMessage>& transcript, const std::string& self,
                                             const std::string& self_role) {
  std::vector<ChatMessage> out;
  for (const auto& m : transcript) {
    const bool mine = m.speaker == self && m.role == self_role;
    out.push_back({mine ? ChatRole::Assistant : ChatRole::User, sanitize_name(m.speaker), m.content});
  }
  return out;
}

}  // namespace detail

// Scripted agents draw from their own stream so they never shift the game's dice.
inline std::uint64_t agent_stream_seed(std::uint64_t game_seed) { return game_seed ^ 0x9e3779b97f4a7c15ULL; }

inline constexpr std::string_view kCaptainName = "Incident Captain";
inline constexpr std::string_view kToolName = "ToolExecutor";

// ---------------------------------------------------------------------------------------------
// Session

namespace detail {

class Session {
 public:
  Session(std::shared_ptr<const CardRegistry> reg, const TeamStructure& team, const Bindings& bindings,
          const GameOptions& opt)
      : team_(team),
        bindings_(bindings),
        opt_(opt),
        state_(opt.setup ? GameState::from_setup(reg, opt.seed, *opt.setup, opt.forced_dice)
                         : GameState::new_game(reg, opt.seed, opt.k_established, opt.forced_dice)),
        agent_rng_(agent_stream_seed(opt.seed)) {}

  // Setup and private sections only; the caller fills in the summary.
  GameLog skeleton() {
    GameLog log;
    fill_setup(log);
    finish(log);
    return log;
  }

  GameLog run() {
    validate_team(team_);
    GameLog log;
    fill_setup(log);
    section_ = &log.preamble;
    try {
      post_tool("Game setup.\n" + procedure_cards_text(state_) + "Defenders: " + roster_text());
      captain_speaks(CaptainCue::Opening, procedure_cards_text(state_));
      while (state_.in_progress()) play_turn(log);
      section_ = &log.closing;
      captain_speaks(CaptainCue::Closing, {});
      post({std::string(kCaptainName), "captain", closing_summary() + "\n" + std::string(kEndGameKeyword)});
      log.summary.outcome = state_.status() == GameStatus::Victory ? Outcome::Victory
                            : state_.status() == GameStatus::Loss  ? Outcome::Loss
                                                                   : Outcome::Pentest;
    } catch (const CassetteError&) {
      throw;
    } catch (const CredentialMissing&) {
      throw;
    } catch (const InvalidGame& e) {
      mark_invalid(log, e.what());
    } catch (const Stalemate&) {
      mark_invalid(log, "stalemate");
    } catch (const std::exception& e) {
      mark_invalid(log, std::string("error: ") + e.what());
    }
    finish(log);
    return log;
  }

 private:
  void play_turn(GameLog& log) {
    const int turn = state_.turn();
    turn_buffer_.clear();
    section_ = &turn_buffer_;
    monitor_.turn_messages = 0;
    monitor_.unavailable_choices = 0;

    const auto view = make_defender_view(state_, notices_);
    const auto view_text = render_view(view);
    post_tool(view_text);
    captain_speaks(CaptainCue::TurnStart, view_text);

    const auto silenced = silenced_slots(state_, team_);
    const auto decider = designated_decider(team_, turn, silenced);
    const auto leadership = leadership_of(team_.name);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < team_.defenders.size(); ++i) {
      if (!silenced[i] && i != decider) order.push_back(i);
    }
    order.push_back(decider);

    std::optional<std::string> choice;
    for (int round = 0; round < 2 && !choice; ++round) {
      for (auto slot : order) {
        if (monitor_.turn_messages >= opt_.budgets.per_turn) throw InvalidGame("no decision");
        const auto msg = defender_speaks(slot, slot == decider, round, view);
        ++monitor_.turn_messages;
        if (leadership != Leadership::Decentralized && slot != decider) continue;
        const auto parsed = parse_procedure_choice(msg, state_.registry(), view.available_ids());
        if (parsed.procedure) {
          choice = parsed.procedure;
          break;
        }
        if (parsed.reason == "unavailable") {
          ++monitor_.unavailable_choices;
          check();
        }
      }
    }
    if (!choice) throw InvalidGame("no decision");

    const auto result = state_.resolve_attempt(*choice);
    const auto result_text = describe_result(result, state_, team_);
    post_tool(result_text);
    notices_.clear();
    if (result.effect) notices_.push_back(describe_effect(*result.effect, state_, team_));
    captain_speaks(CaptainCue::TurnResult, result_text);
    log.trajectory.push_back({result.record, result.effect ? result.effect->changes : std::vector<std::string>{},
                              std::move(turn_buffer_)});
    turn_buffer_.clear();
    section_ = &turn_buffer_;
  }

  void post(TranscriptMessage m) {
    if (m.content.find(kEndGameKeyword) != std::string::npos && state_.in_progress()) {
      monitor_.premature_end_game = true;
    }
    section_->push_back(m);
    public_.push_back(std::move(m));
    ++monitor_.game_messages;
    check();
  }

  void post_tool(std::string content) { post({std::string(kToolName), "tool", std::move(content)}); }

  void check() {
    if (auto reason = detect_invalid(monitor_, opt_.budgets, state_.status())) throw InvalidGame(*reason);
  }

  // Agent text passes through redaction; engine-generated text is built from public facts only.
  std::string post_agent(const std::string& speaker, const std::string& role, const std::string& raw) {
    auto clean = redact_hidden_cards(raw, state_);
    const bool redacted = clean != raw;
    post({speaker, role, clean, redacted});
    return clean;
  }

  void captain_speaks(CaptainCue cue, const std::string& facts) {
    const auto view = make_defender_view(state_, notices_);
    SpeakContext ctx{state_, team_, view, std::nullopt, cue, false, 0, public_, facts};
    const auto speaker = std::string(kCaptainName);
    std::string text = std::visit(
        [&](const auto& a) -> std::string {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, LlmAgent>) {
            auto history = detail::chat_history(public_, speaker, "captain");
            history.push_back({ChatRole::User, std::string(kToolName), detail::captain_cue_prompt(cue, state_, facts)});
            const auto system = render_system_message(PromptTemplate::Captain, roles::leader(), state_);
            return a.gateway->complete(a.gateway->make_request(system, history));
          } else if constexpr (std::is_same_v<T, CallbackAgent>) {
            return a.speak(ctx);
          } else {
            return detail::scripted_captain_text(cue, state_);
          }
        },
        bindings_.captain);
    post_agent(speaker, "captain", text);
  }

  std::string defender_speaks(std::size_t slot, bool decider, int round, const DefenderView& view) {
    const auto& role = team_.defenders[slot];
    SpeakContext ctx{state_, team_, view, slot, CaptainCue::TurnStart, decider, round, public_, {}};
    const auto& reg = state_.registry();
    std::string text = std::visit(
        [&](const auto& a) -> std::string {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, ScriptedAgent>) {
            const auto pick = reg.procedure(scripted_choice(a.policy, view, &state_, agent_rng_)).name;
            return decider ? pick + " is our best option.\n" + std::string(kDecisionMarker) + " " + pick
                           : "I suggest " + pick + ".";
          } else if constexpr (std::is_same_v<T, SequenceAgent>) {
            if (!decider) return "Agreed.";
            const auto i = static_cast<std::size_t>(state_.turn() - 1);
            if (i >= a.choices.size()) return "I have nothing further planned.";
            return std::string(kDecisionMarker) + " " + reg.procedure(a.choices[i]).name;
          } else if constexpr (std::is_same_v<T, LlmAgent>) {
            auto history = detail::chat_history(public_, role.role_name, "defender");
            history.push_back({ChatRole::User, std::string(kToolName),
                               detail::defender_cue_prompt(role, decider, leadership_of(team_.name))});
            const auto system = render_system_message(PromptTemplate::Defender, role, state_);
            return a.gateway->complete(a.gateway->make_request(system, history));
          } else {
            return a.speak(ctx);
          }
        },
        bindings_.defenders[slot]);
    return post_agent(role.role_name, "defender", text);
  }

  std::string roster_text() const {
    std::string s;
    for (std::size_t i = 0; i < team_.defenders.size(); ++i) s += (i ? ", " : "") + team_.defenders[i].role_name;
    return s + ".";
  }

  std::string closing_summary() const {
    const auto& reg = state_.registry();
    nlohmann::json j{{"outcome", std::string(status_key(state_.status()))},
                     {"turns_played", state_.turns_played()},
                     {"revealed", nlohmann::json::array()},
                     {"procedures_used", nlohmann::json::array()}};
    for (const auto& r : state_.history()) {
      j["procedures_used"].push_back(reg.procedure(r.procedure).name);
      if (r.revealed) j["revealed"].push_back(reg.attack_cards()[reg.attack_index(*r.revealed)].name);
    }
    return "Game summary:\n" + j.dump(2);
  }

  void fill_setup(GameLog& log) const {
    const auto& reg = state_.registry();
    auto& s = log.setup;
    s.structure = team_.name;
    s.seed = opt_.seed;
    s.card_db_hash = reg.content_hash();
    s.card_db_version = reg.version();
    s.k_established = opt_.setup ? state_.setup().established.size() : opt_.k_established;
    for (std::size_t p = 0; p < reg.procedures().size(); ++p) {
      (state_.is_established(p) ? s.established : s.other).push_back(reg.procedures()[p].id);
    }
    for (const auto& r : team_.defenders) s.defenders.push_back(r.role_name);
    s.forced_dice = opt_.forced_dice;
    s.forced_setup = opt_.setup.has_value();
    s.bindings = {{"captain", binding_label(bindings_.captain)}, {"defenders", nlohmann::json::array()}};
    for (const auto& b : bindings_.defenders) s.bindings["defenders"].push_back(binding_label(b));
    s.budgets = opt_.budgets;

    CaptainPrivate cp;
    for (auto c : state_.scenario().cards) cp.scenario.push_back(reg.attack_cards()[c].id);
    for (auto i : state_.setup().inject_pile) cp.inject_pile.push_back(reg.injects()[i].id);
    log.captain_private = std::move(cp);
  }

  void mark_invalid(GameLog& log, std::string reason) {
    log.summary.outcome = Outcome::Invalid;
    log.summary.invalid_reason = std::move(reason);
    if (section_ == &turn_buffer_ && !turn_buffer_.empty()) {
      log.aborted_turn = AbortedTurn{state_.turn(), std::move(turn_buffer_)};
    }
  }

  void finish(GameLog& log) const {
    log.summary.turns_played = state_.turns_played();
    for (const auto& r : state_.history()) {
      if (r.revealed) log.summary.revealed.push_back(*r.revealed);
    }
    log.captain_private->final_state = state_.to_json();
  }

  const TeamStructure& team_;
  const Bindings& bindings_;
  const GameOptions& opt_;
  GameState state_;
  Rng agent_rng_;
  SessionMonitor monitor_;
  std::vector<TranscriptMessage> public_;
  std::vector<TranscriptMessage> turn_buffer_;
  std::vector<TranscriptMessage>* section_ = nullptr;
  std::vector<std::string> notices_;
};

}  // namespace detail

// Plays one game to a terminal status or an Invalid outcome. A cassette mismatch or missing
// credential propagates instead of becoming an outcome.
inline GameLog run_game(std::shared_ptr<const CardRegistry> registry, const TeamStructure& team,
                        const Bindings& bindings, const GameOptions& options = {}) {
  detail::Session session(std::move(registry), team, bindings, options);
  return session.run();
}

// Log for a game that could not be played at all, e.g. its cassette did not match.
inline GameLog failed_game_log(std::shared_ptr<const CardRegistry> registry, const TeamStructure& team,
                               const Bindings& bindings, const GameOptions& options, std::string reason) {
  detail::Session session(std::move(registry), team, bindings, options);
  auto log = session.skeleton();
  log.summary.outcome = Outcome::Invalid;
  log.summary.invalid_reason = std::move(reason);
  return log;
}

}  // namespace bnb
