#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bnb/orchestration.hpp"

namespace bnb {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------------------------
// Outcome table

struct OutcomeCounts {
  int success = 0;
  int failure = 0;
  int pentest = 0;
  int invalid = 0;

  int total() const { return success + failure + pentest + invalid; }
  void add(Outcome o) {
    switch (o) {
      case Outcome::Victory: ++success; break;
      case Outcome::Loss: ++failure; break;
      case Outcome::Pentest: ++pentest; break;
      case Outcome::Invalid: ++invalid; break;
    }
  }
  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

struct OutcomeRow {
  std::string structure;
  OutcomeCounts counts;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> seeds;  // min, max
};

struct OutcomeTable {
  std::vector<OutcomeRow> rows;
  std::vector<std::string> errors;  // "<source>: <problem>"

  OutcomeRow& row(const std::string& structure) {
    for (auto& r : rows) {
      if (r.structure == structure) return r;
    }
    rows.push_back({structure, {}, std::nullopt});
    return rows.back();
  }

  void add(const std::string& structure, std::uint64_t seed, Outcome o) {
    auto& r = row(structure);
    r.counts.add(o);
    r.seeds = r.seeds ? std::pair{std::min(r.seeds->first, seed), std::max(r.seeds->second, seed)} : std::pair{seed, seed};
  }

  OutcomeCounts total() const {
    OutcomeCounts t;
    for (const auto& r : rows) {
      t.success += r.counts.success;
      t.failure += r.counts.failure;
      t.pentest += r.counts.pentest;
      t.invalid += r.counts.invalid;
    }
    return t;
  }

  // Preset structures first in their usual order, then anything else by name.
  void sort_rows() {
    const auto& names = team_structure_names();
    auto rank = [&](const std::string& s) {
      auto it = std::find(names.begin(), names.end(), s);
      return static_cast<std::size_t>(it - names.begin());
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const OutcomeRow& a, const OutcomeRow& b) {
      const auto ra = rank(a.structure), rb = rank(b.structure);
      return ra != rb ? ra < rb : a.structure < b.structure;
    });
  }

  std::string render_text() const {
    std::ostringstream out;
    auto line = [&](const std::string& name, const OutcomeCounts& c) {
      out << std::left << std::setw(12) << name << std::right << std::setw(9) << c.success << std::setw(9) << c.failure
          << std::setw(9) << c.pentest << std::setw(9) << c.invalid << std::setw(7) << c.total() << "\n";
    };
    out << std::left << std::setw(12) << "Structure" << std::right << std::setw(9) << "Success" << std::setw(9)
        << "Failure" << std::setw(9) << "Pentest" << std::setw(9) << "Invalid" << std::setw(7) << "Total" << "\n";
    for (const auto& r : rows) line(r.structure, r.counts);
    line("Total", total());
    bool any_seeds = false;
    for (const auto& r : rows) {
      if (!r.seeds) continue;
      out << (any_seeds ? ", " : "Seeds: ") << r.structure << " " << r.seeds->first << "-" << r.seeds->second;
      any_seeds = true;
    }
    if (any_seeds) out << "\n";
    if (!errors.empty()) {
      out << "Errors (" << errors.size() << "):\n";
      for (const auto& e : errors) out << "  " << e << "\n";
    }
    return out.str();
  }

  static std::string latex_row(const std::string& name, const OutcomeCounts& c) {
    return name + " & " + std::to_string(c.success) + " & " + std::to_string(c.failure) + " & " +
           std::to_string(c.pentest) + " & " + std::to_string(c.invalid) + " \\\\";
  }

  std::string render_latex() const {
    std::ostringstream out;
    out << "\\begin{tabular}{lrrrr}\n\\hline\n"
        << "Structure & Success & Failure & Pentest & Invalid \\\\\n\\hline\n";
    for (const auto& r : rows) out << latex_row(r.structure, r.counts) << "\n";
    out << "\\hline\n\\end{tabular}\n";
    for (const auto& e : errors) out << "% error: " << e << "\n";
    return out.str();
  }
};

// Tallies parsed logs; anything that fails validation goes to the errors footer instead.
inline OutcomeTable summarize(const std::vector<std::pair<std::string, nlohmann::json>>& logs) {
  OutcomeTable t;
  for (const auto& [source, doc] : logs) {
    try {
      const auto log = game_log_from_json(doc);
      t.add(log.setup.structure, log.setup.seed, log.summary.outcome);
    } catch (const Error& e) {
      t.errors.push_back(source + ": " + e.what());
    }
  }
  t.sort_rows();
  return t;
}

inline std::vector<fs::path> log_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline OutcomeTable summarize_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::pair<std::string, nlohmann::json>> docs;
  OutcomeTable parse_errors;
  for (const auto& p : log_files(dir)) {
    std::ifstream in(p);
    try {
      docs.emplace_back(p.filename().string(), nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      parse_errors.errors.push_back(p.filename().string() + ": not JSON (" + e.what() + ")");
    }
  }
  auto t = summarize(docs);
  t.errors.insert(t.errors.begin(), parse_errors.errors.begin(), parse_errors.errors.end());
  std::sort(t.errors.begin(), t.errors.end());
  return t;
}

// ---------------------------------------------------------------------------------------------
// Batch runs

struct BatchSpec {
  std::vector<std::string> structures = team_structure_names();
  int games_per_structure = 20;
  std::uint64_t base_seed = 0;
  std::optional<ScriptedPolicy> policy = ScriptedPolicy::Greedy;
  std::optional<GatewayConfig> llm;  // replaces policy when set
  std::size_t k_established = 4;
  Budgets budgets;
  int parallelism = 1;

  // `base_dir` resolves a relative "llm" config path and cassette directory.
  static BatchSpec from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
    static const std::set<std::string> known = {"structures",   "games_per_structure", "base_seed", "policy", "llm",
                                                "k_established", "budgets",            "parallelism"};
    for (const auto& [k, _] : j.items()) {
      if (!known.count(k)) throw Error("batch spec: unknown field '" + k + "'");
    }
    BatchSpec s;
    if (j.contains("structures")) s.structures = j["structures"].get<std::vector<std::string>>();
    for (const auto& name : s.structures) team_structure(name);
    s.games_per_structure = j.value("games_per_structure", s.games_per_structure);
    s.base_seed = j.value("base_seed", s.base_seed);
    s.k_established = j.value("k_established", s.k_established);
    s.parallelism = std::max(1, j.value("parallelism", s.parallelism));
    if (j.contains("budgets")) {
      s.budgets.per_turn = j["budgets"].value("per_turn", s.budgets.per_turn);
      s.budgets.per_game = j["budgets"].value("per_game", s.budgets.per_game);
    }
    if (j.contains("policy") && j.contains("llm")) throw Error("batch spec: give either policy or llm");
    if (j.contains("policy")) {
      s.policy = parse_policy(j["policy"].get<std::string>());
      if (!s.policy) throw Error("batch spec: unknown policy '" + j["policy"].get<std::string>() + "'");
    }
    if (j.contains("llm")) {
      auto path = fs::path(j["llm"].get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      std::ifstream in(path);
      if (!in) throw Error("batch spec: cannot open llm config " + path.string());
      auto cfg = GatewayConfig::from_json(nlohmann::json::parse(in));
      if (!cfg.cassette.empty() && fs::path(cfg.cassette).is_relative()) cfg.cassette = (path.parent_path() / cfg.cassette).string();
      s.llm = cfg;
      s.policy.reset();
    }
    if (s.games_per_structure < 0) throw Error("batch spec: games_per_structure must be >= 0");
    return s;
  }
};

struct BatchResult {
  OutcomeTable table;
  std::vector<nlohmann::json> logs;  // ordered by (structure, seed)
  int played = 0;
  int resumed = 0;
};

inline void write_json_file(const fs::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << doc.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// Plays structures x seeds (base_seed + i). A game whose log already exists in out_dir is
// loaded instead of replayed. With an LLM, each game gets its own cassette file under the
// configured cassette directory. A game that crashes (cassette mismatch, transport failure
// outside the game loop) counts as Invalid but leaves no file, so a rerun retries it.
inline BatchResult run_batch(const BatchSpec& spec, std::shared_ptr<const CardRegistry> registry, const fs::path& out_dir) {
  struct Job {
    std::string structure;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& s : spec.structures) {
    for (int i = 0; i < spec.games_per_structure; ++i) jobs.push_back({s, spec.base_seed + static_cast<std::uint64_t>(i)});
  }
  fs::create_directories(out_dir);
  std::shared_ptr<RateLimiter> limiter;
  if (spec.llm) limiter = std::make_shared<RateLimiter>(spec.llm->max_requests_per_second);

  std::mutex mu;
  BatchResult result;
  std::vector<std::optional<nlohmann::json>> docs(jobs.size());
  std::vector<std::string> errors;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (auto i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      const auto team = team_structure(job.structure);
      const auto name = job.structure + "_" + std::to_string(job.seed);
      const auto file = out_dir / (name + ".json");
      if (fs::exists(file)) {
        try {
          auto doc = read_json_file(file);
          game_log_from_json(doc);
          docs[i] = std::move(doc);
          std::lock_guard lock(mu);
          ++result.resumed;
          continue;
        } catch (const Error&) {
          // Unreadable leftovers are played again.
        }
      }
      GameOptions opt;
      opt.seed = job.seed;
      opt.k_established = spec.k_established;
      opt.budgets = spec.budgets;
      Bindings bindings = Bindings::scripted(spec.policy.value_or(ScriptedPolicy::Greedy));
      try {
        if (spec.llm) {
          auto cfg = *spec.llm;
          if (cfg.mode != CassetteMode::Passthrough) cfg.cassette = (fs::path(cfg.cassette) / (name + ".cassette.json")).string();
          bindings = Bindings::llm(std::make_shared<LlmGateway>(cfg, nullptr, limiter));
        }
        auto doc = to_json(run_game(registry, team, bindings, opt));
        write_json_file(file, doc);
        docs[i] = std::move(doc);
        std::lock_guard lock(mu);
        ++result.played;
      } catch (const std::exception& e) {
        docs[i] = to_json(failed_game_log(registry, team, bindings, opt,
                                          std::string("infrastructure: ") + e.what()));
        std::lock_guard lock(mu);
        errors.push_back(name + ": " + e.what());
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(spec.parallelism), std::max<std::size_t>(jobs.size(), 1));
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  std::vector<std::pair<std::string, nlohmann::json>> named;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    named.emplace_back(jobs[i].structure + "_" + std::to_string(jobs[i].seed), *docs[i]);
    result.logs.push_back(*docs[i]);
  }
  result.table = summarize(named);
  std::sort(errors.begin(), errors.end());
  result.table.errors.insert(result.table.errors.end(), errors.begin(), errors.end());
  return result;
}

// ---------------------------------------------------------------------------------------------
// Replay

struct ReplayReport {
  bool ok = false;
  std::string message;
  std::optional<int> turn;  // first turn that differs
  std::string field;
};

inline ReplayReport replay_verify(const nlohmann::json& doc, std::shared_ptr<const CardRegistry> registry) {
  auto fail = [](std::string msg, std::optional<int> turn = std::nullopt, std::string field = {}) {
    return ReplayReport{false, std::move(msg), turn, std::move(field)};
  };
  GameLog log;
  try {
    log = game_log_from_json(doc);
  } catch (const Error& e) {
    return fail(e.what());
  }
  const auto& reg = *registry;
  if (log.setup.card_db_hash != reg.content_hash()) {
    return fail("card database hash differs: log " + log.setup.card_db_hash + ", loaded " + reg.content_hash(),
                std::nullopt, "card_db_hash");
  }

  std::optional<GameState> state;
  try {
    if (log.setup.forced_setup) {
      if (!log.captain_private) return fail("forced setup cannot be replayed without captain_private");
      GameSetup setup;
      for (std::size_t i = 0; i < 4; ++i) setup.scenario.cards[i] = reg.attack_index(log.captain_private->scenario[i]);
      for (const auto& id : log.setup.established) setup.established.push_back(reg.procedure_index(id));
      for (const auto& id : log.captain_private->inject_pile) setup.inject_pile.push_back(reg.inject_index(id));
      state = GameState::from_setup(registry, log.setup.seed, setup, log.setup.forced_dice);
    } else {
      state = GameState::new_game(registry, log.setup.seed, log.setup.k_established, log.setup.forced_dice);
    }
  } catch (const Error& e) {
    return fail(std::string("cannot rebuild setup: ") + e.what());
  }

  std::vector<std::string> est, other;
  for (std::size_t p = 0; p < reg.procedures().size(); ++p) {
    (state->is_established(p) ? est : other).push_back(reg.procedures()[p].id);
  }
  if (est != log.setup.established || other != log.setup.other) return fail("setup differs", std::nullopt, "established");
  if (log.captain_private) {
    std::vector<std::string> scen, pile;
    for (auto c : state->scenario().cards) scen.push_back(reg.attack_cards()[c].id);
    for (auto i : state->setup().inject_pile) pile.push_back(reg.injects()[i].id);
    if (scen != log.captain_private->scenario) return fail("setup differs", std::nullopt, "scenario");
    if (pile != log.captain_private->inject_pile) return fail("setup differs", std::nullopt, "inject_pile");
  }

  for (const auto& t : log.trajectory) {
    const int n = t.record.turn;
    if (!state->in_progress()) return fail("game already over before turn " + std::to_string(n), n, "status");
    TurnResult r;
    try {
      r = state->resolve_attempt(t.record.procedure);
    } catch (const Error& e) {
      return fail("turn " + std::to_string(n) + ": " + e.what(), n, "procedure");
    }
    const auto got = to_json(r.record);
    const auto want = to_json(t.record);
    for (const auto& [key, value] : want.items()) {
      if (got.value(key, nlohmann::json()) != value) {
        return fail("turn " + std::to_string(n) + ": " + key + " differs (log " + value.dump() + ", replay " +
                        got.value(key, nlohmann::json()).dump() + ")",
                    n, key);
      }
    }
    const auto effect = r.effect ? r.effect->changes : std::vector<std::string>{};
    if (effect != t.effect) return fail("turn " + std::to_string(n) + ": inject effect differs", n, "effect");
  }

  const auto status = state->status();
  bool consistent = false;
  switch (log.summary.outcome) {
    case Outcome::Victory: consistent = status == GameStatus::Victory; break;
    case Outcome::Loss: consistent = status == GameStatus::Loss; break;
    case Outcome::Pentest: consistent = status == GameStatus::Pentest; break;
    case Outcome::Invalid: consistent = status == GameStatus::InProgress; break;
  }
  if (!consistent) {
    return fail("outcome " + std::string(outcome_key(log.summary.outcome)) + " but replay ends " +
                    std::string(status_key(status)),
                std::nullopt, "outcome");
  }
  if (log.captain_private && !log.captain_private->final_state.is_null() && log.captain_private->final_state != state->to_json()) {
    return fail("final state differs", std::nullopt, "final_state");
  }
  return {true, "replay matches: " + std::to_string(log.trajectory.size()) + " turn(s), " +
                    std::string(outcome_key(log.summary.outcome)),
          std::nullopt, {}};
}

// ---------------------------------------------------------------------------------------------
// Engine-only rate estimates

enum class RatePolicy { RandomValid, Greedy, Oracle, EstablishedOnly, OtherOnly };

inline std::string_view rate_policy_key(RatePolicy p) {
  switch (p) {
    case RatePolicy::RandomValid: return "RandomValid";
    case RatePolicy::Greedy: return "Greedy";
    case RatePolicy::Oracle: return "Oracle";
    case RatePolicy::EstablishedOnly: return "EstablishedOnly";
    case RatePolicy::OtherOnly: return "OtherOnly";
  }
  return "?";
}

inline std::optional<RatePolicy> parse_rate_policy(std::string_view key) {
  for (auto p : {RatePolicy::RandomValid, RatePolicy::Greedy, RatePolicy::Oracle, RatePolicy::EstablishedOnly,
                 RatePolicy::OtherOnly}) {
    if (rate_policy_key(p) == key) return p;
  }
  return std::nullopt;
}

struct Proportion {
  int hits = 0;
  int trials = 0;

  double value() const { return trials ? static_cast<double>(hits) / trials : 0.0; }
  double standard_error() const { return trials ? std::sqrt(value() * (1 - value()) / trials) : 0.0; }
};

struct RateEstimate {
  RatePolicy policy = RatePolicy::RandomValid;
  int games = 0;
  Proportion established;  // successes / attempts at +3
  Proportion other;        // successes / attempts at +0
  Proportion naturals;  // attempts rolling a natural 1 or 20
  Proportion injects;   // turns that drew an inject
  Proportion wins;
  int losses = 0;
  int pentests = 0;
  int stalemates = 0;
  long turns = 0;

  double mean_turns() const { return games ? static_cast<double>(turns) / games : 0.0; }

  std::string render() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "policy " << rate_policy_key(policy) << ", " << games << " games\n";
    out << "established: " << established.value() << " +/- " << established.standard_error() << " ("
        << established.hits << "/" << established.trials << ", exact " << success_probability(kEstablishedModifier).value()
        << ")\n";
    out << "other:       " << other.value() << " +/- " << other.standard_error() << " (" << other.hits << "/"
        << other.trials << ", exact " << success_probability(0).value() << ")\n";
    out << "natural 1/20: " << naturals.value() << " +/- " << naturals.standard_error() << " (exact 0.1000)\n";
    out << "inject drawn: " << injects.value() << " +/- " << injects.standard_error() << " per turn\n";
    out << "win rate:    " << wins.value() << " +/- " << wins.standard_error() << "\n";
    out << "losses " << losses << ", pentests " << pentests << ", stalemates " << stalemates << ", mean turns "
        << mean_turns() << "\n";
    return out.str();
  }
};

inline std::string rate_policy_choice(RatePolicy policy, const GameState& g, Rng& rng) {
  const auto view = make_defender_view(g);
  switch (policy) {
    case RatePolicy::RandomValid: return scripted_choice(ScriptedPolicy::RandomValid, view, &g, rng);
    case RatePolicy::Greedy: return scripted_choice(ScriptedPolicy::Greedy, view, &g, rng);
    case RatePolicy::Oracle: return scripted_choice(ScriptedPolicy::Oracle, view, &g, rng);
    case RatePolicy::EstablishedOnly:
    case RatePolicy::OtherOnly: {
      const bool want = policy == RatePolicy::EstablishedOnly;
      const ProcedureView* fallback = nullptr;
      for (const auto& p : view.procedures) {
        if (!p.available) continue;
        if (p.established == want) return p.id;
        if (!fallback) fallback = &p;
      }
      if (fallback) return fallback->id;
      throw Stalemate("no available procedure");
    }
  }
  throw Error("unknown policy");
}

// Plays `games` engine-only games on seeds base_seed..base_seed+games-1.
inline RateEstimate estimate_rates(RatePolicy policy, std::shared_ptr<const CardRegistry> registry, int games,
                                   std::uint64_t base_seed = 0, std::size_t k_established = 4) {
  RateEstimate est;
  est.policy = policy;
  for (int i = 0; i < games; ++i) {
    const auto seed = base_seed + static_cast<std::uint64_t>(i);
    auto g = GameState::new_game(registry, seed, k_established);
    Rng rng(agent_stream_seed(seed));
    ++est.games;
    ++est.wins.trials;
    try {
      while (g.in_progress()) {
        const auto r = g.resolve_attempt(rate_policy_choice(policy, g, rng)).record;
        auto& bucket = r.modifier > 0 ? est.established : est.other;
        ++bucket.trials;
        bucket.hits += r.success;
        ++est.naturals.trials;
        est.naturals.hits += r.natural == 1 || r.natural == kDieSides;
        ++est.injects.trials;
        est.injects.hits += r.inject.has_value();
      }
    } catch (const Stalemate&) {
      ++est.stalemates;
    }
    est.turns += g.turns_played();
    if (g.status() == GameStatus::Victory) ++est.wins.hits;
    if (g.status() == GameStatus::Loss) ++est.losses;
    if (g.status() == GameStatus::Pentest) ++est.pentests;
  }
  return est;
}

}  // namespace bnb
