// Acceptance suite: one PASS/FAIL line per criterion. Offline; the LLM is a local stub.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bnb/default_cards.hpp"
#include "bnb/harness.hpp"
#include "oracle/dp_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

namespace fs = std::filesystem;
using namespace bnb;

namespace {

struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  void expect(bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  }
};

const fs::path kSource = BNB_SOURCE_DIR;
const std::string kCli = BNB_CLI_PATH;

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("bnb_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI; returns its exit code and stdout.
std::pair<int, std::string> cli(const std::string& args) {
  const auto cmd = shell_quote(kCli) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, {}};
  std::string out;
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// 1. The published example game, turn by turn.
Check golden_replay() {
  Check c;
  const auto reg = default_registry();
  auto g = GameState::from_setup(reg, 0, testing::published_setup(*reg), testing::kPublishedDice);
  const std::vector<bool> success = {false, true, false, true, true, true};
  const std::vector<std::string> reveals = {"", "p.application_shimming", "", "c2.http_exfil",
                                            "pe.credential_stuffing", "ic.external_cloud_access"};
  const std::vector<std::string> injects = {"", "", "lead_handler_has_a_baby", "", "honeypots_deployed", ""};
  for (std::size_t t = 0; t < 6; ++t) {
    const auto r = g.resolve_attempt(testing::kPublishedChoices[t]).record;
    const auto n = "turn " + std::to_string(t + 1);
    c.expect(r.success == success[t], n + ": success flag");
    c.expect(r.revealed.value_or("") == reveals[t], n + ": revealed '" + r.revealed.value_or("") + "'");
    c.expect(r.inject.value_or("") == injects[t], n + ": inject '" + r.inject.value_or("") + "'");
  }
  c.expect(g.status() == GameStatus::Victory && g.turns_played() == 6, "victory at turn 6");
  const auto report = replay_verify(read_json_file(kSource / "tests/data/published_golden.json"), reg);
  c.expect(report.ok && report.message == "replay matches: 6 turn(s), Victory", "shipped golden log: " + report.message);
  return c;
}

// 2. Bundled database shape and the corruption suite.
Check registry_invariants() {
  Check c;
  const auto reg = default_registry();
  c.expect(reg->attack_cards().size() == 32 && reg->procedures().size() == 11 && reg->injects().size() == 9,
           "card counts 32/11/9");
  const std::array<std::size_t, 4> stages = {10, 7, 6, 9};
  for (std::size_t i = 0; i < 4; ++i) c.expect(reg->stage_size(kAttackStages[i]) == stages[i], "stage count");
  const auto base = nlohmann::json::parse(kDefaultCardsJson);
  const auto mutations = testing::card_db_mutations(base);
  c.expect(mutations.size() >= 50, "at least 50 mutations");
  for (const auto& [label, doc] : mutations) {
    try {
      c.expect(!(CardRegistry::from_json(doc) == *reg), label + " accepted silently");
    } catch (const CardDatabaseError&) {
    }
  }
  return c;
}

// 3. First-turn attempts over many seeds.
Check dice_statistics() {
  Check c;
  const auto reg = default_registry();
  constexpr int kAttempts = 100000;
  Proportion est, other, naturals;
  for (int i = 0; i < kAttempts; ++i) {
    for (bool want_est : {true, false}) {
      auto g = GameState::new_game(reg, static_cast<std::uint64_t>(i) * 2 + (want_est ? 0 : 1));
      std::size_t pick = 0;
      for (auto p : g.available_procedures()) {
        if (g.is_established(p) == want_est) {
          pick = p;
          break;
        }
      }
      const auto r = g.resolve_attempt(reg->procedures()[pick].id).record;
      auto& bucket = want_est ? est : other;
      ++bucket.trials;
      bucket.hits += r.success;
      ++naturals.trials;
      naturals.hits += r.natural == 1 || r.natural == 20;
    }
  }
  std::ostringstream msg;
  msg << std::fixed << std::setprecision(4) << "established " << est.value() << ", other " << other.value()
      << ", naturals " << naturals.value();
  c.notes.push_back(msg.str());
  c.expect(std::abs(est.value() - 0.65) <= 0.01, msg.str());
  c.expect(std::abs(other.value() - 0.50) <= 0.01, msg.str());
  c.expect(std::abs(naturals.value() - 0.10) <= 0.01, msg.str());
  return c;
}

// 4. Rule properties over random games. Cooldowns are checked against an independent model.
Check rule_properties() {
  Check c;
  const auto reg = default_registry();
  const auto n = reg->procedures().size();
  constexpr std::uint64_t kGames = 1500;
  std::uint64_t played = 0;
  for (std::uint64_t seed = 0; seed < kGames && c.failures.size() < 5; ++seed, ++played) {
    auto g = GameState::new_game(reg, seed);
    Rng rng(seed ^ 0x5bd1e995ULL);
    std::vector<int> model(n, 0);
    std::set<std::string> drawn;
    int last_revealed = 0;
    const auto tag = "seed " + std::to_string(seed) + ": ";
    while (g.in_progress()) {
      for (std::size_t p = 0; p < n; ++p) {
        c.expect(g.cooldown(p) == model[p], tag + "cooldown of " + reg->procedures()[p].id + " off model");
        if (model[p] > 0) {
          try {
            auto fork = g;
            fork.resolve_attempt(reg->procedures()[p].id);
            c.expect(false, tag + "cooling procedure accepted");
          } catch (const ProtocolViolation&) {
          }
        }
      }
      const auto avail = g.available_procedures();
      if (avail.empty()) break;
      const auto pile_before = g.inject_pile().size();
      const auto p = avail[static_cast<std::size_t>(rng.uniform_below(avail.size()))];
      const auto res = g.resolve_attempt(reg->procedures()[p].id);
      const auto& r = res.record;

      for (auto& cd : model) cd = std::max(0, cd - 1);
      model[p] = kCooldownTurns;
      if (res.effect && res.effect->procedure) {
        const auto q = *res.effect->procedure;
        if (res.effect->kind == EffectKind::RestoreProcedure) model[q] = 0;
        if (res.effect->kind == EffectKind::ExtendLastCooldown) {
          model[q] += reg->injects()[reg->inject_index(res.effect->inject_id)].effect.extra_turns;
        }
      }

      c.expect(pile_before - g.inject_pile().size() == (r.inject ? 1u : 0u), tag + "more than one inject in a turn");
      if (r.inject) c.expect(drawn.insert(*r.inject).second, tag + "inject repeated");
      if (r.success) c.expect(g.consecutive_failures() == 0, tag + "failure streak survives a success");
      if (r.inject_cause == InjectCause::ThreeFailures) {
        c.expect(g.consecutive_failures() == 0, tag + "failure streak survives its inject");
      }
      c.expect(g.consecutive_failures() < kFailuresForInject, tag + "failure streak reached 3");
      c.expect(g.revealed_count() >= last_revealed, tag + "revealed count went down");
      last_revealed = g.revealed_count();
      c.expect(g.turns_played() <= kMaxTurns, tag + "more than 10 turns");
    }
    const auto status = g.status();
    c.expect(status != GameStatus::InProgress, tag + "game did not end");
    try {
      g.resolve_attempt(reg->procedures()[0].id);
      c.expect(false, tag + "play accepted after the game ended");
    } catch (const Error&) {
    }
    c.expect(g.status() == status, tag + "terminal status changed");
  }
  c.notes.push_back(std::to_string(played) + " games checked");
  return c;
}

// 5. Monte Carlo Oracle vs the frozen DP values.
Check oracle_equivalence() {
  Check c;
  const auto reg = default_registry();
  const auto fx = read_json_file(kSource / "tests/data/dp_oracle_values.json");
  c.expect(fx.at("card_db_hash") == reg->content_hash(), "DP fixture was built for another card database");
  const auto& values = fx.at("values");
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto g = GameState::new_game(reg, seed);
    c.expect(std::abs(oracle::oracle_win_probability(*reg, g.setup()) - values[seed].get<double>()) < 1e-12,
             "fixture value differs at seed " + std::to_string(seed));
  }
  const auto games = static_cast<int>(values.size());
  const auto mc = estimate_rates(RatePolicy::Oracle, reg, games, 0);
  const double dp = fx.at("mean").get<double>();
  std::ostringstream msg;
  msg << std::fixed << std::setprecision(4) << "Monte Carlo " << mc.wins.value() << " vs DP " << dp << " over "
      << games << " games";
  c.notes.push_back(msg.str());
  c.expect(games >= 2000, "fewer than 2000 games");
  c.expect(std::abs(mc.wins.value() - dp) <= 0.02, msg.str());
  c.expect(mc.stalemates == 0, "Oracle games ended in stalemate");

  // The same policy through the full orchestration: no Invalid outcomes.
  BatchSpec spec;
  spec.structures = {"Homo-Cen"};
  spec.games_per_structure = 200;
  spec.policy = ScriptedPolicy::Oracle;
  const auto batch = run_batch(spec, reg, scratch("oracle_batch"));
  c.expect(batch.table.total().invalid == 0, "Oracle batch produced Invalid outcomes");
  return c;
}

// 6. Two CLI batches, byte for byte, then replay and tamper.
Check determinism() {
  Check c;
  const auto dir = scratch("determinism");
  spit(dir / "spec.json", R"({"games_per_structure": 5, "base_seed": 100, "policy": "RandomValid", "parallelism": 2})");
  const auto a = dir / "a", b = dir / "b";
  c.expect(cli("batch --spec " + shell_quote((dir / "spec.json").string()) + " --out " + shell_quote(a.string())).first == 0,
           "first batch failed");
  c.expect(cli("batch --spec " + shell_quote((dir / "spec.json").string()) + " --out " + shell_quote(b.string())).first == 0,
           "second batch failed");
  const auto files = log_files(a);
  c.expect(files.size() == 30, "expected 30 logs, got " + std::to_string(files.size()));
  c.expect(slurp(a / "outcomes.txt") == slurp(b / "outcomes.txt") && !slurp(a / "outcomes.txt").empty(),
           "outcome tables differ");
  for (const auto& f : files) {
    const auto name = f.filename().string();
    const auto text = slurp(f);
    c.expect(text == slurp(b / f.filename()), name + " differs between runs");
    c.expect(cli("replay " + shell_quote(f.string())).first == 0, name + " does not replay");
    // Bump one digit of the first recorded natural roll.
    const auto key = text.find("\"natural\": ");
    if (key == std::string::npos) continue;
    auto tampered = text;
    auto& d = tampered[key + 11];
    d = d == '9' ? '8' : static_cast<char>(d + 1);
    const auto tpath = dir / ("tampered_" + name);
    spit(tpath, tampered);
    c.expect(cli("replay " + shell_quote(tpath.string())).first == 1, name + " tamper not detected");
  }
  return c;
}

// 7. Cassette-driven games through the CLI.
Check end_to_end_stub() {
  Check c;
  const auto dir = scratch("e2e");
  setenv("BNB_ACCEPTANCE_KEY", "stub-key", 1);
  auto config = [&](const std::string& file, const std::string& mode, const std::string& cassette, const std::string& url) {
    nlohmann::json j{{"endpoint", url}, {"model", "stub-model"}, {"api_key_env", "BNB_ACCEPTANCE_KEY"},
                     {"mode", mode}, {"cassette", cassette}, {"backoff_ms", 1}};
    spit(dir / file, j.dump(2));
    return shell_quote((dir / file).string());
  };
  auto record = [&](testing::StubServer::Handler handler, const std::string& tag) {
    testing::StubServer server(std::move(handler));
    const auto cfg = config(tag + "_record.json", "record", tag + ".cassette.json", server.url());
    return cli("play --structure Hetero-Cen --seed 7 --llm " + cfg + " --out " + shell_quote((dir / (tag + "_rec")).string()));
  };

  c.expect(record(testing::playing_reply, "good").first == 0, "recording run failed");
  const auto cfg = config("good_replay.json", "replay", "good.cassette.json", "http://127.0.0.1:9/unused");
  const auto out = dir / "logs";
  c.expect(cli("play --structure Hetero-Cen --seed 7 --llm " + cfg + " --out " + shell_quote(out.string())).first == 0,
           "replay run failed");
  try {
    const auto doc = read_json_file(out / "Hetero-Cen_7.json");
    const auto log = game_log_from_json(doc);
    c.expect(log.summary.outcome != Outcome::Invalid, "stubbed game ended Invalid: " + log.summary.invalid_reason.value_or(""));
    c.expect(!log.closing.empty() && log.closing.back().content.find("END_GAME") != std::string::npos, "no END_GAME terminator");
    c.expect(doc == read_json_file(dir / "good_rec" / "Hetero-Cen_7.json"), "replayed log differs from the recorded one");
  } catch (const Error& e) {
    c.expect(false, std::string("log unreadable: ") + e.what());
  }
  const auto [code, table] = cli("stats --dir " + shell_quote(out.string()));
  c.expect(code == 0 && table.find("Structure     Success  Failure  Pentest  Invalid  Total") != std::string::npos &&
               table.find("\nHetero-Cen ") != std::string::npos,
           "stats table: " + table);
  const auto latex = cli("stats --format latex --dir " + shell_quote(out.string())).second;
  c.expect(latex.find("Hetero-Cen & ") != std::string::npos, "latex row missing");

  auto premature = [](const nlohmann::json& req, int n) {
    const auto system = req.at("messages").front().at("content").get<std::string>();
    if (system.find("You are the Incident Captain") != std::string::npos) return testing::playing_reply(req, n);
    return testing::StubReply{200, "We are done here. END_GAME"};
  };
  c.expect(record(premature, "bad").first == 0, "premature recording failed");
  const auto bad_cfg = config("bad_replay.json", "replay", "bad.cassette.json", "http://127.0.0.1:9/unused");
  const auto bad_out = dir / "bad_logs";
  cli("play --structure Hetero-Cen --seed 7 --llm " + bad_cfg + " --out " + shell_quote(bad_out.string()));
  try {
    const auto log = game_log_from_json(read_json_file(bad_out / "Hetero-Cen_7.json"));
    c.expect(log.summary.outcome == Outcome::Invalid && log.summary.invalid_reason == "premature END_GAME",
             "premature END_GAME not flagged Invalid");
  } catch (const Error& e) {
    c.expect(false, std::string("premature log unreadable: ") + e.what());
  }
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "golden replay of the published game", 1, golden_replay},
      {2, "registry invariants and corruption suite", 1, registry_invariants},
      {3, "dice statistics over 1e5 attempts", 10, dice_statistics},
      {4, "rule properties over random games", 60, rule_properties},
      {5, "Oracle Monte Carlo vs DP oracle", 300, oracle_equivalence},
      {6, "batch determinism, replay and tamper detection", 120, determinism},
      {7, "end to end with a stubbed LLM", 10, end_to_end_stub},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Check result;
    try {
      result = cr.run();
    } catch (const std::exception& e) {
      result.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > cr.limit_seconds) result.failures.push_back("took longer than " + std::to_string(cr.limit_seconds) + " s");
    const bool ok = result.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << cr.id << ": " << cr.name << " (" << std::fixed
              << std::setprecision(2) << secs << " s)\n";
    for (const auto& note : result.notes) std::cout << "      " << note << "\n";
    for (std::size_t i = 0; i < result.failures.size() && i < 10; ++i) std::cout << "      " << result.failures[i] << "\n";
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed\n" : "all criteria passed\n");
  return failed ? 1 : 0;
}
