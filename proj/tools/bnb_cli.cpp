#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bnb/cards.hpp"
#include "bnb/default_cards.hpp"
#include "bnb/harness.hpp"
#include "bnb/orchestration.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct UsageError : bnb::Error {
  using bnb::Error::Error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_dice(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 1 || v > bnb::kDieSides) throw UsageError("bad die value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--forced-dice needs at least one value");
  return out;
}

nlohmann::json read_json_arg(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw UsageError(std::string("cannot open ") + what + " " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string(what) + " " + path + ": " + e.what());
  }
}

// {"scenario": [4 ids], "established": [ids], "inject_pile": [ids]}
bnb::GameSetup read_setup(const std::string& path, const bnb::CardRegistry& reg) {
  const auto j = read_json_arg(path, "setup file");
  bnb::GameSetup s;
  try {
    const auto scen = j.at("scenario").get<std::vector<std::string>>();
    if (scen.size() != 4) throw UsageError("setup file: scenario needs 4 cards");
    for (std::size_t i = 0; i < 4; ++i) s.scenario.cards[i] = reg.attack_index(scen[i]);
    for (const auto& id : j.at("established").get<std::vector<std::string>>()) s.established.push_back(reg.procedure_index(id));
    std::sort(s.established.begin(), s.established.end());
    for (const auto& id : j.at("inject_pile").get<std::vector<std::string>>()) s.inject_pile.push_back(reg.inject_index(id));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("setup file: ") + e.what());
  }
  return s;
}

std::shared_ptr<const bnb::CardRegistry> registry_for(const std::string& cards) {
  if (cards.empty()) return bnb::default_registry();
  return std::make_shared<const bnb::CardRegistry>(bnb::load_registry_file(cards));
}

int cmd_validate(const std::string& file) {
  try {
    const auto reg = bnb::load_registry_file(file);
    std::cout << "ok: " << reg.procedures().size() << " procedures, " << reg.attack_cards().size()
              << " attack cards (";
    for (std::size_t i = 0; i < bnb::kAttackStages.size(); ++i) {
      std::cout << (i ? "/" : "") << reg.stage_size(bnb::kAttackStages[i]);
    }
    std::cout << "), " << reg.injects().size() << " injects, version " << reg.version() << "\nsha256 "
              << reg.content_hash() << "\n";
    return kOk;
  } catch (const bnb::CardDatabaseError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kFailed;
  } catch (const bnb::Error& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kFailed;
  }
}

struct PlayArgs {
  std::string structure;
  std::uint64_t seed = 0;
  std::string policy;
  std::string llm;
  std::string forced_dice;
  std::string choices;
  std::string setup;
  std::size_t k = 4;
  std::string out;
  bool redacted = false;
};

int cmd_play(const PlayArgs& a, const std::string& cards) {
  const auto reg = registry_for(cards);
  bnb::TeamStructure team;
  try {
    team = bnb::team_structure(a.structure);
  } catch (const bnb::Error& e) {
    throw UsageError(e.what());
  }
  bnb::Bindings bindings;
  if (!a.choices.empty()) {
    bindings = bnb::Bindings::sequence(split_list(a.choices));
  } else if (!a.llm.empty()) {
    auto cfg = bnb::GatewayConfig::from_json(read_json_arg(a.llm, "llm config"));
    if (!cfg.cassette.empty() && fs::path(cfg.cassette).is_relative()) {
      cfg.cassette = (fs::path(a.llm).parent_path() / cfg.cassette).string();
    }
    bindings = bnb::Bindings::llm(std::make_shared<bnb::LlmGateway>(cfg));
  } else {
    const auto policy = bnb::parse_policy(a.policy.empty() ? "Greedy" : a.policy);
    if (!policy) throw UsageError("unknown policy '" + a.policy + "' (RandomValid, Greedy, Oracle)");
    bindings = bnb::Bindings::scripted(*policy);
  }
  bnb::GameOptions opt;
  opt.seed = a.seed;
  opt.k_established = a.k;
  if (!a.forced_dice.empty()) opt.forced_dice = parse_dice(a.forced_dice);
  if (!a.setup.empty()) opt.setup = read_setup(a.setup, *reg);

  const auto log = bnb::run_game(reg, team, bindings, opt);
  auto doc = bnb::to_json(log);
  if (a.redacted) doc = bnb::redact_log(doc);
  if (a.out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    const auto path = fs::path(a.out) / log.file_name();
    bnb::write_json_file(path, doc);
    std::cout << path.string() << "\n";
  }
  std::cerr << a.structure << " seed " << a.seed << ": " << bnb::outcome_key(log.summary.outcome) << " after "
            << log.summary.turns_played << " turn(s)";
  if (log.summary.invalid_reason) std::cerr << " (" << *log.summary.invalid_reason << ")";
  std::cerr << "\n";
  return kOk;
}

int cmd_batch(const std::string& spec_path, const std::string& out, const std::string& cards) {
  const auto reg = registry_for(cards);
  bnb::BatchSpec spec;
  try {
    spec = bnb::BatchSpec::from_json(read_json_arg(spec_path, "batch spec"), fs::path(spec_path).parent_path());
  } catch (const UsageError&) {
    throw;
  } catch (const bnb::Error& e) {
    throw UsageError(e.what());
  }
  const auto result = bnb::run_batch(spec, reg, out);
  const auto table = result.table.render_text();
  std::ofstream(fs::path(out) / "outcomes.txt") << table;
  std::cout << table << "played " << result.played << ", resumed " << result.resumed << "\n";
  return result.table.errors.empty() ? kOk : kFailed;
}

int cmd_replay(const std::string& log_path, const std::string& cards) {
  const auto reg = registry_for(cards);
  nlohmann::json doc;
  try {
    doc = bnb::read_json_file(log_path);
  } catch (const bnb::Error& e) {
    std::cerr << "replay failed: " << e.what() << "\n";
    return kFailed;
  }
  const auto report = bnb::replay_verify(doc, reg);
  (report.ok ? std::cout : std::cerr) << (report.ok ? "" : "replay failed: ") << report.message << "\n";
  return report.ok ? kOk : kFailed;
}

int cmd_stats(const std::string& dir, const std::string& format) {
  const auto table = bnb::summarize_dir(dir);
  std::cout << (format == "latex" ? table.render_latex() : table.render_text());
  return kOk;
}

int cmd_rates(const std::string& policy_name, int games, std::uint64_t seed, std::size_t k, const std::string& cards) {
  const auto policy = bnb::parse_rate_policy(policy_name);
  if (!policy) throw UsageError("unknown policy '" + policy_name + "'");
  std::cout << bnb::estimate_rates(*policy, registry_for(cards), games, seed, k).render();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoors & Breaches simulation harness"};
  app.require_subcommand(1);
  std::string cards;
  app.add_option("--cards", cards, "Card database file (default: built-in)");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate-cards", "Check a card database file");
  validate->add_option("file", validate_file)->required();

  PlayArgs play_args;
  auto* play = app.add_subcommand("play", "Play one game and emit its log");
  play->add_option("--structure", play_args.structure, "Team structure, e.g. Homo-Cen")->required();
  play->add_option("--seed", play_args.seed)->required();
  auto* policy_opt = play->add_option("--policy", play_args.policy, "RandomValid, Greedy or Oracle");
  auto* llm_opt = play->add_option("--llm", play_args.llm, "LLM gateway config file");
  auto* choices_opt = play->add_option("--choices", play_args.choices, "Comma-separated procedure ids, one per turn");
  policy_opt->excludes(llm_opt)->excludes(choices_opt);
  llm_opt->excludes(choices_opt);
  play->add_option("--forced-dice", play_args.forced_dice, "Comma-separated natural rolls");
  play->add_option("--setup", play_args.setup, "Fixed scenario, split and inject pile (JSON)");
  play->add_option("--k", play_args.k, "Established procedures at setup")->check(CLI::Range(0, 11));
  play->add_option("--out", play_args.out, "Write <structure>_<seed>.json here instead of stdout");
  play->add_flag("--redacted", play_args.redacted, "Omit the captain's private section");

  std::string spec_path, batch_out;
  auto* batch = app.add_subcommand("batch", "Run structures x seeds");
  batch->add_option("--spec", spec_path)->required();
  batch->add_option("--out", batch_out)->required();

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "Re-run a log's trajectory and compare");
  replay->add_option("log", replay_log)->required();

  std::string stats_dir, stats_format = "text";
  auto* stats = app.add_subcommand("stats", "Outcome table over a directory of logs");
  stats->add_option("--dir", stats_dir)->required();
  stats->add_option("--format", stats_format)->check(CLI::IsMember({"text", "latex"}));

  std::string rates_policy = "Oracle";
  int rates_games = 2000;
  std::uint64_t rates_seed = 0;
  std::size_t rates_k = 4;
  auto* rates = app.add_subcommand("rates", "Engine-only success and win rates");
  rates->add_option("--policy", rates_policy, "RandomValid, Greedy, Oracle, EstablishedOnly, OtherOnly");
  rates->add_option("--games", rates_games)->check(CLI::PositiveNumber);
  rates->add_option("--seed", rates_seed);
  rates->add_option("--k", rates_k)->check(CLI::Range(0, 11));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) return cmd_validate(validate_file);
    if (*play) return cmd_play(play_args, cards);
    if (*batch) return cmd_batch(spec_path, batch_out, cards);
    if (*replay) return cmd_replay(replay_log, cards);
    if (*stats) return cmd_stats(stats_dir, stats_format);
    if (*rates) return cmd_rates(rates_policy, rates_games, rates_seed, rates_k, cards);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
