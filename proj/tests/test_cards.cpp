#include <gtest/gtest.h>

#include <map>

#include "bnb/cards.hpp"
#include "bnb/default_cards.hpp"
#include "support/fixtures.hpp"

namespace bnb {
namespace {

std::string name_of(const CardRegistry& reg, std::size_t attack) { return reg.attack_cards()[attack].name; }

TEST(CardRegistry, BundledDatabaseCounts) {
  const auto reg = default_registry();
  EXPECT_EQ(reg->attack_cards().size(), 32u);
  EXPECT_EQ(reg->procedures().size(), 11u);
  EXPECT_EQ(reg->injects().size(), 9u);
  EXPECT_EQ(reg->stage_size(AttackStage::InitialCompromise), 10u);
  EXPECT_EQ(reg->stage_size(AttackStage::PivotEscalate), 7u);
  EXPECT_EQ(reg->stage_size(AttackStage::C2Exfil), 6u);
  EXPECT_EQ(reg->stage_size(AttackStage::Persistence), 9u);
  EXPECT_EQ(reg->content_hash().size(), 64u);
}

TEST(CardRegistry, ProcedureNamesFollowPublishedList) {
  const std::vector<std::string> expected = {
      "Security Information and Event Management (SIEM) Log Analysis", "Server Analysis", "Firewall Log Review",
      "Network Threat Hunting - Zeek/RITA Analysis", "Cyber Deception", "Endpoint Security Protection Analysis",
      "User and Entity Behavior Analytics (UEBA)", "Endpoint Analysis", "Isolation", "Crisis Management",
      "Memory Analysis"};
  const auto reg = default_registry();
  ASSERT_EQ(reg->procedures().size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(reg->procedures()[i].name, expected[i]);
}

TEST(CardRegistry, StagesAreGroupedInOrder) {
  const auto reg = default_registry();
  for (auto stage : kAttackStages) {
    auto [b, e] = reg->stage_range(stage);
    for (auto i = b; i < e; ++i) EXPECT_EQ(reg->attack_cards()[i].stage, stage);
  }
}

TEST(CardRegistry, PublishedDetectionPairings) {
  const auto reg = default_registry();
  auto detects = [&](const char* proc, const char* card) {
    return reg->attack_cards()[reg->attack_index(card)].detected_by(reg->procedure_index(proc));
  };
  EXPECT_TRUE(detects("server_analysis", "p.application_shimming"));
  EXPECT_TRUE(detects("isolation", "c2.http_exfil"));
  EXPECT_TRUE(detects("ueba", "pe.credential_stuffing"));
  EXPECT_TRUE(detects("memory_analysis", "ic.external_cloud_access"));
}

TEST(CardRegistry, EmptyDocumentIsCountMismatch) {
  try {
    load_registry("{}");
    FAIL() << "expected an error";
  } catch (const CardDatabaseError& e) {
    EXPECT_EQ(e.kind(), CardDatabaseError::Kind::CountMismatch);
  }
}

TEST(CardRegistry, UnknownDetectionReferenceNamesTheCard) {
  auto doc = nlohmann::json::parse(kDefaultCardsJson);
  for (auto& card : doc["attack_cards"]) {
    if (card["name"] == "Phish") card["detection"].push_back("Nonexistent Procedure");
  }
  try {
    CardRegistry::from_json(doc);
    FAIL() << "expected an error";
  } catch (const CardDatabaseError& e) {
    EXPECT_EQ(e.kind(), CardDatabaseError::Kind::UnknownReference);
    EXPECT_EQ(e.entry(), "Phish");
    EXPECT_NE(std::string(e.what()).find("Phish"), std::string::npos);
  }
}

TEST(CardRegistry, DuplicateIdIsNamed) {
  auto doc = nlohmann::json::parse(kDefaultCardsJson);
  doc["injects"][3]["id"] = "it_was_a_pentest";
  try {
    CardRegistry::from_json(doc);
    FAIL() << "expected an error";
  } catch (const CardDatabaseError& e) {
    EXPECT_EQ(e.kind(), CardDatabaseError::Kind::DuplicateId);
    EXPECT_EQ(e.entry(), "it_was_a_pentest");
  }
}

TEST(CardRegistry, RejectsUnknownFields) {
  auto doc = nlohmann::json::parse(kDefaultCardsJson);
  doc["procedures"][0]["modifier"] = 3;
  EXPECT_THROW(CardRegistry::from_json(doc), CardDatabaseError);
}

TEST(CardRegistry, RejectsMalformedJson) { EXPECT_THROW(load_registry("{\"format\":"), CardDatabaseError); }

TEST(CardRegistry, ProcedureWithoutAnyDetectionIsRejected) {
  auto doc = nlohmann::json::parse(kDefaultCardsJson);
  for (auto& card : doc["attack_cards"]) {
    auto& det = card["detection"];
    for (auto it = det.begin(); it != det.end(); ++it) {
      if (*it == "crisis_management") {
        det.erase(it);
        break;
      }
    }
  }
  try {
    CardRegistry::from_json(doc);
    FAIL();
  } catch (const CardDatabaseError& e) {
    EXPECT_EQ(e.entry(), "crisis_management");
  }
}

TEST(CardRegistry, SingleFieldCorruptionsNeverSilentlyAccepted) {
  const auto base = nlohmann::json::parse(kDefaultCardsJson);
  const auto reference = CardRegistry::from_json(base);
  const auto mutations = testing::card_db_mutations(base);
  ASSERT_GE(mutations.size(), 50u);
  for (const auto& [label, doc] : mutations) {
    try {
      const auto mutated = CardRegistry::from_json(doc);
      EXPECT_FALSE(mutated == reference) << label << " was accepted without changing the registry";
    } catch (const CardDatabaseError&) {
    }
  }
}

TEST(Scenario, SameSeedSameDraw) {
  const auto reg = default_registry();
  Rng a(42), b(42);
  EXPECT_EQ(draw_attack_scenario(*reg, a), draw_attack_scenario(*reg, b));
}

TEST(Scenario, OneCardPerStage) {
  const auto reg = default_registry();
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto s = draw_attack_scenario(*reg, rng);
    for (auto stage : kAttackStages) EXPECT_EQ(reg->attack_cards()[s.cards[static_cast<std::size_t>(stage)]].stage, stage);
  }
}

TEST(Scenario, PublishedScenarioIsDrawable) {
  const auto reg = default_registry();
  const auto target = testing::published_setup(*reg).scenario;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 20000 && !found; ++seed) {
    Rng rng(seed);
    found = draw_attack_scenario(*reg, rng) == target;
  }
  EXPECT_TRUE(found);
}

// Each Initial Compromise card should come up with frequency 1/10; binomial sd at n=1e4 is 0.003.
TEST(Scenario, InitialCompromiseDrawIsUniform) {
  const auto reg = default_registry();
  std::map<std::size_t, int> counts;
  const int n = 10000;
  for (int seed = 0; seed < n; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    ++counts[draw_attack_scenario(*reg, rng).cards[0]];
  }
  ASSERT_EQ(counts.size(), 10u);
  for (const auto& [card, c] : counts) {
    EXPECT_NEAR(static_cast<double>(c) / n, 0.1, 0.02) << name_of(*reg, card);
  }
}

TEST(ProcedureSplit, Shapes) {
  const auto reg = default_registry();
  for (std::size_t k : {0u, 4u, 11u}) {
    Rng rng(5);
    const auto split = initial_procedure_split(*reg, rng, k);
    EXPECT_EQ(split.established.size(), k);
    EXPECT_EQ(split.other.size(), 11 - k);
    std::vector<std::size_t> all = split.established;
    all.insert(all.end(), split.other.begin(), split.other.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  }
}

TEST(ProcedureSplit, DeterministicAndRangeChecked) {
  const auto reg = default_registry();
  Rng a(77), b(77);
  EXPECT_EQ(initial_procedure_split(*reg, a, 4), initial_procedure_split(*reg, b, 4));
  Rng c(1);
  EXPECT_THROW(initial_procedure_split(*reg, c, 12), Error);
}

TEST(DetectionMatches, PublishedExampleGame) {
  const auto reg = default_registry();
  const auto scenario = testing::published_setup(*reg).scenario;
  auto server = detection_matches(*reg, "server_analysis", scenario, {false, false, false, false});
  ASSERT_FALSE(server.empty());
  EXPECT_NE(std::find(server.begin(), server.end(), reg->attack_index("p.application_shimming")), server.end());

  auto ueba = detection_matches(*reg, "ueba", scenario, {false, false, true, true});
  EXPECT_NE(std::find(ueba.begin(), ueba.end(), reg->attack_index("pe.credential_stuffing")), ueba.end());
}

TEST(DetectionMatches, NeverReturnsRevealedAndKeepsStageOrder) {
  const auto reg = default_registry();
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto scenario = draw_attack_scenario(*reg, rng);
    std::array<bool, 4> revealed{};
    for (auto& r : revealed) r = rng.uniform_below(2) == 1;
    for (const auto& proc : reg->procedures()) {
      const auto m = detection_matches(*reg, proc.id, scenario, revealed);
      for (std::size_t k = 0; k < m.size(); ++k) {
        const auto pos = std::find(scenario.cards.begin(), scenario.cards.end(), m[k]) - scenario.cards.begin();
        EXPECT_FALSE(revealed[static_cast<std::size_t>(pos)]);
        if (k > 0) EXPECT_LT(reg->attack_cards()[m[k - 1]].stage, reg->attack_cards()[m[k]].stage);
      }
    }
  }
}

TEST(DetectionMatches, AllRevealedGivesEmpty) {
  const auto reg = default_registry();
  const auto scenario = testing::published_setup(*reg).scenario;
  EXPECT_TRUE(detection_matches(*reg, "memory_analysis", scenario, {true, true, true, true}).empty());
}

TEST(DetectionMatches, UnknownProcedureThrows) {
  const auto reg = default_registry();
  EXPECT_THROW(detection_matches(*reg, "astrology", Scenario{}, {}), UnknownProcedure);
}

}  // namespace
}  // namespace bnb
