#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "headstrain/config.hpp"
#include "headstrain/error.hpp"
#include "headstrain/rng.hpp"

using namespace headstrain;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "source": {"synth": {}},
    "targets": [{"name": "field", "synth": {"channel_gain": [1.1, 0.9, 1.1]}}],
    "methods": ["drca"]
  })");
}

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, MinimalFillsDefaults) {
  const PipelineConfig c = parse_config(minimal());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.source.n, 2000u);
  EXPECT_EQ(c.source.name, "source");
  ASSERT_EQ(c.targets.size(), 1u);
  EXPECT_EQ(c.targets[0].n, 300u);
  EXPECT_EQ(c.targets[0].synth->channel_gain[0], 1.1);
  EXPECT_EQ(c.methods, (std::vector<std::string>{"baseline", "drca"}));
  EXPECT_EQ(c.drca.dim, DrcaConfig{}.dim);
  EXPECT_EQ(c.hidden, MlhmArch::desk(1, 1).hidden);
  EXPECT_EQ(c.schema, "default");
  EXPECT_TRUE(c.has_method("baseline"));
  EXPECT_FALSE(c.has_method("cyclegan"));
}

TEST(Config, SeedsDeriveFromGlobalSeed) {
  json j = minimal();
  j["seed"] = 5;
  const PipelineConfig c = parse_config(j);
  EXPECT_EQ(c.label_seed, mix_seed(5, 7));
  EXPECT_EQ(c.train.seed, mix_seed(5, 8));
  EXPECT_EQ(c.gan.seed, mix_seed(5, 9));
  EXPECT_EQ(c.source.synth->seed, mix_seed(5, 100));
  EXPECT_EQ(c.targets[0].synth->seed, mix_seed(5, 200));
  const PipelineConfig o = parse_config(j, 6);
  EXPECT_EQ(o.seed, 6u);
  EXPECT_EQ(o.train.seed, mix_seed(6, 8));
  j["train"] = {{"seed", 42}};
  EXPECT_EQ(parse_config(j).train.seed, 42u);
}

TEST(Config, UnknownKeySuggestsClosest) {
  json j = minimal();
  j["dcra"] = json::object();
  const std::string msg = config_error(j);
  EXPECT_NE(msg.find("unknown key 'dcra'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("did you mean 'drca'"), std::string::npos) << msg;

  j = minimal();
  j["gan"] = {{"epoch", 3}};
  const std::string nested = config_error(j);
  EXPECT_NE(nested.find("config.gan"), std::string::npos) << nested;
  EXPECT_NE(nested.find("'epochs'"), std::string::npos) << nested;
}

TEST(Config, InvalidValuesNameTheirPath) {
  json j = minimal();
  j["targets"][0]["synth"]["channel_gain"] = {1.0, 2.0};
  EXPECT_NE(config_error(j).find("config.targets[0].synth.channel_gain"), std::string::npos);
  j = minimal();
  j["drca"] = {{"alpha", "high"}};
  EXPECT_NE(config_error(j).find("config.drca.alpha"), std::string::npos);
  j = minimal();
  j["train"] = {{"epochs", -3}};
  EXPECT_NE(config_error(j).find("config.train.epochs"), std::string::npos);
  j = minimal();
  j["methods"] = {"drca", "gan-drca"};
  EXPECT_NE(config_error(j).find("gan-drca"), std::string::npos);
}

TEST(Config, StructuralValidation) {
  json j = minimal();
  j.erase("targets");
  EXPECT_NE(config_error(j).find("target"), std::string::npos);
  j = minimal();
  j["targets"].push_back(j["targets"][0]);
  EXPECT_NE(config_error(j).find("field"), std::string::npos);
  j = minimal();
  j["source"] = {{"synth", json::object()}, {"path", "x"}};
  EXPECT_NE(config_error(j).find("either"), std::string::npos);
  j = minimal();
  j["source"]["n"] = 5;
  EXPECT_FALSE(config_error(j).empty());
}

TEST(Config, MethodListsAndArch) {
  EXPECT_EQ(parse_method_list("drca,cyclegan"), (std::vector<std::string>{"baseline", "drca", "cyclegan"}));
  EXPECT_EQ(parse_method_list("baseline,drca,drca"), (std::vector<std::string>{"baseline", "drca"}));
  EXPECT_THROW(parse_method_list("drca,pca"), ConfigError);
  json j = minimal();
  j["methods"] = "shiftgan, gan+drca";
  EXPECT_EQ(parse_config(j).methods, (std::vector<std::string>{"baseline", "shiftgan", "gan+drca"}));
  j["arch"] = "large";
  EXPECT_EQ(parse_config(j).hidden, MlhmArch::large(1, 1).hidden);
  j["arch"] = {{"hidden", {{{"width", 12}, {"activation", "relu"}, {"dropout", 0.2}}}}};
  const auto hidden = parse_config(j).hidden;
  ASSERT_EQ(hidden.size(), 1u);
  EXPECT_EQ(hidden[0].width, 12u);
  EXPECT_EQ(hidden[0].dropout, 0.2);
}

TEST(Config, ResolvedConfigRoundTrips) {
  json j = minimal();
  j["seed"] = 11;
  j["holdout"] = {{{"name", "later"}, {"n", 50}, {"synth", {{"frequency_shift", 3.0}}}}};
  j["kmm"] = {{"bandwidth", 0.7}};
  j["gan"] = {{"norm", "l1"}, {"epochs", 7}};
  j["thresholds"] = {{"mps", 0.35}};
  const PipelineConfig c = parse_config(j);
  const PipelineConfig back = parse_config(to_json(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(to_json(back), to_json(c));
  const PipelineConfig d = parse_config(minimal());
  EXPECT_TRUE(parse_config(to_json(d)) == d);
}

TEST(EditDistance, Basics) {
  EXPECT_EQ(edit_distance("dcra", "drca"), 2u);
  EXPECT_EQ(edit_distance("", "abc"), 3u);
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(edit_distance("same", "same"), 0u);
}
