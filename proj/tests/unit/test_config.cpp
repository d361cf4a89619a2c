#include <gtest/gtest.h>

#include "scg/config.hpp"

using namespace scg;

namespace {

std::string what_of(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

} // namespace

TEST(Config, EmptyDocumentTakesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.train.model.modules, 8);
  EXPECT_EQ(c.train.total_steps, 8000);
  EXPECT_EQ(c.train.objective.sym_sign, SymSign::neg);
  EXPECT_EQ(c.train.weight_decay, 0.01);
  ASSERT_EQ(c.groups.size(), 4u);
  EXPECT_EQ(c.groups[1].name, "HC1");
  EXPECT_EQ(c.groups[1].modules, (std::vector<Index>{2, 3}));
}

TEST(Config, DefaultGroupsOddCount) {
  const auto g = default_groups(5);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g[2].modules, (std::vector<Index>{4}));
}

TEST(Config, UnknownKeysNameTheirPath) {
  EXPECT_NE(what_of("model:\n  modulez: 3\n").find("model.modulez"), std::string::npos);
  EXPECT_NE(what_of("trian:\n  seed: 1\n").find("'trian'"), std::string::npos);
  EXPECT_NE(what_of("groups:\n  - name: a\n    modules: [0]\n    extra: 1\n").find("extra"),
            std::string::npos);
}

TEST(Config, BadValuesAreConfigErrors) {
  EXPECT_THROW(parse_config("objective:\n  sym_sign: sideways\n"), ConfigError);
  EXPECT_THROW(parse_config("train:\n  batch_size: many\n"), ConfigError);
  EXPECT_THROW(parse_config("groups:\n  - name: a\n    modules: [0, 9]\n"), ConfigError);
  EXPECT_THROW(parse_config("model: [1, 2]\n"), ConfigError);
  EXPECT_THROW(parse_config("a: [\n"), ConfigError);
}

TEST(Config, OverridesLand) {
  const RunConfig c = parse_config(R"(
model:
  modules: 4
  constraint_variant: per_kernel_trans_plus_module_transrot
objective:
  lambda1: 0
  sym_sign: pos
train:
  seed: 7
groups:
  - name: left
    modules: [0, 1, 2]
output:
  dir: runs/x
)");
  EXPECT_EQ(c.train.model.modules, 4);
  EXPECT_EQ(c.train.model.variant, ConstraintVariant::per_kernel_trans_plus_module_transrot);
  EXPECT_EQ(c.train.objective.lambda1, 0.0);
  EXPECT_EQ(c.train.objective.sym_sign, SymSign::pos);
  EXPECT_EQ(c.train.seed, 7u);
  ASSERT_EQ(c.groups.size(), 1u);
  EXPECT_EQ(c.groups[0].name, "left");
  EXPECT_EQ(c.output_dir, "runs/x");
}

TEST(Config, EmitParseIsAFixedPoint) {
  RunConfig c = parse_config("objective:\n  temperature: 0.123456789012345\n");
  c.train.lr0 = 1.0 / 3.0;
  c.data.cifar_train = {"a b.bin", "q\"uote.bin"};
  c.groups = {{"x", {1}}, {"y", {0, 2}}};
  const std::string text = emit_config(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(emit_config(back), text);
  EXPECT_EQ(back.train.lr0, 1.0 / 3.0);
  EXPECT_EQ(back.train.objective.temperature, 0.123456789012345);
  EXPECT_EQ(back.data.cifar_train, c.data.cifar_train);
  EXPECT_EQ(canonical_text(back.train), canonical_text(c.train));
}
