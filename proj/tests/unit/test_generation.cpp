#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"
#include "radrag/generation.hpp"
#include "test_support.hpp"

namespace radrag {
namespace {

using testing::FailingClient;
using testing::RecordingClient;
using testing::count_occurrences;

std::vector<std::string> sentences(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("Finding number " + std::to_string(i) + " is present.");
  return out;
}

class Generation : public ::testing::Test {
 protected:
  TemplateSet templates = TemplateSet::load_default();
  StubClient concat{StubKind::Concatenate};
  StubClient echo{StubKind::Echo};
};

TEST(Tokens, Estimators) {
  EXPECT_EQ(estimate_tokens("a b c"), 2u);
  EXPECT_EQ(estimate_tokens("a b c", TokenEstimator::Whitespace), 3u);
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("caf\xC3\xA9"), 1u);
  EXPECT_EQ(estimate_tokens("  lead  trail \n", TokenEstimator::Whitespace), 2u);
}

TEST_F(Generation, RefineCallCountEqualsRecordCount) {
  for (std::size_t n = 1; n <= 8; ++n) {
    RecordingClient rec(concat);
    const auto records = sentences(n);
    GenerationConfig config;
    const auto out = refine_generate(records, config, rec, templates);
    EXPECT_EQ(rec.requests().size(), n);
    EXPECT_EQ(out.llm_call_count, n);
    std::size_t pos = 0;
    for (const auto& s : records) {
      const auto at = out.text.find(s, pos);
      ASSERT_NE(at, std::string::npos) << s;
      pos = at + s.size();
    }
  }
}

TEST_F(Generation, SingleRecordChainEqualsSingleShotRequest) {
  for (auto mode : {PromptMode::Chat, PromptMode::Completion}) {
    GenerationConfig config;
    config.mode = mode;
    const auto records = sentences(1);
    RecordingClient rec(echo);
    refine_generate(records, config, rec, templates);
    const auto single = LlmRequest::from_prompt(
        render_zero_shot(records, config.prompt_spec(templates), templates), config.model_name,
        config.temperature, config.max_output_tokens);
    ASSERT_EQ(rec.requests().size(), 1u);
    EXPECT_EQ(rec.requests()[0], single);
    EXPECT_EQ(to_wire(rec.requests()[0]).dump(), to_wire(single).dump());
  }
}

TEST_F(Generation, RefineStepsThreadPreviousImpression) {
  RecordingClient rec(concat);
  const auto records = sentences(3);
  refine_generate(records, GenerationConfig{}, rec, templates);
  const auto reqs = rec.requests();
  EXPECT_NE(reqs[1].user.find("EXISTING IMPRESSION:\n" + records[0]), std::string::npos);
  EXPECT_NE(reqs[2].user.find("NEW CONTEXT:\n" + records[2]), std::string::npos);
}

TEST_F(Generation, MidChainFailureNamesStep) {
  FailingClient failing(concat, 2);
  const auto records = sentences(4);
  try {
    refine_generate(records, GenerationConfig{}, failing, templates);
    FAIL();
  } catch (const LlmUnavailableError& e) {
    ASSERT_TRUE(e.chain_index().has_value());
    EXPECT_EQ(*e.chain_index(), 2u);
  }
}

class Pipeline : public Generation {
 protected:
  Corpus corpus = testing::synthetic_sentence_corpus(200, 3);
  VectorIndex index = build_index(corpus, testing::random_embeddings(200, 16, 21));
  EmbeddingVector query = [] {
    std::mt19937_64 rng(99);
    return testing::random_vector(16, rng);
  }();
};

TEST_F(Pipeline, SingleCallWhenPromptFits) {
  GenerationConfig config;
  RecordingClient rec(echo);
  const auto out = generate(query, index, corpus, config, rec, templates);
  EXPECT_EQ(out.llm_call_count, 1u);
  EXPECT_FALSE(out.refined);
  ASSERT_EQ(out.provenance.size(), 3u);
  const auto expected = index.top_k(normalize(query), 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.provenance[i], expected[i].record_id);
    EXPECT_EQ(out.context[i], corpus.find(expected[i].record_id)->text);
    EXPECT_EQ(count_occurrences(rec.requests()[0].user, out.context[i]), 1u);
  }
  EXPECT_EQ(out.text, out.context[0] + "\n" + out.context[1] + "\n" + out.context[2]);
}

TEST_F(Pipeline, OverBudgetRefinesOrOverflows) {
  GenerationConfig config;
  config.k = 10;
  const auto skeleton = estimate_tokens(
      render_zero_shot_skeleton(config.prompt_spec(templates), templates).combined());
  config.token_budget = skeleton + 5;
  RecordingClient rec(concat);
  const auto out = generate(query, index, corpus, config, rec, templates);
  EXPECT_TRUE(out.refined);
  EXPECT_EQ(out.llm_call_count, 10u);
  EXPECT_EQ(rec.requests().size(), 10u);

  config.refine_enabled = false;
  try {
    generate(query, index, corpus, config, concat, templates);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContextOverflow);
  }
}

TEST_F(Pipeline, ConfigValidation) {
  auto expect_invalid = [&](GenerationConfig c) {
    try {
      c.validate(templates);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  };
  GenerationConfig c;
  c.k = 0;
  expect_invalid(c);
  c = {};
  c.temperature = -0.1;
  expect_invalid(c);
  c = {};
  c.token_budget = 10;
  expect_invalid(c);
  c = {};
  c.maxlen = 0;
  expect_invalid(c);
  EXPECT_NO_THROW(GenerationConfig{}.validate(templates));
}

TEST_F(Pipeline, ConfigJsonRoundTrip) {
  GenerationConfig c;
  c.k = 5;
  c.mode = PromptMode::Completion;
  c.temperature = 0.7;
  c.estimator = TokenEstimator::Whitespace;
  c.instructions = {"Be brief."};
  const auto back = generation_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(generation_config_from_json(nlohmann::json{{"mode", "poetry"}}), Error);
}

TEST_F(Pipeline, BatchKeepsOrderAndCapturesFailures) {
  const auto queries = testing::random_embeddings(20, 16, 5, 100);
  GenerationConfig config;
  const auto ok = generate_batch(queries, index, corpus, config, echo, templates, 4);
  ASSERT_EQ(ok.size(), 20u);
  for (std::size_t i = 0; i < ok.size(); ++i) {
    EXPECT_EQ(ok[i].query_id, 100 + i);
    ASSERT_TRUE(ok[i].impression.has_value()) << ok[i].error;
    EXPECT_EQ(ok[i].impression->text,
              generate(queries.vector(i), index, corpus, config, echo, templates).text);
  }

  FailingClient failing(echo, 0);
  const auto bad = generate_batch(queries, index, corpus, config, failing, templates, 3);
  for (const auto& o : bad) {
    EXPECT_FALSE(o.impression.has_value());
    EXPECT_NE(o.error.find("LlmUnavailable"), std::string::npos);
  }
}

}  // namespace
}  // namespace radrag
