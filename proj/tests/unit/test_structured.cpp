#include <gtest/gtest.h>

#include "radrag/error.hpp"
#include "radrag/structured.hpp"
#include "test_support.hpp"

namespace radrag {
namespace {

using testing::fixture;
using testing::read_text;

class Structured : public ::testing::Test {
 protected:
  VocabLists vocab = VocabLists::load(fixture("vocab.json"));
  std::string table8 = read_text(fixture("structured_output.json"));
};

template <typename Fn>
const Error caught(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected radrag::Error";
  return Error(ErrorCode::InvalidArgument, "none");
}

TEST_F(Structured, Table8ParsesIntoTwoTuples) {
  const auto s = parse_structured(table8, vocab);
  ASSERT_EQ(s.attributes.size(), 2u);
  EXPECT_EQ(s.attributes[0], (AttributeTuple{"atelectasis", "bilateral, base", "severe", ""}));
  EXPECT_EQ(s.attributes[1], (AttributeTuple{"pleural effusions", "bilateral", "", "small to moderate"}));
  EXPECT_EQ(s.impression.rfind("The Swan-Ganz catheter", 0), 0u);
}

TEST_F(Structured, SerializeRoundTrip) {
  const auto s = parse_structured(table8, vocab);
  EXPECT_EQ(parse_structured(serialize(s), vocab), s);
}

TEST_F(Structured, SurroundingTextIsIgnored) {
  const auto s = parse_structured("Sure, here it is:\n" + table8 + "\nThanks {bye}", vocab);
  EXPECT_EQ(s.attributes.size(), 2u);
}

TEST_F(Structured, MissingPathology) {
  const auto e = caught([&] {
    parse_structured(R"({"impression":"x","attributes":[{"positional":"left"}]})", vocab);
  });
  EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
  EXPECT_EQ(e.detail(), "pathology");
}

TEST_F(Structured, OutOfVocabTerm) {
  auto e = caught([&] {
    parse_structured(R"({"impression":"x","attributes":[{"pathology":"edema","severity":"extreme"}]})", vocab);
  });
  EXPECT_EQ(e.code(), ErrorCode::VocabViolation);
  EXPECT_EQ(e.detail(), "extreme");
  e = caught([&] { parse_structured(R"({"impression":"x","attributes":[{"pathology":"fracture"}]})", vocab); });
  EXPECT_EQ(e.code(), ErrorCode::VocabViolation);
  EXPECT_EQ(e.detail(), "fracture");
}

TEST_F(Structured, MalformedJson) {
  EXPECT_EQ(caught([&] { parse_structured("no braces at all", vocab); }).code(), ErrorCode::NotJson);
  EXPECT_EQ(caught([&] { parse_structured(R"({"impression": "x" "attributes": []})", vocab); }).code(),
            ErrorCode::NotJson);
  EXPECT_EQ(caught([&] { parse_structured(R"({"impression": "unterminated)", vocab); }).code(),
            ErrorCode::NotJson);
}

TEST_F(Structured, CaseInsensitiveVocabulary) {
  const auto s = parse_structured(
      R"({"impression":"x","attributes":[{"pathology":"Edema","positional":"Right suprahilar"}]})", vocab);
  EXPECT_EQ(s.attributes[0].positional, "Right suprahilar");
}

TEST(ExtractJson, BracesInsideStrings) {
  EXPECT_EQ(extract_json_object(R"(pre {"a":"}{","b":{"c":1}} post)"), R"({"a":"}{","b":{"c":1}})");
}

TEST(Vocab, Validation) {
  VocabLists v{{"edema"}, {"left"}, {"mild"}, {"small"}};
  EXPECT_NO_THROW(v.validate());
  auto empty = v;
  empty.severity.clear();
  EXPECT_EQ(caught([&] { empty.validate(); }).code(), ErrorCode::MissingVocab);
  auto upper = v;
  upper.pathology.push_back("Edema");
  EXPECT_EQ(caught([&] { upper.validate(); }).code(), ErrorCode::InvalidArgument);
  auto dup = v;
  dup.positional.push_back("left");
  EXPECT_EQ(caught([&] { dup.validate(); }).code(), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace radrag
