#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace radrag {

/// Allowed attribute vocabulary for structured impressions. Terms are
/// lowercase and unique within each list.
struct VocabLists {
  std::vector<std::string> pathology;
  std::vector<std::string> positional;
  std::vector<std::string> severity;
  std::vector<std::string> size;

  /// Throws MissingVocab(list) for an empty list, InvalidArgument for
  /// duplicate or non-lowercase terms.
  void validate() const;

  static VocabLists from_json(const nlohmann::json& obj);
  static VocabLists load(const std::filesystem::path& path);
};

struct AttributeTuple {
  std::string pathology;
  std::string positional;
  std::string severity;
  std::string size;

  bool operator==(const AttributeTuple&) const = default;
};

struct StructuredImpression {
  std::string impression;
  std::vector<AttributeTuple> attributes;

  bool operator==(const StructuredImpression&) const = default;
};

/// Returns the first balanced `{...}` span of `text`, skipping braces inside
/// JSON strings. Throws NotJson if there is none.
std::string_view extract_json_object(std::string_view text);

/// Parses and validates a structured impression. Attribute tuples may be
/// listed under "attributes" or "findings". Positional, severity and size
/// values may hold several comma-separated terms, and "a to b" ranges.
/// Vocabulary checks are case-insensitive.
StructuredImpression parse_structured(std::string_view text, const VocabLists& vocab);

/// Compact JSON using the "attributes" key.
std::string serialize(const StructuredImpression& value);

}  // namespace radrag
