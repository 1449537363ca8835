#include "radrag/structured.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

namespace radrag {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

void validate_list(const std::vector<std::string>& terms, const char* name) {
  if (terms.empty()) throw Error(ErrorCode::MissingVocab, std::string(name) + " list is empty", name);
  std::set<std::string> seen;
  for (const auto& t : terms) {
    if (trim(t).empty()) throw Error(ErrorCode::InvalidArgument, std::string(name) + " has a blank term", name);
    if (lower(t) != t) throw Error(ErrorCode::InvalidArgument, "vocab term '" + t + "' is not lowercase", t);
    if (!seen.insert(t).second) throw Error(ErrorCode::InvalidArgument, "duplicate vocab term '" + t + "'", t);
  }
}

std::vector<std::string> json_terms(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::MissingVocab, std::string("vocab has no '") + key + "' list", key);
  if (!it->is_array()) throw Error(ErrorCode::FormatError, std::string("vocab '") + key + "' must be an array", key);
  return it->get<std::vector<std::string>>();
}

bool in_vocab(const std::vector<std::string>& terms, const std::string& term) {
  return std::find(terms.begin(), terms.end(), term) != terms.end();
}

// Accepts "a", "a, b" and "a to b" forms; each component must be a vocab term.
void check_terms(const std::string& value, const std::vector<std::string>& terms) {
  if (value.empty()) return;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const std::string part = lower(trim(value.substr(start, comma - start)));
    if (!part.empty() && !in_vocab(terms, part)) {
      const auto to = part.find(" to ");
      const bool range_ok = to != std::string::npos &&
                            in_vocab(terms, trim(part.substr(0, to))) &&
                            in_vocab(terms, trim(part.substr(to + 4)));
      if (!range_ok) throw Error(ErrorCode::VocabViolation, "term '" + part + "' is not in vocabulary", part);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
}

std::string string_field(const json& obj, const char* key, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw Error(ErrorCode::SchemaViolation, std::string("missing '") + key + "'", key);
    return {};
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::SchemaViolation, std::string("'") + key + "' must be a string", key);
  }
  return trim(it->get<std::string>());
}

}  // namespace

void VocabLists::validate() const {
  validate_list(pathology, "pathology");
  validate_list(positional, "positional");
  validate_list(severity, "severity");
  validate_list(size, "size");
}

VocabLists VocabLists::from_json(const json& obj) {
  if (!obj.is_object()) throw Error(ErrorCode::FormatError, "vocab must be a JSON object");
  VocabLists v;
  try {
    v.pathology = json_terms(obj, "pathology");
    v.positional = json_terms(obj, "positional");
    v.severity = json_terms(obj, "severity");
    v.size = json_terms(obj, "size");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("vocab: ") + e.what());
  }
  v.validate();
  return v;
}

VocabLists VocabLists::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what(), path.string());
  }
}

std::string_view extract_json_object(std::string_view text) {
  const auto begin = text.find('{');
  if (begin == std::string_view::npos) throw Error(ErrorCode::NotJson, "no JSON object in text");
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = begin; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return text.substr(begin, i - begin + 1);
  }
  throw Error(ErrorCode::NotJson, "unbalanced braces in text");
}

StructuredImpression parse_structured(std::string_view text, const VocabLists& vocab) {
  const auto body = extract_json_object(text);
  json obj;
  try {
    obj = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::NotJson, e.what());
  }

  StructuredImpression out;
  out.impression = string_field(obj, "impression", true);

  const json* tuples = nullptr;
  if (auto it = obj.find("attributes"); it != obj.end()) tuples = &*it;
  else if (auto f = obj.find("findings"); f != obj.end()) tuples = &*f;
  if (!tuples || !tuples->is_array()) {
    throw Error(ErrorCode::SchemaViolation, "'attributes' must be an array", "attributes");
  }

  for (const auto& item : *tuples) {
    if (!item.is_object()) {
      throw Error(ErrorCode::SchemaViolation, "attribute entries must be objects", "attributes");
    }
    AttributeTuple t;
    t.pathology = string_field(item, "pathology", true);
    if (t.pathology.empty()) throw Error(ErrorCode::SchemaViolation, "empty 'pathology'", "pathology");
    t.positional = string_field(item, "positional", false);
    t.severity = string_field(item, "severity", false);
    t.size = string_field(item, "size", false);

    const std::string pathology = lower(t.pathology);
    if (!in_vocab(vocab.pathology, pathology)) {
      throw Error(ErrorCode::VocabViolation, "pathology '" + pathology + "' is not in vocabulary",
                  pathology);
    }
    check_terms(t.positional, vocab.positional);
    check_terms(t.severity, vocab.severity);
    check_terms(t.size, vocab.size);
    out.attributes.push_back(std::move(t));
  }
  return out;
}

std::string serialize(const StructuredImpression& value) {
  json attrs = json::array();
  for (const auto& t : value.attributes) {
    attrs.push_back({{"pathology", t.pathology},
                     {"positional", t.positional},
                     {"severity", t.severity},
                     {"size", t.size}});
  }
  json obj;
  obj["impression"] = value.impression;
  obj["attributes"] = std::move(attrs);
  return obj.dump();
}

}  // namespace radrag
