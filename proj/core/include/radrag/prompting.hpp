#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "radrag/structured.hpp"

namespace radrag {

enum class PromptMode { Completion, Chat };
enum class TemplateId { ZeroShot, StructuredFewShot, Refine };

std::string_view to_string(PromptMode mode) noexcept;
PromptMode parse_prompt_mode(std::string_view text);

/// Substitutes `{name}` placeholders in one pass; substituted values are
/// never rescanned. A placeholder alone on its line whose value is empty
/// removes the line. Unknown placeholders throw InvalidArgument. Braces
/// that do not enclose an identifier are copied through.
std::string substitute(std::string_view tpl, const std::map<std::string, std::string>& vars);

/// Prompt templates loaded from a directory holding manifest.json and the
/// text files it names. One trailing newline is dropped from each file.
class TemplateSet {
 public:
  static TemplateSet load(const std::filesystem::path& dir);
  /// $RADRAG_TEMPLATE_DIR if set, else the directory configured at build time.
  static TemplateSet load_default();
  static std::filesystem::path default_dir();

  const std::string& get(const std::string& name) const;
  const std::map<std::string, std::string>& versions() const noexcept { return versions_; }
  const std::vector<std::string>& default_instructions(PromptMode mode) const;

 private:
  std::map<std::string, std::string> texts_;
  std::map<std::string, std::string> versions_;
  std::vector<std::string> completion_instructions_;
  std::vector<std::string> chat_instructions_;
};

struct PromptSpec {
  PromptMode mode = PromptMode::Chat;
  std::vector<std::string> instructions;  // Q
  int maxlen = 50;                        // words
  TemplateId template_id = TemplateId::ZeroShot;

  /// Spec with the template set's default instructions for `mode`.
  static PromptSpec with_defaults(const TemplateSet& templates, PromptMode mode, int maxlen = 50,
                                  TemplateId id = TemplateId::ZeroShot);
};

struct RenderedPrompt {
  PromptMode mode = PromptMode::Completion;
  std::string text;    // completion mode
  std::string system;  // chat mode
  std::string user;    // chat mode

  /// Completion text, or system and user separated by a newline.
  std::string combined() const;

  bool operator==(const RenderedPrompt&) const = default;
};

struct FewShotExample {
  std::string context;
  std::string impression_json;
};

/// Reads a JSON array of {context, impression} objects; `impression` may be
/// an object or an already-serialized string.
std::vector<FewShotExample> load_few_shots(const std::filesystem::path& path);

/// Context records joined by single newlines.
std::string join_context(std::span<const std::string> records);

RenderedPrompt render_zero_shot(std::span<const std::string> context, const PromptSpec& spec,
                                const TemplateSet& templates);

RenderedPrompt render_structured(std::span<const std::string> context, const VocabLists& vocab,
                                 std::span<const FewShotExample> shots, const PromptSpec& spec,
                                 const TemplateSet& templates);

RenderedPrompt render_refine(std::string_view prev_impression, std::string_view next_record,
                             const PromptSpec& spec, const TemplateSet& templates);

/// The zero-shot prompt with an empty context block; the floor for any
/// token budget.
RenderedPrompt render_zero_shot_skeleton(const PromptSpec& spec, const TemplateSet& templates);

}  // namespace radrag
