#include "radrag/prompting.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

#ifndef RADRAG_TEMPLATE_DIR
#define RADRAG_TEMPLATE_DIR ""
#endif
#ifndef RADRAG_INSTALLED_TEMPLATE_DIR
#define RADRAG_INSTALLED_TEMPLATE_DIR ""
#endif

namespace radrag {

namespace {

using nlohmann::json;

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += '\n';
    out += "- ";
    out += item;
  }
  return out;
}

std::string comma_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ", ";
    out += item;
  }
  return out;
}

void check_maxlen(const PromptSpec& spec) {
  if (spec.maxlen < 1) throw Error(ErrorCode::InvalidArgument, "maxlen must be at least 1");
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::map<std::string, std::string> instruction_vars(const PromptSpec& spec) {
  return {{"instructions", bullet_list(spec.instructions)},
          {"maxlen", std::to_string(spec.maxlen)}};
}

}  // namespace

std::string_view to_string(PromptMode mode) noexcept {
  return mode == PromptMode::Chat ? "chat" : "completion";
}

PromptMode parse_prompt_mode(std::string_view text) {
  if (text == "chat") return PromptMode::Chat;
  if (text == "completion") return PromptMode::Completion;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt mode '" + std::string(text) + "'",
              std::string(text));
}

std::string substitute(std::string_view tpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tpl.size() * 2);
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] != '{' || i + 1 >= tpl.size() || !ident_start(tpl[i + 1])) {
      out += tpl[i++];
      continue;
    }
    std::size_t j = i + 1;
    while (j < tpl.size() && ident_char(tpl[j])) ++j;
    if (j >= tpl.size() || tpl[j] != '}') {
      out += tpl[i++];
      continue;
    }
    const std::string name(tpl.substr(i + 1, j - i - 1));
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw Error(ErrorCode::InvalidArgument, "template placeholder {" + name + "} has no value", name);
    }
    const bool line_start = i == 0 || tpl[i - 1] == '\n';
    const bool line_end = j + 1 == tpl.size() || tpl[j + 1] == '\n';
    std::size_t next = j + 1;
    if (it->second.empty() && line_start && line_end) {
      if (next < tpl.size()) ++next;                        // drop the newline too
      else if (!out.empty() && out.back() == '\n') out.pop_back();
    } else {
      out += it->second;
    }
    i = next;
  }
  return out;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, manifest_path.string() + ": " + e.what(),
                manifest_path.string());
  }
  TemplateSet set;
  try {
    for (const auto& [name, entry] : manifest.at("templates").items()) {
      std::string text = read_file(dir / entry.at("file").get<std::string>());
      if (!text.empty() && text.back() == '\n') text.pop_back();
      set.texts_[name] = std::move(text);
      set.versions_[name] = entry.at("version").get<std::string>();
    }
    const auto& ins = manifest.at("instructions");
    set.completion_instructions_ = ins.at("completion").get<std::vector<std::string>>();
    set.chat_instructions_ = ins.at("chat").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, manifest_path.string() + ": " + e.what(),
                manifest_path.string());
  }
  return set;
}

std::filesystem::path TemplateSet::default_dir() {
  if (const char* env = std::getenv("RADRAG_TEMPLATE_DIR"); env && *env) return env;
  const std::filesystem::path build_tree = RADRAG_TEMPLATE_DIR;
  if (!build_tree.empty() && std::filesystem::exists(build_tree / "manifest.json")) return build_tree;
  return RADRAG_INSTALLED_TEMPLATE_DIR;
}

TemplateSet TemplateSet::load_default() { return load(default_dir()); }

const std::string& TemplateSet::get(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw Error(ErrorCode::InvalidConfig, "template '" + name + "' not loaded", name);
  return it->second;
}

const std::vector<std::string>& TemplateSet::default_instructions(PromptMode mode) const {
  return mode == PromptMode::Chat ? chat_instructions_ : completion_instructions_;
}

PromptSpec PromptSpec::with_defaults(const TemplateSet& templates, PromptMode mode, int maxlen,
                                     TemplateId id) {
  PromptSpec spec;
  spec.mode = mode;
  spec.instructions = templates.default_instructions(mode);
  spec.maxlen = maxlen;
  spec.template_id = id;
  return spec;
}

std::string RenderedPrompt::combined() const {
  return mode == PromptMode::Completion ? text : system + "\n" + user;
}

std::vector<FewShotExample> load_few_shots(const std::filesystem::path& path) {
  json arr;
  try {
    arr = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what(), path.string());
  }
  if (!arr.is_array()) throw Error(ErrorCode::FormatError, "few-shot file must hold a JSON array");
  std::vector<FewShotExample> shots;
  for (const auto& item : arr) {
    FewShotExample shot;
    shot.context = item.at("context").get<std::string>();
    const auto& imp = item.at("impression");
    shot.impression_json = imp.is_string() ? imp.get<std::string>() : imp.dump();
    shots.push_back(std::move(shot));
  }
  return shots;
}

std::string join_context(std::span<const std::string> records) {
  std::string out;
  for (const auto& r : records) {
    if (!out.empty()) out += '\n';
    out += r;
  }
  return out;
}

RenderedPrompt render_zero_shot(std::span<const std::string> context, const PromptSpec& spec,
                                const TemplateSet& templates) {
  if (context.empty()) throw Error(ErrorCode::EmptyContext, "zero-shot prompt needs context");
  for (const auto& c : context) {
    if (blank(c)) throw Error(ErrorCode::EmptyContext, "context record is blank");
  }
  check_maxlen(spec);
  auto vars = instruction_vars(spec);
  vars["context"] = join_context(context);
  RenderedPrompt out;
  out.mode = spec.mode;
  if (spec.mode == PromptMode::Completion) {
    out.text = substitute(templates.get("zero_shot_completion"), vars);
  } else {
    out.system = substitute(templates.get("zero_shot_chat_system"), vars);
    out.user = substitute(templates.get("zero_shot_chat_user"), vars);
  }
  return out;
}

RenderedPrompt render_zero_shot_skeleton(const PromptSpec& spec, const TemplateSet& templates) {
  check_maxlen(spec);
  auto vars = instruction_vars(spec);
  vars["context"] = "";
  RenderedPrompt out;
  out.mode = spec.mode;
  if (spec.mode == PromptMode::Completion) {
    out.text = substitute(templates.get("zero_shot_completion"), vars);
  } else {
    out.system = substitute(templates.get("zero_shot_chat_system"), vars);
    out.user = substitute(templates.get("zero_shot_chat_user"), vars);
  }
  return out;
}

RenderedPrompt render_structured(std::span<const std::string> context, const VocabLists& vocab,
                                 std::span<const FewShotExample> shots, const PromptSpec& spec,
                                 const TemplateSet& templates) {
  if (shots.empty()) throw Error(ErrorCode::MissingShots, "structured prompt needs at least one example");
  vocab.validate();
  if (context.empty()) throw Error(ErrorCode::EmptyContext, "structured prompt needs context");

  const auto& shot_tpl = templates.get("structured_shot");
  std::string shot_block;
  for (const auto& shot : shots) {
    if (blank(shot.context)) throw Error(ErrorCode::EmptyContext, "few-shot example has blank context");
    parse_structured(shot.impression_json, vocab);
    if (!shot_block.empty()) shot_block += '\n';
    shot_block += substitute(shot_tpl, {{"example_context", shot.context},
                                        {"example_report_json", shot.impression_json}});
  }

  std::map<std::string, std::string> vars = {
      {"pathology", comma_list(vocab.pathology)},
      {"positional_words", comma_list(vocab.positional)},
      {"severity_words", comma_list(vocab.severity)},
      {"size_words", comma_list(vocab.size)},
      {"shots", shot_block},
      {"context", join_context(context)},
  };
  RenderedPrompt out;
  out.mode = spec.mode;
  if (spec.mode == PromptMode::Completion) {
    out.text = substitute(templates.get("structured_completion"), vars);
  } else {
    out.system = substitute(templates.get("structured_chat_system"), vars);
    out.user = substitute(templates.get("structured_chat_user"), vars);
  }
  return out;
}

RenderedPrompt render_refine(std::string_view prev_impression, std::string_view next_record,
                             const PromptSpec& spec, const TemplateSet& templates) {
  if (blank(prev_impression)) throw Error(ErrorCode::EmptyContext, "refine needs a previous impression");
  if (blank(next_record)) throw Error(ErrorCode::EmptyContext, "refine needs a context record");
  check_maxlen(spec);
  auto vars = instruction_vars(spec);
  vars["existing_impression"] = std::string(prev_impression);
  vars["context"] = std::string(next_record);
  RenderedPrompt out;
  out.mode = spec.mode;
  if (spec.mode == PromptMode::Completion) {
    out.text = substitute(templates.get("refine_completion"), vars);
  } else {
    out.system = substitute(templates.get("refine_chat_system"), vars);
    out.user = substitute(templates.get("refine_chat_user"), vars);
  }
  return out;
}

}  // namespace radrag
