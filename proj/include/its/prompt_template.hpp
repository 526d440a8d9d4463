#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace its {

// Replaces `{name}` for every name in `values` in a single left-to-right
// pass. Substituted text is never rescanned and unknown `{...}` sequences
// (LaTeX braces, for instance) are left untouched.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values);

std::size_t count_placeholder(std::string_view tmpl, std::string_view name);

// Throws its::Error(kConfig) unless `{name}` occurs exactly once.
void require_placeholder_once(std::string_view tmpl, std::string_view name,
                              std::string_view template_label);

// Meta-cognition prompts used to generate personas and domains.
struct PromptTemplateSet {
  std::string similar;         // {query}
  std::string dissimilar;      // {query}
  std::string random_domain;   // {count}
  std::string random_persona;  // {domain}

  void validate() const;
  std::string hash() const;

  // Reads similar.txt, dissimilar.txt, random_domain.txt and random_persona.txt.
  static PromptTemplateSet load(const std::filesystem::path& dir);
  static PromptTemplateSet defaults();

  bool operator==(const PromptTemplateSet&) const = default;
};

inline constexpr std::string_view kDefaultConcatTemplate = "You are {persona}.\n\n{query}";

// File names expected by PromptTemplateSet::load.
inline constexpr std::string_view kTemplateFiles[] = {"similar.txt", "dissimilar.txt",
                                                      "random_domain.txt",
                                                      "random_persona.txt"};

}  // namespace its
