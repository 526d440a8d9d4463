#include "its/prompt_template.hpp"

#include "its/error.hpp"
#include "its/util.hpp"
#include "json.hpp"

namespace its {
namespace {

constexpr std::string_view kSimilar =
    "Read the math problem below. Drawing on what you know about how people come to be good "
    "at problems like this one, describe a persona (a person or role) whose background is "
    "closely related to the problem. Reply with the persona only, as a short noun phrase such "
    "as \"a number theorist who enjoys modular arithmetic\".\n"
    "\n"
    "Problem:\n"
    "{query}";

constexpr std::string_view kDissimilar =
    "Read the math problem below. Describe a persona (a person or role) whose background has "
    "nothing to do with the problem or its subject. Reply with the persona only, as a short "
    "noun phrase such as \"a pastry chef running a busy bakery\".\n"
    "\n"
    "Problem:\n"
    "{query}";

constexpr std::string_view kRandomDomain =
    "List {count} distinct domains of human knowledge, work or leisure, as varied as you can "
    "make them. Reply with one domain per line and nothing else.";

constexpr std::string_view kRandomPersona =
    "Describe a persona (a person or role) from the domain of {domain}. Reply with the persona "
    "only, as a short noun phrase such as \"a marine biologist who surveys coral reefs\".";

std::string read_template_file(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (!text.empty() && text.back() == '\r') text.pop_back();
  return text;
}

}  // namespace

std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto name = std::string(tmpl.substr(i + 1, close - i - 1));
        if (auto it = values.find(name); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::size_t count_placeholder(std::string_view tmpl, std::string_view name) {
  const auto needle = "{" + std::string(name) + "}";
  std::size_t count = 0;
  for (auto pos = tmpl.find(needle); pos != std::string_view::npos;
       pos = tmpl.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

void require_placeholder_once(std::string_view tmpl, std::string_view name,
                              std::string_view template_label) {
  const auto n = count_placeholder(tmpl, name);
  if (n != 1) {
    throw Error(ErrorCode::kConfig, std::string(template_label) + " template must contain {" +
                                        std::string(name) + "} exactly once (found " +
                                        std::to_string(n) + ")");
  }
}

void PromptTemplateSet::validate() const {
  require_placeholder_once(similar, "query", "similar");
  require_placeholder_once(dissimilar, "query", "dissimilar");
  require_placeholder_once(random_domain, "count", "random_domain");
  require_placeholder_once(random_persona, "domain", "random_persona");
}

std::string PromptTemplateSet::hash() const {
  const nlohmann::json j = {{"similar", similar},
                            {"dissimilar", dissimilar},
                            {"random_domain", random_domain},
                            {"random_persona", random_persona}};
  return sha256_hex(j.dump());
}

PromptTemplateSet PromptTemplateSet::load(const std::filesystem::path& dir) {
  PromptTemplateSet set;
  set.similar = read_template_file(dir / kTemplateFiles[0]);
  set.dissimilar = read_template_file(dir / kTemplateFiles[1]);
  set.random_domain = read_template_file(dir / kTemplateFiles[2]);
  set.random_persona = read_template_file(dir / kTemplateFiles[3]);
  set.validate();
  return set;
}

PromptTemplateSet PromptTemplateSet::defaults() {
  return {std::string(kSimilar), std::string(kDissimilar), std::string(kRandomDomain),
          std::string(kRandomPersona)};
}

}  // namespace its
