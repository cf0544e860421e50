#pragma once

// Versioned prompt assets. The built-in pack is also shipped as
// data/prompt_pack.json; a pack file may override any subset of fields.
//
// Slots: {g} meta-category, {g_plural} its plural, {attributes} per-image
// attribute summary, {answers} one "- answer" line per VQA reply,
// {m} sentence count, {classname} candidate class name.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/error.hpp"
#include "vfr/text_util.hpp"

namespace vfr {

struct PromptPack {
  std::string version = "1";

  std::string meta_question =
      "What type of object is the main subject of this image? Answer with one general noun.";

  std::vector<std::string> attribute_questions = {
      "What is the main color of the {g} in this image? Answer in the form 'color: <value>'.",
      "What is the shape of the {g} in this image? Answer in the form 'shape: <value>'.",
      "How large is the {g} in this image compared to the frame? Answer in the form 'size: <value>'.",
      "What distinctive parts does the {g} in this image have? Answer in the form "
      "'distinctive parts: <value>'.",
      "What is the background behind the {g} in this image? Answer in the form "
      "'background: <value>'.",
  };

  std::string name_reasoning_template =
      "I am analysing a small set of unlabelled images.\n"
      "Meta-category: {g}\n"
      "Observed visual attributes per image:\n"
      "{attributes}\n"
      "List the fine-grained {g} categories that are most likely shown in these images. "
      "Return output in the following structure as a single line: "
      "[\"<class_name_1>\", \"<class_name_2>\", ..., \"<class_name_n>\"]";

  std::string consolidation_template =
      "Several observers described the main subject of a set of images as:\n"
      "{answers}\n"
      "Reply with one general noun that best covers all of them.";

  std::string repair_instruction = "Return only the bracketed list.";

  // Paragraph breaks follow the original template; its hard line wraps are
  // joined with single spaces.
  std::string context_template =
      "Generate {m} short and common sentences with noun {classname}, a type of {g}, as a main "
      "subject.\n\n"
      "This noun should only be used in a realistic and descriptive general context with various "
      "real and related scenarios. In the sentence, highlight something specific about the "
      "{classname}, a type of {g}, which helps to distinct it from other {g_plural} (it can be its "
      "color, shape, size, background, and so on).\n\n"
      "Only use the main and original sense of this noun, no idioms. Only use visually descriptive "
      "adjectives or participles. Each sentence should be between 5 to 8 words (excluding the "
      "noun). Do not use the possessive form. Do not add an article at the beginning of the "
      "sentence. Do not repeat the noun in the same sentence. Do not capitalize the first letter "
      "of the sentence unless this is a name. Do not add a dot at the end of sentence. Make sure "
      "sentences are diverse and do not repeat each other.\n\n"
      "Make sure the noun is included in each sentence. Make sure the sentences are between 5 to "
      "8 words each.\n\n"
      "Return output in the following structure as a single line: [\"<generated_sentence_1>\", "
      "\"<generated_sentence_2>\", ..., \"<generated_sentence_n>\"]";

  static PromptPack from_json(const nlohmann::json& j) {
    PromptPack p;
    auto take = [&](const char* key, std::string& field) {
      if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    take("version", p.version);
    take("meta_question", p.meta_question);
    take("name_reasoning_template", p.name_reasoning_template);
    take("consolidation_template", p.consolidation_template);
    take("repair_instruction", p.repair_instruction);
    take("context_template", p.context_template);
    if (j.contains("attribute_questions")) {
      p.attribute_questions = j.at("attribute_questions").get<std::vector<std::string>>();
    }
    require(!p.meta_question.empty() && !p.attribute_questions.empty(), ErrorCode::InvalidConfig,
            "prompt pack needs meta_question and attribute_questions");
    return p;
  }

  static PromptPack load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::IoError, "cannot open prompt pack " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "prompt pack " + path.string() + ": " + e.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"version", version},
            {"meta_question", meta_question},
            {"attribute_questions", attribute_questions},
            {"name_reasoning_template", name_reasoning_template},
            {"consolidation_template", consolidation_template},
            {"repair_instruction", repair_instruction},
            {"context_template", context_template}};
  }
};

inline std::string fill_category(std::string tmpl, const std::string& g) {
  tmpl = text::replace_all(std::move(tmpl), "{g_plural}", text::pluralize(g));
  return text::replace_all(std::move(tmpl), "{g}", g);
}

}  // namespace vfr
