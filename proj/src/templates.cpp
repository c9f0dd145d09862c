#include "relforge/templates.hpp"

#include <cctype>
#include <fstream>

#include "json.hpp"
#include "relforge/errors.hpp"

namespace relforge {

namespace {

const char* kDescSystem =
    "You are an assistant that compares annotated images and writes factual, "
    "grounded relation descriptions. Copy every <patch_index_N> and <imgN> token "
    "from the annotations into your answer verbatim.";

const char* kDialogSystem =
    "You are an assistant that turns a relation description into a single "
    "question-and-answer exchange. Reply with the question on one line starting "
    "with 'Q:' and the answer on the following lines starting with 'A:'. The "
    "answer must contain the given description verbatim, including every "
    "<patch_index_N> and <imgN> token.";

void require_slot(const PromptTemplate& tpl, const std::string& slot) {
  if (tpl.user_text.find("{" + slot + "}") == std::string::npos)
    throw ConfigError("template " + tpl.template_id + " is missing the {" + slot +
                      "} slot");
}

PromptTemplate make(Family family, Stage stage, std::string id, std::string system_text,
                    std::string user_text) {
  PromptTemplate tpl;
  tpl.family = family;
  tpl.stage = stage;
  tpl.template_id = std::move(id);
  tpl.system_text = std::move(system_text);
  tpl.user_text = std::move(user_text);
  return tpl;
}

}  // namespace

const char* to_string(Stage stage) {
  return stage == Stage::desc ? "desc" : "dialog";
}

Stage stage_from_string(const std::string& name) {
  if (name == "desc") return Stage::desc;
  if (name == "dialog") return Stage::dialog;
  throw ConfigError("unknown template stage: " + name);
}

std::string fill_template(const std::string& text,
                          const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    char c = text[pos];
    if (c != '{') {
      out += c;
      ++pos;
      continue;
    }
    auto close = text.find('}', pos + 1);
    if (close == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    std::string name = text.substr(pos + 1, close - pos - 1);
    bool slot_like = !name.empty();
    for (char nc : name)
      if (!(std::islower(static_cast<unsigned char>(nc)) || nc == '_')) slot_like = false;
    if (!slot_like) {
      out += c;
      ++pos;
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) throw ConfigError("unknown template slot: {" + name + "}");
    out += it->second;
    pos = close + 1;
  }
  return out;
}

void TemplateStore::add(PromptTemplate tpl) {
  if (tpl.template_id.empty()) throw ConfigError("template_id must not be empty");
  if (tpl.stage == Stage::desc) {
    require_slot(tpl, "enc_a");
  } else {
    require_slot(tpl, "prior_desc");
  }
  for (const auto& existing : templates_)
    if (existing.family == tpl.family && existing.stage == tpl.stage)
      throw ConfigError("duplicate template for " + std::string(to_string(tpl.family)) +
                        "/" + to_string(tpl.stage));
  templates_.push_back(std::move(tpl));
}

const PromptTemplate& TemplateStore::get(Family family, Stage stage) const {
  for (const auto& tpl : templates_)
    if (tpl.family == family && tpl.stage == stage) return tpl;
  throw ConfigError("no template for " + std::string(to_string(family)) + "/" +
                    to_string(stage));
}

TemplateStore TemplateStore::builtin() {
  TemplateStore store;
  store.add(make(
      Family::similarity, Stage::desc, "similarity-desc-v1", kDescSystem,
      "The first image is annotated as: {enc_a}\n"
      "The second image is annotated as: {enc_b}\n"
      "Identify the similarities between the two images based on identical "
      "attributes and objects, under the relation '{relation_name}'. Write a short "
      "paragraph that lists the common elements and keeps all location tokens."));
  store.add(make(
      Family::contrast, Stage::desc, "contrast-desc-v1", kDescSystem,
      "The first image is annotated as: {enc_a}\n"
      "The second image is annotated as: {enc_b}\n"
      "Describe the main differences between the two annotated subjects, under the "
      "relation '{relation_name}'. Mention shared attributes briefly, then the "
      "differences, and keep all location tokens."));
  store.add(make(
      Family::temporal, Stage::desc, "temporal-desc-v1", kDescSystem,
      "The following frames of one video are annotated in chronological order: "
      "{enc_a}\n{enc_b}\n"
      "Write a chronological account of what happens across the frames for the "
      "relation '{relation_name}', keeping every frame reference token."));
  store.add(make(
      Family::geometric, Stage::desc, "geometric-desc-v1", kDescSystem,
      "The first image is annotated as: {enc_a}\n"
      "The second image shows the same scene after one transformation: {enc_b}\n"
      "Describe how the object has been transformed between the two images for the "
      "relation '{relation_name}', keeping all location tokens."));
  store.add(make(
      Family::similarity, Stage::dialog, "similarity-dialog-v1", kDialogSystem,
      "Description of what the two pictures share:\n{prior_desc}\n"
      "Write one question asking what common elements or objects are found in both "
      "pictures, and answer it using the description verbatim."));
  store.add(make(
      Family::contrast, Stage::dialog, "contrast-dialog-v1", kDialogSystem,
      "Description of how the two subjects compare:\n{prior_desc}\n"
      "Write one question asking whether the two images show the same subject, and "
      "answer it with a clear yes or no verdict that embeds the description "
      "verbatim and ends by restating the conclusion."));
  store.add(make(
      Family::temporal, Stage::dialog, "temporal-dialog-v1", kDialogSystem,
      "Chronological description of the video frames:\n{prior_desc}\n"
      "Write one question asking what the video is about, and answer it using the "
      "description verbatim."));
  store.add(make(
      Family::geometric, Stage::dialog, "geometric-dialog-v1", kDialogSystem,
      "Description of a geometric transformation between two images:\n{prior_desc}\n"
      "Write one question asking how the object has transformed from the first "
      "image to the second image, and answer it using the description verbatim."));
  return store;
}

TemplateStore TemplateStore::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open template file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path, "", std::string("bad JSON: ") + e.what());
  }
  if (!doc.is_array()) throw SchemaError(path, "", "template file must be a JSON array");
  TemplateStore store;
  for (const auto& entry : doc) {
    for (auto& [key, value] : entry.items()) {
      (void)value;
      if (key != "template_id" && key != "family" && key != "stage" &&
          key != "system" && key != "user")
        throw SchemaError(path, key, "unknown template field");
    }
    try {
      PromptTemplate tpl;
      tpl.template_id = entry.at("template_id").get<std::string>();
      tpl.family = family_from_string(entry.at("family").get<std::string>());
      tpl.stage = stage_from_string(entry.at("stage").get<std::string>());
      tpl.system_text = entry.at("system").get<std::string>();
      tpl.user_text = entry.at("user").get<std::string>();
      store.add(std::move(tpl));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path, "template", e.what());
    }
  }
  return store;
}

std::string judge_prompt(const std::string& reference, const std::string& candidate) {
  return "You are grading how well a candidate answer captures the relation "
         "between two images.\n"
         "Reference relation facts:\n" +
         reference +
         "\nCandidate answer:\n" + candidate +
         "\nScore the candidate from 1 to 5: 5 means the relation is fully correct "
         "with accurate grounding, 3 means partially correct, 1 means wrong or "
         "contradictory. Reply with the integer score first, then one sentence of "
         "justification.";
}

}  // namespace relforge
