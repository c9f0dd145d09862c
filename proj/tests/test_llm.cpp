#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/llm_client.hpp"
#include "relforge/orchestrator.hpp"
#include "relforge/templates.hpp"

using namespace relforge;

namespace {

std::string chat_body(const std::string& content) {
  nlohmann::json body;
  body["choices"] = {{{"message", {{"role", "assistant"}, {"content", content}}}}};
  return body.dump();
}

// Local chat endpoint whose handler is swapped per test case.
struct LocalEndpoint {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit LocalEndpoint(httplib::Server::Handler handler) {
    server.Post("/v1/chat/completions", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalEndpoint() {
    server.stop();
    thread.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  }
};

HttpClientConfig local_config(const LocalEndpoint& ep) {
  HttpClientConfig config;
  config.endpoint = ep.url();
  config.api_key = "sk-test";
  config.timeout_sec = 5;
  return config;
}

}  // namespace

TEST_CASE("http client: request wire format and response parsing") {
  std::string seen_body;
  std::string seen_auth;
  LocalEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(chat_body("the reply text"), "application/json");
  });
  auto client = make_http_client(local_config(ep));
  ChatRequest request;
  request.system_text = "You are concise.";
  request.user_text = "Describe the pair.";
  request.temperature = 0.7;
  request.max_tokens = 99;
  ChatResult result = client->complete(request);
  CHECK(result.text == "the reply text");
  CHECK(result.attempts == 1);

  CHECK(seen_auth == "Bearer sk-test");
  nlohmann::json body = nlohmann::json::parse(seen_body);
  CHECK(body["model"] == "gpt-4");  // config default when the request names none
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][0]["content"] == "You are concise.");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "Describe the pair.");
  CHECK(body["temperature"] == 0.7);
  CHECK(body["max_tokens"] == 99);
}

TEST_CASE("http client: empty system text sends a lone user message") {
  std::string seen_body;
  LocalEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(chat_body("ok"), "application/json");
  });
  auto client = make_http_client(local_config(ep));
  ChatRequest request;
  request.user_text = "hello";
  request.model = "tiny";
  client->complete(request);
  nlohmann::json body = nlohmann::json::parse(seen_body);
  REQUIRE(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["model"] == "tiny");  // per-request override
}

TEST_CASE("http client: 5xx responses are retried until success") {
  std::atomic<int> calls{0};
  LocalEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    if (++calls <= 2) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    } else {
      res.set_content(chat_body("finally"), "application/json");
    }
  });
  HttpClientConfig config = local_config(ep);
  config.transport_retries = 2;
  auto client = make_http_client(config);
  ChatResult result = client->complete({.user_text = "hi"});
  CHECK(result.text == "finally");
  CHECK(result.attempts == 3);
  CHECK(calls == 3);
}

TEST_CASE("http client: a 4xx response fails immediately, no retry") {
  std::atomic<int> calls{0};
  LocalEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
    res.set_content("bad key", "text/plain");
  });
  HttpClientConfig config = local_config(ep);
  config.transport_retries = 5;
  auto client = make_http_client(config);
  try {
    client->complete({.user_text = "hi"});
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.status == 401);
  }
  CHECK(calls == 1);
}

TEST_CASE("http client: malformed bodies are retried like transport faults") {
  std::atomic<int> calls{0};
  LocalEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    if (++calls == 1) {
      res.set_content("this is not json", "application/json");
    } else {
      res.set_content(chat_body("recovered"), "application/json");
    }
  });
  auto client = make_http_client(local_config(ep));
  CHECK(client->complete({.user_text = "hi"}).text == "recovered");

  // Exhausting every attempt surfaces ClientError with transport status 0.
  std::atomic<int> always{0};
  LocalEndpoint broken([&](const httplib::Request&, httplib::Response& res) {
    ++always;
    res.status = 500;
  });
  HttpClientConfig config = local_config(broken);
  config.transport_retries = 1;
  auto failing = make_http_client(config);
  try {
    failing->complete({.user_text = "hi"});
    FAIL("expected ClientError");
  } catch (const ClientError& e) {
    CHECK(e.status == 0);
  }
  CHECK(always == 2);  // transport_retries + 1
}

TEST_CASE("http client: in-flight requests respect the concurrency cap") {
  std::atomic<int> in_flight{0};
  std::atomic<int> max_seen{0};
  LocalEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    int now = ++in_flight;
    int prev = max_seen.load();
    while (now > prev && !max_seen.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    --in_flight;
    res.set_content(chat_body("ok"), "application/json");
  });
  HttpClientConfig config = local_config(ep);
  config.max_concurrent = 2;
  auto client = make_http_client(config);
  std::vector<std::thread> callers;
  for (int i = 0; i < 8; ++i) {
    callers.emplace_back([&] { client->complete({.user_text = "go"}); });
  }
  for (auto& t : callers) t.join();
  CHECK(max_seen <= 2);
  CHECK(max_seen >= 1);
}

TEST_CASE("http client: audit log records one line per attempt") {
  namespace fs = std::filesystem;
  fs::path audit = fs::temp_directory_path() / "relforge_audit_test.jsonl";
  fs::remove(audit);
  std::atomic<int> calls{0};
  LocalEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 500;
    } else {
      res.set_content(chat_body("done"), "application/json");
    }
  });
  HttpClientConfig config = local_config(ep);
  config.audit_path = audit.string();
  auto client = make_http_client(config);
  client->complete({.user_text = "audited"});
  std::ifstream in(audit);
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.contains("attempt"));
    CHECK(j.contains("status"));
    CHECK(j.contains("ok"));
    ++rows;
  }
  CHECK(rows == 2);  // the failed attempt and the success
  fs::remove(audit);
}

TEST_CASE("http client config: env wiring and endpoint validation") {
  unsetenv("RELFORGE_LLM_ENDPOINT");
  CHECK_THROWS_AS(http_config_from_env(), ConfigError);
  setenv("RELFORGE_LLM_ENDPOINT", "http://127.0.0.1:1/v1/chat/completions", 1);
  setenv("RELFORGE_LLM_KEY", "sk-abc", 1);
  HttpClientConfig config = http_config_from_env();
  CHECK(config.endpoint == "http://127.0.0.1:1/v1/chat/completions");
  CHECK(config.api_key == "sk-abc");
  unsetenv("RELFORGE_LLM_ENDPOINT");
  unsetenv("RELFORGE_LLM_KEY");

  HttpClientConfig bare;
  bare.endpoint = "not-a-url";
  CHECK_THROWS_AS(make_http_client(bare), ConfigError);
  HttpClientConfig none;
  CHECK_THROWS_AS(make_http_client(none), ConfigError);
}

namespace {

const std::string kEncA =
    "person, ID: 334, male, backpack, backpack bbox on "
    "<patch_index_256> <patch_index_489>.";
const std::string kEncB = "person, ID: 128, female, hat.";

RelationSpec contrast_spec() {
  RelationSpec spec;
  spec.id = "same_id";
  spec.family = Family::contrast;
  return spec;
}

}  // namespace

TEST_CASE("validate_generation: violation taxonomy") {
  auto required = required_tokens_for(kEncA, kEncB);
  CHECK(required == std::set<std::string>{"<patch_index_256>", "<patch_index_489>"});

  auto empty = validate_generation(required, "   \n  ");
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].kind == ViolationKind::EmptyOutput);

  auto bad_grammar = validate_generation(
      {}, "a stray <patch_index_42> token without its partner");
  REQUIRE(bad_grammar.size() == 1);
  CHECK(bad_grammar[0].kind == ViolationKind::GrammarViolation);

  auto missing = validate_generation(required, "no tokens at all here");
  REQUIRE(missing.size() == 2);
  CHECK(missing[0].kind == ViolationKind::MissingToken);
  CHECK(missing[1].kind == ViolationKind::MissingToken);

  auto ok = validate_generation(
      required,
      "The <phrase> backpack </phrase> <img0> <patch_index_256> "
      "<patch_index_489> </img0> stands out.");
  CHECK(ok.empty());
}

TEST_CASE("fallback_describe: contrast partitions attributes and grounds boxes") {
  CHECK(fallback_describe(kEncA, kEncB, contrast_spec(), false) ==
        "The two images appear to show two different people. "
        "Both persons share the following attributes: person. "
        "The main difference between them is that the first person has "
        "ID: 334, male and backpack, while the second person has ID: 128, "
        "female and hat. "
        "Additionally, the <phrase> backpack </phrase> <img0> <patch_index_256> "
        "<patch_index_489> </img0> is visible in the first image.");
}

TEST_CASE("fallback_describe: identical encodings state the lack of differences") {
  std::string text = fallback_describe(kEncA, kEncA, contrast_spec(), true);
  CHECK(text.find("The two images appear to show the same person.") == 0);
  CHECK(text.find("There are no notable differences between them.") !=
        std::string::npos);
  // The same box grounds once per side: first image, then second.
  CHECK(text.find("<img0> <patch_index_256> <patch_index_489> </img0> is visible "
                  "in the first image.") != std::string::npos);
  CHECK(text.find("<img1> <patch_index_256> <patch_index_489> </img1> is visible "
                  "in the second image.") != std::string::npos);
}

TEST_CASE("fallback_describe: similarity family lists common elements") {
  RelationSpec spec;
  spec.id = "shares";
  spec.family = Family::similarity;
  std::string text = fallback_describe("dog, frisbee, grass.", "frisbee, person.",
                                       spec, true);
  CHECK(text ==
        "The two images share the following common elements: frisbee. "
        "In addition, the first image shows dog and grass, while the second "
        "image shows person.");
  CHECK(fallback_describe("dog.", "cat.", spec, false).find(
            "The two images share no annotated elements.") == 0);
}

TEST_CASE("fallback_describe: temporal and geometric join the encodings") {
  RelationSpec spec;
  spec.family = Family::temporal;
  CHECK(fallback_describe("First half.", "Second half.", spec, true) ==
        "First half. Second half.");
  CHECK(fallback_describe("Only text.", "", spec, true) == "Only text.");
  spec.family = Family::geometric;
  CHECK(fallback_describe("", "The square moved.", spec, true) ==
        "The square moved.");
}

TEST_CASE("fallback_describe: always passes its own validation") {
  const std::string encs[] = {
      kEncA, kEncB, "person, ID: 9.",
      "dog, dog bbox on <patch_index_0> <patch_index_1023>.",
      "cat, cat bbox on <patch_index_33> <patch_index_66>, striped."};
  for (const std::string& a : encs) {
    for (const std::string& b : encs) {
      for (Family family : {Family::contrast, Family::similarity}) {
        RelationSpec spec;
        spec.family = family;
        std::string text = fallback_describe(a, b, spec, false);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(validate_generation(required_tokens_for(a, b), text).empty());
      }
    }
  }
}

TEST_CASE("fallback_dialog: family-specific questions wrap the description") {
  RelationSpec spec = contrast_spec();
  DialogTurns no = fallback_dialog("DESC.", spec, false);
  CHECK(no.question == "Are the two people in the two images the same person?");
  CHECK(no.answer ==
        "No, they are not the same person. DESC. Therefore, based on these "
        "differences, it can be concluded that these two people are not the "
        "same person.");
  DialogTurns yes = fallback_dialog("DESC.", spec, true);
  CHECK(yes.answer ==
        "Yes, they are the same person. DESC. Therefore, based on these "
        "consistent attributes, it can be concluded that these two people are "
        "the same person.");
  CHECK(no.generator == "fallback");

  spec.family = Family::similarity;
  DialogTurns sim = fallback_dialog("DESC.", spec, true);
  CHECK(sim.question ==
        "What are the common elements or objects found in both of these pictures?");
  CHECK(sim.answer == "DESC.");
  spec.family = Family::temporal;
  CHECK(fallback_dialog("DESC.", spec, true).question == "What is the video about?");
  spec.family = Family::geometric;
  CHECK(fallback_dialog("DESC.", spec, true).question ==
        "How has the object transformed from the first image to the second image?");
}

namespace {

// Scripted client: returns canned replies in order, repeating the last one.
class StubClient final : public ChatClient {
 public:
  explicit StubClient(std::vector<std::string> replies)
      : replies_(std::move(replies)) {}

  ChatResult complete(const ChatRequest& request) override {
    requests.push_back(request);
    std::size_t i = std::min(calls_, replies_.size() - 1);
    ++calls_;
    return {replies_[i], 1, 0};
  }

  std::vector<ChatRequest> requests;

 private:
  std::vector<std::string> replies_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("orchestrator: valid LLM description is accepted as-is") {
  TemplateStore store = TemplateStore::builtin();
  std::string good =
      "They differ in clothing; note the <phrase> backpack </phrase> <img0> "
      "<patch_index_256> <patch_index_489> </img0> on the first person.";
  StubClient stub({good});
  Orchestrator orch(store, &stub);
  RelationDescription desc =
      orch.generate_description(kEncA, kEncB, contrast_spec(), false);
  CHECK(desc.text == good);
  CHECK(desc.generator == "llm");
  CHECK(desc.attempts == 1);
  CHECK(desc.template_id == "contrast-desc-v1");
  // The prompt embedded both encodings.
  REQUIRE(stub.requests.size() == 1);
  CHECK(stub.requests[0].user_text.find(kEncA) != std::string::npos);
  CHECK(stub.requests[0].user_text.find(kEncB) != std::string::npos);
}

TEST_CASE("orchestrator: persistent violations exhaust retries then fall back") {
  TemplateStore store = TemplateStore::builtin();
  StubClient stub({"reply without the required tokens"});
  OrchestratorOptions options;
  options.retries = 3;
  Orchestrator orch(store, &stub, options);
  RelationDescription desc =
      orch.generate_description(kEncA, kEncB, contrast_spec(), false);
  CHECK(desc.generator == "fallback");
  CHECK(desc.attempts == 3);
  CHECK(stub.requests.size() == 3);
  CHECK(desc.text == fallback_describe(kEncA, kEncB, contrast_spec(), false));
  // A later valid reply is accepted without burning the full budget.
  StubClient recovering(
      {"still missing tokens",
       "Here <phrase> backpack </phrase> <img0> <patch_index_256> "
       "<patch_index_489> </img0> appears."});
  Orchestrator orch2(store, &recovering, options);
  RelationDescription desc2 =
      orch2.generate_description(kEncA, kEncB, contrast_spec(), false);
  CHECK(desc2.generator == "llm");
  CHECK(desc2.attempts == 2);
}

TEST_CASE("orchestrator: offline mode is pure fallback with zero attempts") {
  TemplateStore store = TemplateStore::builtin();
  Orchestrator orch(store, nullptr);
  RelationDescription desc =
      orch.generate_description(kEncA, kEncB, contrast_spec(), false);
  CHECK(desc.generator == "fallback");
  CHECK(desc.attempts == 0);
  CHECK(desc.text == fallback_describe(kEncA, kEncB, contrast_spec(), false));
  DialogTurns turns = orch.generate_dialog(desc, contrast_spec(), false);
  CHECK(turns.generator == "fallback");
  CHECK(turns.template_id == "contrast-dialog-v1");
  CHECK(turns.answer.find(desc.text) != std::string::npos);
}

TEST_CASE("orchestrator: dialog replies must follow Q:/A: and keep the description") {
  TemplateStore store = TemplateStore::builtin();
  RelationDescription desc;
  desc.text = "The pair differs only in headwear.";
  desc.generator = "llm";
  // Well-formed reply embedding the description verbatim.
  StubClient good({"Q: Are these the same person?\nA: No. " + desc.text +
                   " That settles it."});
  Orchestrator orch(store, &good);
  DialogTurns turns = orch.generate_dialog(desc, contrast_spec(), false);
  CHECK(turns.generator == "llm");
  CHECK(turns.question == "Are these the same person?");
  CHECK(turns.answer == "No. " + desc.text + " That settles it.");

  // Paraphrasing the description away forces the fallback.
  StubClient paraphrased({"Q: Same person?\nA: No, the hats differ."});
  Orchestrator orch2(store, &paraphrased);
  DialogTurns fell = orch2.generate_dialog(desc, contrast_spec(), false);
  CHECK(fell.generator == "fallback");
  CHECK(fell.answer.find(desc.text) != std::string::npos);

  // Missing structure entirely also forces the fallback.
  StubClient shapeless({"No, they are different. " + desc.text});
  Orchestrator orch3(store, &shapeless);
  CHECK(orch3.generate_dialog(desc, contrast_spec(), false).generator ==
        "fallback");

  // Grounded tokens in the description must survive into the answer.
  RelationDescription grounded;
  grounded.text = "See <phrase> bag </phrase> <img0> <patch_index_7> "
                  "<patch_index_42> </img0> here.";
  StubClient dropsTokens({"Q: Same?\nA: " + grounded.text,  // keeps tokens: ok
                          "unused"});
  Orchestrator orch4(store, &dropsTokens);
  CHECK(orch4.generate_dialog(grounded, contrast_spec(), false).generator == "llm");
}

TEST_CASE("orchestrator: rejects a retry budget below one") {
  TemplateStore store = TemplateStore::builtin();
  OrchestratorOptions options;
  options.retries = 0;
  CHECK_THROWS_AS(Orchestrator(store, nullptr, options), ConfigError);
}

TEST_CASE("template store: builtin covers every family and stage") {
  TemplateStore store = TemplateStore::builtin();
  CHECK(store.all().size() == 8);
  for (Family family : {Family::similarity, Family::contrast, Family::temporal,
                        Family::geometric}) {
    const PromptTemplate& desc = store.get(family, Stage::desc);
    CHECK(desc.user_text.find("{enc_a}") != std::string::npos);
    const PromptTemplate& dialog = store.get(family, Stage::dialog);
    CHECK(dialog.user_text.find("{prior_desc}") != std::string::npos);
    CHECK(desc.template_id ==
          std::string(to_string(family)) + "-desc-v1");
    CHECK(dialog.template_id ==
          std::string(to_string(family)) + "-dialog-v1");
  }
}

TEST_CASE("template store: slot filling and validation") {
  CHECK(fill_template("A {x} and {y}.", {{"x", "1"}, {"y", "2"}}) == "A 1 and 2.");
  CHECK_THROWS_AS(fill_template("bad {slot}", {{"other", "1"}}), ConfigError);
  // Braces that are not slot-shaped pass through untouched.
  CHECK(fill_template("json {\"k\": 1} stays", {}) == "json {\"k\": 1} stays");

  TemplateStore store;
  PromptTemplate tpl;
  tpl.family = Family::contrast;
  tpl.stage = Stage::desc;
  tpl.template_id = "t1";
  tpl.user_text = "compare {enc_a} with {enc_b}";
  store.add(tpl);
  CHECK_THROWS_AS(store.add(tpl), ConfigError);  // duplicate (family, stage)
  PromptTemplate missing_slot = tpl;
  missing_slot.stage = Stage::dialog;  // dialog requires {prior_desc}
  CHECK_THROWS_AS(store.add(missing_slot), ConfigError);
  PromptTemplate anon = tpl;
  anon.family = Family::temporal;
  anon.template_id.clear();
  CHECK_THROWS_AS(store.add(anon), ConfigError);
  CHECK_THROWS_AS(store.get(Family::temporal, Stage::desc), ConfigError);
}

TEST_CASE("judge_prompt embeds both texts and the scale") {
  std::string prompt = judge_prompt("the reference", "the candidate");
  CHECK(prompt.find("the reference") != std::string::npos);
  CHECK(prompt.find("the candidate") != std::string::npos);
  CHECK(prompt.find("5") != std::string::npos);
}
