#include <doctest.h>

#include <nlohmann/json.hpp>

#include <set>

#include "fake_server.hpp"
#include "fedit/generation.hpp"
#include "test_util.hpp"

using namespace fedit;

namespace {

Example placeholder_example(const std::string& doc, int n) {
  Example ex;
  ex.document.text = doc;
  ex.instruction = "{The content of question " + std::to_string(n) + "}";
  ex.response = "{The content of answer " + std::to_string(n) + "}";
  return ex;
}

InstructionPair expect_pair(const ParseResult& r) {
  REQUIRE(std::holds_alternative<InstructionPair>(r));
  return std::get<InstructionPair>(r);
}

ParseFailureReason expect_failure(const ParseResult& r) {
  REQUIRE(std::holds_alternative<ParseFailure>(r));
  return std::get<ParseFailure>(r).reason;
}

RetryPolicy fast_retry(std::size_t retries) {
  return {retries, std::chrono::milliseconds(1), 2.0};
}

}  // namespace

TEST_CASE("prompt with placeholder contents matches the golden listing") {
  const auto golden = read_file(std::filesystem::path(FEDIT_SOURCE_DIR) / "tests/golden/fewshot_prompt.txt");
  SelectedExamples selected;
  selected.examples = {placeholder_example("{The content of document 1}", 1),
                       placeholder_example("{The content of document 2}", 2),
                       placeholder_example("{The content document 3}", 3)};
  const Document target{"t", "{The content of the target text}", {}};
  CHECK(render_prompt(selected, target) == golden);
}

TEST_CASE("k=1 prompt has exactly one example block") {
  SelectedExamples selected;
  selected.examples = {placeholder_example("only doc", 1)};
  const auto prompt = render_prompt(selected, Document{"t", "target", {}});
  const std::string expected = std::string(kGenerationInstruction) +
                               "\n\n[document]: only doc\n\n### Response:\n[question]: {The content of question 1}\n"
                               "[answer]: {The content of answer 1}\n\n[document]: target\n\n### Response:\n";
  CHECK(prompt == expected);
}

TEST_CASE("markers inside the target are not escaped") {
  SelectedExamples selected;
  const auto prompt = render_prompt(selected, Document{"t", "text with [question]: inside", {}});
  CHECK(prompt.find("[document]: text with [question]: inside\n\n### Response:\n") != std::string::npos);
}

TEST_CASE("render_prompt is injective in the target") {
  auto rng = seeded_rng(3, "injective");
  SelectedExamples selected;
  selected.examples = {placeholder_example("d1", 1), placeholder_example("d2", 2)};
  std::set<std::string> targets, prompts;
  for (int i = 0; i < 300; ++i) {
    const auto text = random_text(rng, 1 + rng.next_below(6));
    targets.insert(text);
    prompts.insert(render_prompt(selected, Document{"t", text, {}}));
  }
  CHECK(targets.size() == prompts.size());
}

TEST_CASE("mock backend output") {
  // The topic is the first 8 whitespace tokens; this target has only 7.
  MockGenerationBackend mock;
  CHECK(mock.complete_for_target("The sky is blue. It scatters light.") ==
        "[question]: What is the main point of The sky is blue. It scatters light.?\n[answer]: The sky is blue.");
  // A five-word topic window gives the shorter question.
  MockGenerationBackend five(5);
  CHECK(five.complete_for_target("The sky is blue. It scatters light.") ==
        "[question]: What is the main point of The sky is blue. It?\n[answer]: The sky is blue.");
  CHECK(mock.complete_for_target("one two three four five six seven eight nine ten") ==
        "[question]: What is the main point of one two three four five six seven eight?\n"
        "[answer]: one two three four five six seven eight nine ten");
  CHECK(mock.complete_for_target("Really? Yes.") == "[question]: What is the main point of Really? Yes.?\n[answer]: Really?");
}

TEST_CASE("mock backend reads the target out of a rendered prompt") {
  MockGenerationBackend mock;
  SelectedExamples selected;
  selected.examples = {placeholder_example("Example doc. With text.", 1)};
  const Document target{"t", "The sky is blue. It scatters light.", {}};
  GenerationConfig cfg;
  cfg.seed = 42;
  const auto a = generate_pair(target, selected, mock, cfg);
  const auto b = generate_pair(target, selected, mock, cfg);
  CHECK(a == b);
  CHECK(a == mock.complete_for_target(target.text));
}

TEST_CASE("mock output always parses for marker-free targets") {
  MockGenerationBackend mock;
  auto rng = seeded_rng(9, "mock-parses");
  for (int i = 0; i < 500; ++i) {
    std::string text = random_text(rng, 1 + rng.next_below(20));
    if (rng.next_below(2) == 0) text += ". " + random_text(rng, 3) + "!";
    auto pair = expect_pair(parse_completion(mock.complete_for_target(text), "d"));
    CHECK_FALSE(pair.instruction.empty());
    CHECK_FALSE(pair.response.empty());
  }
}

TEST_CASE("parse_completion contract cases") {
  auto p = expect_pair(parse_completion("[question]: A?\n[answer]: B.", "doc-1"));
  CHECK(p.instruction == "A?");
  CHECK(p.response == "B.");
  CHECK(p.source_doc_id == "doc-1");
  CHECK(p.kept);
  CHECK_FALSE(p.reward_score.has_value());

  CHECK(expect_failure(parse_completion("[answer]: B.\n[question]: A?", "d")) == ParseFailureReason::WrongOrder);
  CHECK(expect_failure(parse_completion("[question]: A?\n[answer]:   ", "d")) == ParseFailureReason::EmptyField);
  CHECK(expect_failure(parse_completion("[question]:  \n[answer]: B", "d")) == ParseFailureReason::EmptyField);
  CHECK(expect_failure(parse_completion("[answer]: B", "d")) == ParseFailureReason::MissingQuestion);
  CHECK(expect_failure(parse_completion("[question]: A", "d")) == ParseFailureReason::MissingAnswer);
  CHECK(expect_failure(parse_completion("", "d")) == ParseFailureReason::MissingQuestion);
  CHECK(expect_failure(parse_completion("[question]: A\n[answer]: B\n[answer]: C", "d")) ==
        ParseFailureReason::DuplicateMarker);
  CHECK(expect_failure(parse_completion("[question]: A\n[question]: A2\n[answer]: B", "d")) ==
        ParseFailureReason::DuplicateMarker);

  auto prefixed = expect_pair(parse_completion("Sure, here it is.\n[question]: Why?\n[answer]:Because.\n", "d"));
  CHECK(prefixed.instruction == "Why?");
  CHECK(prefixed.response == "Because.");

  auto failure = std::get<ParseFailure>(parse_completion("nothing", "doc-9"));
  CHECK(failure.source_doc_id == "doc-9");
  CHECK(to_string(ParseFailureReason::WrongOrder) == "WrongOrder");
}

TEST_CASE("parse_completion round-trips formatted pairs") {
  auto rng = seeded_rng(13, "parse-roundtrip");
  for (int i = 0; i < 500; ++i) {
    const auto x = random_text(rng, 1 + rng.next_below(15));
    const auto y = random_text(rng, 1 + rng.next_below(15));
    auto pair = expect_pair(parse_completion("[question]: " + x + "\n[answer]: " + y, "d"));
    CHECK(pair.instruction == x);
    CHECK(pair.response == y);
  }
}

TEST_CASE("chat completions backend") {
  FakeServer fake;
  nlohmann::json last_body;
  std::string last_auth;
  int fail_first = 0;
  int fail_status = 500;
  fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++fake.hits;
    last_body = nlohmann::json::parse(req.body);
    last_auth = req.get_header_value("Authorization");
    if (fake.hits <= fail_first) {
      res.status = fail_status;
      res.set_content("boom", "text/plain");
      return;
    }
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "[question]: Q\n[answer]: A"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  fake.start();

  ChatCompletionsBackend backend(fake.url(), "test-model", "secret");
  GenerationConfig cfg;
  cfg.seed = 5;
  cfg.retry = fast_retry(2);
  SelectedExamples selected;
  const Document target{"t", "doc", {}};

  SUBCASE("success echoes the request parameters") {
    CHECK(generate_pair(target, selected, backend, cfg) == "[question]: Q\n[answer]: A");
    CHECK(last_body["model"] == "test-model");
    CHECK(last_body["seed"] == 5);
    CHECK(last_body["max_tokens"] == 512);
    CHECK(last_body["messages"][0]["content"] == render_prompt(selected, target));
    CHECK(last_auth == "Bearer secret");
  }
  SUBCASE("HTTP 500 on every attempt with max_retries=2 fails after three calls") {
    fail_first = 100;
    int status = 0;
    try {
      generate_pair(target, selected, backend, cfg);
    } catch (const BackendError& e) {
      status = e.status();
      CHECK(e.code() == ErrorCode::BackendError);
    }
    CHECK(status == 500);
    CHECK(fake.hits == 3);
  }
  SUBCASE("transient 503 is retried") {
    fail_first = 2;
    fail_status = 503;
    CHECK(generate_pair(target, selected, backend, cfg) == "[question]: Q\n[answer]: A");
    CHECK(fake.hits == 3);
  }
  SUBCASE("client errors are not retried") {
    fail_first = 100;
    fail_status = 400;
    CHECK(expect_error([&] { generate_pair(target, selected, backend, cfg); }).code() == ErrorCode::BackendError);
    CHECK(fake.hits == 1);
  }
}

TEST_CASE("unreachable generation backend") {
  std::string url;
  {
    FakeServer closed;
    closed.start();
    url = closed.url();
  }
  ChatCompletionsBackend backend(url, "m", "");
  GenerationConfig cfg;
  cfg.retry = fast_retry(1);
  auto err = expect_error([&] { generate_pair(Document{"t", "x", {}}, {}, backend, cfg); });
  CHECK(err.code() == ErrorCode::BackendUnreachable);
}
