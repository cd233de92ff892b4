#include <doctest.h>

#include <cmath>
#include <thread>

#include <httplib.h>

#include "attentive/classify.hpp"
#include "attentive/encoder.hpp"
#include "attentive/error.hpp"
#include "attentive/random.hpp"
#include "attentive/text.hpp"
#include "support.hpp"

using namespace attentive;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kIoError;
}

std::string random_sentence(Rng& rng) {
  static const std::vector<std::string> words{"river", "book",  "green", "music", "slow", "table",
                                              "run",   "happy", "city",  "the",   "of",   "coffee"};
  std::string s;
  const auto n = 1 + uniform_index(rng, 8);
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[uniform_index(rng, words.size())];
  return s;
}

}  // namespace

TEST_CASE("smoothed idf") {
  const std::vector<std::string> corpus{"red apple", "red pear"};
  const auto m = EncoderModel::fit(corpus, 32);
  CHECK(m.idf("red") == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.idf("apple") == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
  CHECK(m.idf("red apple") == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
  CHECK(m.idf("banana") == doctest::Approx(std::log(3.0) + 1.0));
  CHECK(m.document_count() == 2);
}

TEST_CASE("fit preconditions") {
  CHECK(code_of([] { EncoderModel::fit(std::vector<std::string>{}, 64); }) == Errc::kEmptyCorpus);
  const std::vector<std::string> one{"x"};
  CHECK(code_of([&] { EncoderModel::fit(one, 8); }) == Errc::kInvalidArgument);
}

TEST_CASE("fingerprint is deterministic and tracks every parameter") {
  const std::vector<std::string> corpus{"one two", "two three"};
  const auto a = EncoderModel::fit(corpus, 64);
  CHECK(a.fingerprint() == EncoderModel::fit(corpus, 64).fingerprint());
  CHECK(a.fingerprint() != EncoderModel::fit(corpus, 128).fingerprint());
  CHECK(a.fingerprint() != EncoderModel::fit(corpus, 64, 7).fingerprint());
  const std::vector<std::string> other{"one two", "two four"};
  CHECK(a.fingerprint() != EncoderModel::fit(other, 64).fingerprint());
  CHECK(a.fingerprint().size() == 32);
}

TEST_CASE("encode contracts") {
  const std::vector<std::string> corpus{"I like books", "I like music", "music and books"};
  const auto m = EncoderModel::fit(corpus, 64);
  const auto empty = m.encode("");
  CHECK(empty.values == std::vector<double>(64, 0.0));
  CHECK(m.encode("?!").values == std::vector<double>(64, 0.0));
  CHECK(empty.fingerprint == m.fingerprint());

  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto s = random_sentence(rng);
    const auto v = m.encode(s);
    CHECK(v.dimension() == 64);
    CHECK(std::abs(l2_norm(v.values) - 1.0) < 1e-9);
    CHECK(cosine(v.values, m.encode(s).values) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v == m.encode(s));
  }
}

TEST_CASE("single token maps to one signed coordinate") {
  const std::vector<std::string> corpus{"alpha beta"};
  const auto m = EncoderModel::fit(corpus, 256);
  for (const char* word : {"alpha", "beta", "gamma", "delta"}) {
    const auto v = m.encode(word).values;
    int nonzero = 0;
    for (double x : v) {
      if (x != 0.0) {
        ++nonzero;
        CHECK(std::abs(x) == doctest::Approx(1.0));
      }
    }
    CHECK(nonzero == 1);
  }
}

TEST_CASE("features are unigrams then bigrams") {
  CHECK(EncoderModel::features("The cat sat") ==
        std::vector<std::string>{"the", "cat", "sat", "the cat", "cat sat"});
  CHECK(EncoderModel::features("").empty());
}

TEST_CASE("paraphrases are closer than unrelated sentences") {
  const std::string buffer = text::read_file(testing::fixture_path("paraphrase_pairs.tsv"));
  const auto lines = text::split_lines(buffer);
  std::vector<std::array<std::string, 3>> triples;
  std::vector<std::string> corpus;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = text::split_tabs(lines[i]);
    REQUIRE(f.size() == 3);
    triples.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
    for (const auto& s : triples.back()) corpus.push_back(s);
  }
  REQUIRE(triples.size() == 50);
  const auto m = EncoderModel::fit(corpus);
  int closer = 0;
  for (const auto& [anchor, para, other] : triples) {
    const auto a = m.encode(anchor).values;
    closer += cosine(a, m.encode(para).values) > cosine(a, m.encode(other).values);
  }
  MESSAGE("paraphrase wins: " << closer << "/50");
  CHECK(closer >= 45);
}

TEST_CASE("model files round-trip and are integrity checked") {
  const std::vector<std::string> corpus{"one two", "three"};
  const auto m = EncoderModel::fit(corpus, 32, 99);
  const auto back = EncoderModel::from_json(m.to_json());
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(back.encode("one two three") == m.encode("one two three"));

  auto tampered = m.to_json();
  const auto pos = tampered.find("\"document_count\": 2");
  REQUIRE(pos != std::string::npos);
  tampered.replace(pos, 19, "\"document_count\": 3");
  CHECK(code_of([&] { EncoderModel::from_json(tampered); }) == Errc::kFingerprintMismatch);
  CHECK(code_of([] { EncoderModel::from_json(R"({"format":"other"})"); }) == Errc::kVersionMismatch);
  CHECK(code_of([] { EncoderModel::from_json("{"); }) == Errc::kParseError);

  const auto ext = EncoderModel::external("use-lite", 512);
  CHECK(EncoderModel::from_json(ext.to_json()).fingerprint() == ext.fingerprint());
  CHECK(ext.kind() == EncoderKind::kExternal);
  CHECK(code_of([&] { ext.encode("hi"); }) == Errc::kInvalidArgument);
}

TEST_CASE("classifier refuses vectors from another encoder") {
  const std::vector<std::string> c1{"a b"}, c2{"a c"};
  const auto m1 = EncoderModel::fit(c1, 16), m2 = EncoderModel::fit(c2, 16);
  BinaryClassifier clf;
  clf.dimension = 16;
  clf.weights.assign(16, 0.0);
  clf.encoder_fingerprint = m1.fingerprint();
  CHECK(clf.predict_proba(m1.encode("a")) == doctest::Approx(0.5));
  CHECK(code_of([&] { clf.predict_proba(m2.encode("a")); }) == Errc::kFingerprintMismatch);
}

TEST_CASE("line protocol") {
  CHECK(embed_protocol::format_request("a\tb") == "EMBED\ta\\tb");
  const std::vector<double> v{0.5, -0.25, 1e-20};
  CHECK(embed_protocol::parse_response(embed_protocol::format_response(v)) == v);
  CHECK(code_of([] { embed_protocol::parse_response("3\t1,2"); }) == Errc::kAdapterUnreachable);
  CHECK(code_of([] { embed_protocol::parse_response("junk"); }) == Errc::kAdapterUnreachable);
  CHECK(code_of([] { embed_protocol::parse_response("2\t1,x"); }) == Errc::kAdapterUnreachable);
}

TEST_CASE("external encoding through a child process") {
  const auto model = EncoderModel::external("stub", 16);
  const std::vector<std::string> texts{"one", "two", "three"};
  {
    ProcessEmbeddingAdapter adapter({ATTENTIVE_EMBED_STUB, "basis", "16"});
    const auto out = encode_external(adapter, model, texts);
    REQUIRE(out.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> e(16, 0.0);
      e[i] = 1.0;
      CHECK(out[i].values == e);
      CHECK(out[i].fingerprint == model.fingerprint());
    }
  }
  {
    ProcessEmbeddingAdapter adapter({ATTENTIVE_EMBED_STUB, "basis", "20"});
    CHECK(code_of([&] { encode_external(adapter, model, texts); }) == Errc::kDimensionMismatch);
  }
  {
    ProcessEmbeddingAdapter adapter({ATTENTIVE_EMBED_STUB, "hang"}, std::chrono::milliseconds(200));
    std::vector<Embedding> out;
    CHECK(code_of([&] { out = encode_external(adapter, model, texts); }) ==
          Errc::kAdapterUnreachable);
    CHECK(out.empty());
  }
  {
    ProcessEmbeddingAdapter adapter({ATTENTIVE_EMBED_STUB, "garbage"});
    CHECK(code_of([&] { encode_external(adapter, model, texts); }) == Errc::kAdapterUnreachable);
  }
  {
    ProcessEmbeddingAdapter adapter({"/nonexistent/encoder"});
    CHECK(code_of([&] { encode_external(adapter, model, texts); }) == Errc::kAdapterUnreachable);
  }
}

TEST_CASE("external encoding over http normalizes vectors") {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    std::string body;
    for (auto line : text::split_lines(req.body)) {
      if (line.empty()) continue;
      const std::vector<double> v{3.0, 4.0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
      body += embed_protocol::format_response(v) + "\n";
    }
    res.set_content(body, "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto model = EncoderModel::external("http-stub", 16);
  HttpEmbeddingAdapter adapter("127.0.0.1", port);
  const std::vector<std::string> texts{"a", "b"};
  const auto out = encode_external(adapter, model, texts);
  REQUIRE(out.size() == 2);
  CHECK(out[0].values[0] == doctest::Approx(0.6));
  CHECK(out[0].values[1] == doctest::Approx(0.8));
  server.stop();
  t.join();

  HttpEmbeddingAdapter dead("127.0.0.1", port, std::chrono::milliseconds(200));
  CHECK(code_of([&] { encode_external(dead, model, texts); }) == Errc::kAdapterUnreachable);
}
