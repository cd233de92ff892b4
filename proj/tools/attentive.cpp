// attentive: command-line front end for the interview engine and its
// training pipeline. Every stage reads and writes the documented file formats.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "attentive/agenda.hpp"
#include "attentive/classify.hpp"
#include "attentive/dialog.hpp"
#include "attentive/encoder.hpp"
#include "attentive/error.hpp"
#include "attentive/listening.hpp"
#include "attentive/metrics.hpp"
#include "attentive/pipeline.hpp"
#include "attentive/service.hpp"
#include "attentive/text.hpp"

#ifndef ATTENTIVE_DATA_DIR
#define ATTENTIVE_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attentive;

namespace {

constexpr std::string_view kCorpusHeader = "id\ttopic\ttext";
constexpr std::string_view kTopicsFormat = "attentive-topics/1";
constexpr std::string_view kRankedHeader = "doc_id\tlexrank\tcentroid_sim\tcombined\ttext";

struct CorpusRow {
  std::string id;
  std::string topic;
  std::string text;
};

std::vector<CorpusRow> load_corpus(const std::string& path) {
  const std::string buffer = text::read_file(path);
  const auto lines = text::split_lines(buffer);
  if (lines.empty() || lines.front() != kCorpusHeader) {
    throw RowError(Errc::kMalformedRow, path + ": expected header 'id<TAB>topic<TAB>text'", 1);
  }
  std::vector<CorpusRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = text::split_tabs(lines[i]);
    if (f.size() != 3) throw RowError(Errc::kMalformedRow, path + ": expected 3 fields", i + 1);
    rows.push_back({text::unescape_field(f[0]), text::unescape_field(f[1]), text::unescape_field(f[2])});
  }
  return rows;
}

std::vector<std::string> load_lines(const std::string& path) {
  std::vector<std::string> out;
  const std::string buffer = text::read_file(path);
  for (auto line : text::split_lines(buffer)) {
    if (!text::trim(line).empty()) out.emplace_back(line);
  }
  return out;
}

void write_output(const std::string& path, std::string_view contents) {
  if (path.empty() || path == "-") {
    std::cout << contents;
  } else {
    text::write_file(path, contents);
  }
}

Dataset embed_examples(const std::vector<LabeledExample>& examples, const EncoderModel& encoder) {
  Dataset d;
  d.encoder_fingerprint = encoder.fingerprint();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    d.rows.push_back({encoder.encode(e.text).values, e.label == Label::kPositive ? 1 : 0, e.text,
                      "r" + std::to_string(i + 1)});
  }
  return d;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kIoError:
    case Errc::kAdapterUnreachable:
    case Errc::kNonfiniteLoss:
    case Errc::kCorruptLog:
      return 2;
    default:
      return 1;
  }
}

// ---------------------------------------------------------------- engines

struct EngineOptions {
  std::vector<std::string> agendas;
  std::vector<std::string> bundles;
  std::string encoder;
  std::string data_dir = ATTENTIVE_DATA_DIR;
};

void add_engine_options(CLI::App* cmd, EngineOptions& o, bool many_agendas) {
  auto* agenda = cmd->add_option("--agenda", o.agendas, "Agenda file")->required()->check(CLI::ExistingFile);
  if (!many_agendas) agenda->expected(1);
  cmd->add_option("--bundle", o.bundles, "Intent-model bundle file (repeatable)")->check(CLI::ExistingFile);
  cmd->add_option("--encoder", o.encoder, "Encoder file used by the bundles")->check(CLI::ExistingFile);
  cmd->add_option("--data-dir", o.data_dir, "Directory holding sidetalk.json")->check(CLI::ExistingDirectory);
}

Service::EngineMap build_engines(const EngineOptions& o) {
  std::shared_ptr<const EncoderModel> encoder;
  if (!o.encoder.empty()) encoder = std::make_shared<EncoderModel>(EncoderModel::load(o.encoder));
  BundleRegistry registry;
  for (const auto& path : o.bundles) {
    auto bundle = std::make_shared<IntentModelBundle>(IntentModelBundle::load(path));
    if (!encoder) throw Error(Errc::kInvalidArgument, "--bundle requires --encoder");
    if (bundle->encoder_fingerprint != encoder->fingerprint()) {
      throw Error(Errc::kFingerprintMismatch, "bundle " + path + " was trained under encoder " +
                                                  bundle->encoder_fingerprint);
    }
    registry[bundle->id] = std::move(bundle);
  }
  const auto side_talk = SideTalkConfig::load((fs::path(o.data_dir) / "sidetalk.json").string());
  Service::EngineMap engines;
  for (const auto& path : o.agendas) {
    auto agenda = load_agenda(path);
    const std::string id = agenda.id;
    engines[id] = std::make_shared<DialogEngine>(std::move(agenda), registry, side_talk, encoder);
  }
  return engines;
}

// ---------------------------------------------------------------- discover

struct DiscoverOptions {
  std::string corpus, topic, out;
  std::size_t k = 5;
  std::optional<double> alpha;
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double min_coverage = 0.10;
};

int run_discover(const DiscoverOptions& o) {
  std::vector<std::pair<std::string, std::string>> docs;
  for (auto& r : load_corpus(o.corpus)) {
    if (o.topic.empty() || r.topic == o.topic) docs.emplace_back(r.id, r.text);
  }
  const auto corpus = preprocess(docs);
  LdaParams params;
  params.topics = o.k;
  params.alpha = o.alpha;
  params.beta = o.beta;
  params.iterations = o.iterations;
  params.seed = o.seed;
  const auto model = lda_fit(corpus, params);
  const auto ranked = rank_intents(model, corpus);
  const auto kept = filter_by_coverage(ranked, o.min_coverage);

  std::printf("%zu responses (%zu skipped), %zu intents, %zu with coverage >= %.0f%%\n",
              corpus.doc_ids.size(), corpus.doc_ids.size() - corpus.active_count(), ranked.size(),
              kept.size(), o.min_coverage * 100.0);
  std::printf("intent\tcoverage\tkeywords\n");
  for (const auto& s : kept) {
    std::string keywords;
    for (const auto& w : s.keywords) keywords += (keywords.empty() ? "" : ", ") + w;
    std::printf("%s\t%.2f%%\t%s\n", s.intent_id.c_str(), s.coverage * 100.0, keywords.c_str());
  }

  if (!o.out.empty()) {
    json intents = json::array();
    for (const auto& s : kept) {
      intents.push_back({{"id", s.intent_id}, {"coverage", s.coverage}, {"keywords", s.keywords},
                         {"members", s.member_doc_ids}});
    }
    json skipped = json::array();
    for (std::size_t d = 0; d < corpus.doc_ids.size(); ++d) {
      if (corpus.skipped[d]) {
        skipped.push_back({{"id", corpus.doc_ids[d]}, {"text", corpus.raw.at(corpus.doc_ids[d])}});
      }
    }
    const json j{{"format", kTopicsFormat},
                 {"topic", o.topic},
                 {"k", model.topics},
                 {"alpha", model.alpha},
                 {"beta", model.beta},
                 {"iterations", model.iterations},
                 {"seed", model.seed},
                 {"min_coverage", o.min_coverage},
                 {"doc_ids", corpus.doc_ids},
                 {"theta", model.theta},
                 {"top_keywords", model.top_keywords},
                 {"intents", std::move(intents)},
                 {"skipped", std::move(skipped)}};
    text::write_file(o.out, j.dump(1));
  }
  return 0;
}

// ---------------------------------------------------------------- rank

struct RankOptions {
  std::string corpus, topics, intent, encoder, out;
  double threshold = 0.25;
  LexRankParams lexrank;
};

int run_rank(const RankOptions& o) {
  const json t = json::parse(text::read_file(o.topics));
  if (t.value("format", "") != kTopicsFormat) {
    throw Error(Errc::kVersionMismatch, o.topics + " is not a topics file");
  }
  TopicModel model;
  model.topics = t.at("k").get<std::size_t>();
  model.theta = t.at("theta").get<std::vector<std::vector<double>>>();
  TokenizedCorpus corpus;
  corpus.doc_ids = t.at("doc_ids").get<std::vector<std::string>>();
  corpus.skipped.assign(corpus.doc_ids.size(), false);
  std::set<std::string> skipped_ids;
  for (const auto& s : t.at("skipped")) skipped_ids.insert(s.at("id").get<std::string>());
  for (std::size_t d = 0; d < corpus.doc_ids.size(); ++d) {
    corpus.skipped[d] = skipped_ids.contains(corpus.doc_ids[d]);
  }

  std::map<std::string, std::string, std::less<>> raw;
  for (auto& r : load_corpus(o.corpus)) raw[r.id] = r.text;
  const auto cluster = select_cluster(model, corpus, o.intent, o.threshold);
  if (cluster.empty()) throw Error(Errc::kEmptyCluster, "no responses pass the cluster threshold");

  const auto encoder = EncoderModel::load(o.encoder);
  std::vector<std::vector<double>> vectors;
  for (const auto& id : cluster) {
    const auto it = raw.find(id);
    if (it == raw.end()) throw Error(Errc::kInvalidArgument, "document '" + id + "' not in corpus");
    vectors.push_back(encoder.encode(it->second).values);
  }
  const auto ranked = lexrank(cluster, vectors, o.lexrank);

  std::string out(kRankedHeader);
  out += '\n';
  char buf[128];
  for (const auto& r : ranked) {
    std::snprintf(buf, sizeof buf, "\t%.9f\t%.9f\t%.9f\t", r.lexrank_score, r.centroid_sim, r.combined);
    out += text::escape_field(r.doc_id) + buf + text::escape_field(raw.at(r.doc_id)) + '\n';
  }
  write_output(o.out, out);
  std::fprintf(stderr, "ranked %zu responses for intent %s\n", ranked.size(), o.intent.c_str());
  return 0;
}

// ---------------------------------------------------------------- label

struct LabelOptions {
  std::string ranked, topics, topic, intent, out;
  double fraction = 0.2;
  std::string import_path, baseline;
  bool relevance = false;
  std::string corpus, side_talk;
  std::uint64_t seed = 0;
};

int run_label(const LabelOptions& o) {
  if (!o.import_path.empty()) {
    std::optional<std::string> baseline;
    const std::string baseline_path = o.baseline.empty() ? o.import_path + ".auto" : o.baseline;
    if (fs::exists(baseline_path)) baseline = text::read_file(baseline_path);
    const auto examples = review_import(text::read_file(o.import_path),
                                        baseline ? std::optional<std::string_view>(*baseline)
                                                 : std::nullopt);
    std::size_t human = 0, positive = 0;
    for (const auto& e : examples) {
      human += e.source == LabelSource::kHuman;
      positive += e.label == Label::kPositive;
    }
    std::fprintf(stderr, "%zu examples (%zu positive, %zu negative), %zu edited by a reviewer\n",
                 examples.size(), positive, examples.size() - positive, human);
    write_output(o.out, review_export(examples));
    return 0;
  }

  if (o.relevance) {
    if (o.corpus.empty() || o.topic.empty()) {
      throw Error(Errc::kInvalidArgument, "--relevance needs --corpus and --topic");
    }
    std::vector<std::string> own, others;
    for (auto& r : load_corpus(o.corpus)) (r.topic == o.topic ? own : others).push_back(r.text);
    std::vector<std::string> side;
    if (!o.side_talk.empty()) side = load_lines(o.side_talk);
    const auto examples = relevance_examples(own, others, side, o.topic, o.seed);
    write_output(o.out, review_export(examples));
    std::fprintf(stderr, "%zu relevance examples for topic %s\n", examples.size(), o.topic.c_str());
    return 0;
  }

  if (o.ranked.empty()) throw Error(Errc::kInvalidArgument, "give --ranked, --import or --relevance");
  const std::string buffer = text::read_file(o.ranked);
  const auto lines = text::split_lines(buffer);
  if (lines.empty() || lines.front() != kRankedHeader) {
    throw RowError(Errc::kMalformedRow, o.ranked + ": not a ranked-responses file", 1);
  }
  std::vector<RankedResponse> ranked;
  std::map<std::string, std::string, std::less<>> raw;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = text::split_tabs(lines[i]);
    if (f.size() != 5) throw RowError(Errc::kMalformedRow, "expected 5 fields", i + 1);
    RankedResponse r;
    r.doc_id = text::unescape_field(f[0]);
    r.lexrank_score = std::stod(std::string(f[1]));
    r.centroid_sim = std::stod(std::string(f[2]));
    r.combined = std::stod(std::string(f[3]));
    raw[r.doc_id] = text::unescape_field(f[4]);
    ranked.push_back(std::move(r));
  }
  auto examples = auto_label(ranked, o.fraction, raw, o.topic, o.intent);
  if (!o.topics.empty()) {
    const json t = json::parse(text::read_file(o.topics));
    for (const auto& s : t.at("skipped")) {
      const auto body = s.at("text").get<std::string>();
      examples.push_back({text::trim(body).empty() ? s.at("id").get<std::string>() : body, o.topic,
                          o.intent, Label::kDrop, LabelSource::kSkipped});
    }
  }
  if (examples.empty()) throw Error(Errc::kEmptyInput, "fraction selects no responses");
  const std::string exported = review_export(examples);
  write_output(o.out, exported);
  if (!o.out.empty() && o.out != "-") text::write_file(o.out + ".auto", exported);
  const std::size_t n = slice_size(ranked.size(), o.fraction);
  std::fprintf(stderr, "%zu positive and %zu negative rows written for review\n", n, n);
  return 0;
}

// ---------------------------------------------------------------- encoder

struct EncoderOptions {
  std::string corpus, out;
  std::size_t dim = EncoderModel::kDefaultDimension;
  std::optional<std::uint64_t> hash_seed;
};

int run_encoder(const EncoderOptions& o) {
  std::vector<std::string> texts;
  for (auto& r : load_corpus(o.corpus)) texts.push_back(std::move(r.text));
  const auto model = EncoderModel::fit(texts, o.dim, o.hash_seed.value_or(EncoderModel::kDefaultHashSeed));
  text::write_file(o.out, model.to_json());
  std::fprintf(stderr, "encoder %s (dimension %zu, %zu documents)\n", model.fingerprint().c_str(),
               model.dimension(), texts.size());
  return 0;
}

// ---------------------------------------------------------------- train / crossval

struct TrainOptions {
  std::string data, encoder, out, algo = "logreg";
  std::uint64_t seed = 0;
  int folds = 10;
  Hyperparams hp;
};

int run_train(const TrainOptions& o) {
  const auto encoder = EncoderModel::load(o.encoder);
  const auto data = embed_examples(review_import(text::read_file(o.data)), encoder);
  Algorithm algorithm = Algorithm::kLogisticRegression;
  if (o.algo == "all") {
    std::map<Algorithm, Metrics> results;
    for (auto a : kAllAlgorithms) results[a] = cross_validate(data, a, o.folds, o.seed, o.hp).average;
    algorithm = select_best(results);
    std::fprintf(stderr, "selected %s by %d-fold F1\n",
                 std::string(algorithm_display_name(algorithm)).c_str(), o.folds);
  } else {
    algorithm = *parse_algorithm(o.algo);
  }
  const auto model = train(data, algorithm, o.hp, o.seed);
  text::write_file(o.out, model.to_json());
  std::fprintf(stderr, "trained %s on %zu rows\n", std::string(algorithm_tag(algorithm)).c_str(),
               data.rows.size());
  return 0;
}

struct CrossvalOptions {
  std::string data, encoder, out, algo = "all", title;
  bool synthetic = false;
  std::size_t rows = 1000, dim = 8;
  std::uint64_t seed = 0;
  int folds = 10;
  Hyperparams hp;
};

int run_crossval(const CrossvalOptions& o) {
  Dataset data;
  std::string title = o.title;
  if (o.synthetic) {
    data = synthetic_separable(o.rows, o.dim, o.seed);
    if (title.empty()) title = "Synthetic separable data";
  } else {
    if (o.data.empty() || o.encoder.empty()) {
      throw Error(Errc::kInvalidArgument, "crossval needs --data and --encoder, or --synthetic");
    }
    const auto encoder = EncoderModel::load(o.encoder);
    data = embed_examples(review_import(text::read_file(o.data)), encoder);
    if (title.empty()) title = fs::path(o.data).stem().string();
  }
  std::vector<CrossValidation> results;
  if (o.algo == "all") {
    for (auto a : kAllAlgorithms) results.push_back(cross_validate(data, a, o.folds, o.seed, o.hp));
  } else {
    results.push_back(cross_validate(data, *parse_algorithm(o.algo), o.folds, o.seed, o.hp));
  }
  write_output(o.out, render_report(title, data, results));
  return 0;
}

// ---------------------------------------------------------------- bind

struct BindOptions {
  std::string topic, id, relevance, encoder, out, agenda, agenda_out;
  std::vector<std::string> intents;
  std::optional<double> threshold1, threshold2;
};

int run_bind(const BindOptions& o) {
  const auto encoder = EncoderModel::load(o.encoder);
  const fs::path out_dir = fs::absolute(o.out).parent_path();
  auto relative = [&](const std::string& p) { return fs::relative(fs::absolute(p), out_dir).string(); };

  std::optional<Agenda> agenda;
  if (!o.agenda.empty()) agenda = load_agenda(o.agenda);

  auto bundle = std::make_shared<IntentModelBundle>();
  bundle->id = o.id.empty() ? o.topic : o.id;
  bundle->topic_id = o.topic;
  bundle->encoder_fingerprint = encoder.fingerprint();
  bundle->threshold1 = o.threshold1.value_or(agenda ? agenda->settings.threshold1 : 0.5);
  bundle->threshold2 = o.threshold2.value_or(agenda ? agenda->settings.threshold2 : 0.6);
  bundle->relevance_path = relative(o.relevance);
  bundle->relevance = std::make_shared<ClassifierPredictor>(
      BinaryClassifier::load(o.relevance, encoder.fingerprint()));
  for (const auto& spec : o.intents) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(Errc::kInvalidArgument, "--intent expects ID=MODEL, got '" + spec + "'");
    }
    IntentPredictor ip;
    ip.intent_id = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);
    ip.source_path = relative(path);
    ip.predictor = std::make_shared<ClassifierPredictor>(
        BinaryClassifier::load(path, encoder.fingerprint()));
    bundle->intents.push_back(std::move(ip));
  }

  if (agenda) {
    const Agenda bound = bind_bundle(*agenda, o.topic, bundle);
    const auto violations = validate_agenda(bound, {{bundle->id, bundle}});
    if (!violations.empty()) {
      std::string message = "bound agenda is invalid:";
      for (const auto& v : violations) message += "\n  " + v.describe();
      throw Error(Errc::kValidationError, message);
    }
    if (!o.agenda_out.empty()) text::write_file(o.agenda_out, serialize_agenda(bound));
  }
  text::write_file(o.out, bundle->to_json());
  std::fprintf(stderr, "bundle %s: topic %s, %zu intents\n", bundle->id.c_str(), o.topic.c_str(),
               bundle->intents.size());
  return 0;
}

// ---------------------------------------------------------------- chat

struct ChatOptions {
  EngineOptions engine;
  std::optional<std::uint64_t> seed;
  std::int64_t clock_step = 0;
  std::string log_dir, transcript;
};

int run_chat(const ChatOptions& o) {
  auto engines = build_engines(o.engine);
  const std::string agenda_id = engines.begin()->first;
  ServiceConfig config;
  config.log_dir = o.log_dir.empty() ? (fs::temp_directory_path() / "attentive-chat").string()
                                     : o.log_dir;
  if (o.clock_step > 0) {
    auto now = std::make_shared<std::int64_t>(0);
    const auto step = o.clock_step;
    config.clock = [now, step] { return std::exchange(*now, *now + step); };
  }
  Service service(std::move(engines), config);
  const auto created = service.create_session(agenda_id, o.seed);
  for (const auto& m : created.messages) std::cout << "bot> " << m << '\n';

  auto read_line = [](std::string& line) {
    std::cout << "you> " << std::flush;
    return static_cast<bool>(std::getline(std::cin, line));
  };
  auto ask_score = [&](const std::string& prompt, const RatingTarget& target) {
    std::string line;
    while (true) {
      std::cout << "bot> " << prompt << " (1-5)\n";
      if (!read_line(line)) return false;
      const auto score = parse_rating(line);
      if (score) {
        service.post_rating(created.session_id, target, *score);
        return true;
      }
    }
  };

  std::string line;
  bool done = false;
  while (!done && read_line(line)) {
    if (text::trim(line).empty()) continue;
    const auto posted = service.post_message(created.session_id, line);
    for (const auto& m : posted.messages) std::cout << "bot> " << m << '\n';
    done = posted.done;
    if (posted.rating_request &&
        !ask_score("How well did I understand you on that question?", {posted.rating_request, {}})) {
      break;
    }
  }
  if (done) {
    ask_score("How interested would you be in chatting with me again?", {{}, "interest"}) &&
        ask_score("How would you rate this chat overall?", {{}, "chat"});
  }
  if (!o.transcript.empty()) {
    text::write_file(o.transcript, service.transcript_json(created.session_id).dump(1));
  }
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeOptions {
  EngineOptions engine;
  std::string host = "127.0.0.1", log_dir = "sessions";
  int port = 8080;
  bool durable = false;
};

int run_serve(const ServeOptions& o) {
  // Signals are taken synchronously by a watcher thread so shutdown can call
  // into the server safely.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ServiceConfig config;
  config.log_dir = o.log_dir;
  config.durable = o.durable;
  Service service(build_engines(o.engine), config);
  const auto restored = service.recover();
  HttpServer server(service);
  const int port = server.bind(o.host, o.port);
  if (port < 0) throw Error(Errc::kIoError, "cannot bind " + o.host + ":" + std::to_string(o.port));
  std::printf("restored %zu sessions\nlistening on http://%s:%d\n", restored, o.host.c_str(), port);
  std::fflush(stdout);

  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::vector<std::string> transcripts;
  std::string coding, reference, out;
};

int run_eval(const EvalOptions& o) {
  std::vector<std::string> files;
  for (const auto& p : o.transcripts) {
    if (fs::is_directory(p)) {
      for (const auto& f : fs::directory_iterator(p)) {
        if (f.path().extension() == ".json") files.push_back(f.path().string());
      }
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::kEmptyInput, "no transcripts given");

  std::map<std::string, std::vector<CodedResponse>> coding;
  if (!o.coding.empty()) coding = parse_coding_sheet(text::read_file(o.coding));
  const auto reference = UnigramModel::fit(load_lines(o.reference));

  std::vector<ParticipantMetrics> rows;
  for (const auto& f : files) {
    const json j = json::parse(text::read_file(f));
    const Session s = session_from_transcript_json(j);
    const auto rated = j.value("rated_topics", std::vector<std::string>{});
    const auto it = coding.find(s.id);
    rows.push_back(measure(s, reference, rated, it == coding.end() ? nullptr : &it->second));
  }
  write_output(o.out, render_metrics_report(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interview chatbot engine with active listening"};
  app.require_subcommand(1);

  DiscoverOptions discover;
  auto* c_discover = app.add_subcommand("discover", "Find intents in a topic's responses with LDA");
  c_discover->add_option("--corpus", discover.corpus, "Corpus TSV (id, topic, text)")->required()->check(CLI::ExistingFile);
  c_discover->add_option("--topic", discover.topic, "Only use responses to this topic");
  c_discover->add_option("--k", discover.k, "Number of intents")->check(CLI::Range(2, 1000));
  c_discover->add_option("--alpha", discover.alpha, "Document-topic prior (default 50/k)")->check(CLI::PositiveNumber);
  c_discover->add_option("--beta", discover.beta, "Topic-word prior")->check(CLI::PositiveNumber);
  c_discover->add_option("--iters", discover.iterations, "Gibbs sweeps")->check(CLI::Range(1, 1000000));
  c_discover->add_option("--seed", discover.seed, "Sampler seed");
  c_discover->add_option("--min-coverage", discover.min_coverage, "Drop intents below this coverage")->check(CLI::Range(0.0, 1.0));
  c_discover->add_option("--out", discover.out, "Topics file for the rank stage");

  RankOptions rank;
  auto* c_rank = app.add_subcommand("rank", "Rank an intent's responses by centrality");
  c_rank->add_option("--corpus", rank.corpus, "Corpus TSV")->required()->check(CLI::ExistingFile);
  c_rank->add_option("--topics", rank.topics, "Topics file from discover")->required()->check(CLI::ExistingFile);
  c_rank->add_option("--intent", rank.intent, "Intent id, e.g. c1")->required();
  c_rank->add_option("--encoder", rank.encoder, "Encoder file")->required()->check(CLI::ExistingFile);
  c_rank->add_option("--threshold", rank.threshold, "Cluster membership threshold")->check(CLI::Range(0.0, 1.0));
  c_rank->add_option("--sim-threshold", rank.lexrank.sim_threshold, "Similarity edge cutoff")->check(CLI::Range(-1.0, 1.0));
  c_rank->add_option("--damping", rank.lexrank.damping, "Random-walk damping")->check(CLI::Range(0.0, 1.0));
  c_rank->add_option("--centrality-weight", rank.lexrank.centrality_weight, "Weight of centrality in the combined score")->check(CLI::Range(0.0, 1.0));
  c_rank->add_option("--out", rank.out, "Ranked TSV (default stdout)");

  LabelOptions label;
  auto* c_label = app.add_subcommand("label", "Auto-label ranked responses or import a reviewed file");
  c_label->add_option("--ranked", label.ranked, "Ranked TSV from rank")->check(CLI::ExistingFile);
  c_label->add_option("--topics", label.topics, "Topics file; adds skipped responses as drop rows")->check(CLI::ExistingFile);
  c_label->add_option("--topic", label.topic, "Interview topic id");
  c_label->add_option("--intent", label.intent, "Intent id");
  c_label->add_option("--fraction", label.fraction, "Share labeled at each end")->check(CLI::Range(0.0, 1.0));
  c_label->add_option("--import", label.import_path, "Reviewed file to validate")->check(CLI::ExistingFile);
  c_label->add_option("--baseline", label.baseline, "Exported copy to diff against (default <import>.auto)");
  c_label->add_flag("--relevance", label.relevance, "Build a relevance dataset for --topic");
  c_label->add_option("--corpus", label.corpus, "Corpus TSV (with --relevance)")->check(CLI::ExistingFile);
  c_label->add_option("--side-talk", label.side_talk, "Side-talk lines used as negatives")->check(CLI::ExistingFile);
  c_label->add_option("--seed", label.seed, "Sampling seed");
  c_label->add_option("--out", label.out, "Output file (default stdout)");

  EncoderOptions enc;
  auto* c_encoder = app.add_subcommand("encoder", "Fit the hashing sentence encoder");
  c_encoder->add_option("--corpus", enc.corpus, "Corpus TSV")->required()->check(CLI::ExistingFile);
  c_encoder->add_option("--dim", enc.dim, "Vector dimension")->check(CLI::Range(std::size_t{16}, std::size_t{1} << 20));
  c_encoder->add_option("--seed", enc.hash_seed, "Hash seed");
  c_encoder->add_option("--out", enc.out, "Encoder file")->required();

  auto add_hyper = [](CLI::App* cmd, Hyperparams& hp) {
    cmd->add_option("--l2", hp.l2, "L2 penalty")->check(CLI::Range(0.0, 1e6));
    cmd->add_option("--epochs", hp.max_epochs, "Maximum gradient steps")->check(CLI::Range(1, 10000000));
    cmd->add_option("--rounds", hp.boosting_rounds, "AdaBoost rounds")->check(CLI::Range(1, 100000));
  };
  const auto algo_check = CLI::IsMember({"logreg", "svm", "adaboost", "nb", "all"});

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train a binary classifier on a labeled dataset");
  c_train->add_option("--data", tr.data, "Dataset file (review format)")->required()->check(CLI::ExistingFile);
  c_train->add_option("--encoder", tr.encoder, "Encoder file")->required()->check(CLI::ExistingFile);
  c_train->add_option("--algo", tr.algo, "logreg|svm|adaboost|nb|all")->check(algo_check);
  c_train->add_option("--folds", tr.folds, "Folds used to pick the model with --algo all")->check(CLI::Range(2, 1000));
  c_train->add_option("--seed", tr.seed, "Training seed");
  c_train->add_option("--out", tr.out, "Model file")->required();
  add_hyper(c_train, tr.hp);

  CrossvalOptions cv;
  auto* c_crossval = app.add_subcommand("crossval", "Stratified k-fold report");
  c_crossval->add_option("--data", cv.data, "Dataset file")->check(CLI::ExistingFile);
  c_crossval->add_option("--encoder", cv.encoder, "Encoder file")->check(CLI::ExistingFile);
  c_crossval->add_flag("--synthetic", cv.synthetic, "Use two separable Gaussian clouds");
  c_crossval->add_option("--rows", cv.rows, "Synthetic rows")->check(CLI::Range(2, 10000000));
  c_crossval->add_option("--dim", cv.dim, "Synthetic dimension")->check(CLI::Range(1, 100000));
  c_crossval->add_option("--folds", cv.folds, "Number of folds")->check(CLI::Range(2, 1000));
  c_crossval->add_option("--algo", cv.algo, "logreg|svm|adaboost|nb|all")->check(algo_check);
  c_crossval->add_option("--seed", cv.seed, "Shuffle and training seed");
  c_crossval->add_option("--title", cv.title, "Report title");
  c_crossval->add_option("--out", cv.out, "Report file (default stdout)");
  add_hyper(c_crossval, cv.hp);

  BindOptions bind;
  auto* c_bind = app.add_subcommand("bind", "Package classifiers and thresholds into a bundle");
  c_bind->add_option("--topic", bind.topic, "Topic the bundle serves")->required();
  c_bind->add_option("--id", bind.id, "Bundle id (default: topic id)");
  c_bind->add_option("--relevance", bind.relevance, "Relevance model file")->required()->check(CLI::ExistingFile);
  c_bind->add_option("--intent", bind.intents, "ID=MODEL for each intent, in priority order");
  c_bind->add_option("--encoder", bind.encoder, "Encoder file")->required()->check(CLI::ExistingFile);
  c_bind->add_option("--threshold1", bind.threshold1, "Relevance threshold")->check(CLI::Range(0.0, 1.0));
  c_bind->add_option("--threshold2", bind.threshold2, "Intent threshold")->check(CLI::Range(0.0, 1.0));
  c_bind->add_option("--agenda", bind.agenda, "Agenda to check templates against")->check(CLI::ExistingFile);
  c_bind->add_option("--agenda-out", bind.agenda_out, "Write the agenda with the bundle reference");
  c_bind->add_option("--out", bind.out, "Bundle file")->required();

  ChatOptions chat;
  auto* c_chat = app.add_subcommand("chat", "Interview in the terminal");
  add_engine_options(c_chat, chat.engine, false);
  c_chat->add_option("--seed", chat.seed, "Session seed (random by default)");
  c_chat->add_option("--clock-step", chat.clock_step, "Use a fake clock advancing this many ms per event")->check(CLI::NonNegativeNumber);
  c_chat->add_option("--log-dir", chat.log_dir, "Where the session log goes");
  c_chat->add_option("--transcript", chat.transcript, "Write the transcript JSON here");

  ServeOptions serve;
  auto* c_serve = app.add_subcommand("serve", "Host interviews over HTTP");
  add_engine_options(c_serve, serve.engine, true);
  c_serve->add_option("--host", serve.host, "Address to bind");
  c_serve->add_option("--port", serve.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  c_serve->add_option("--log-dir", serve.log_dir, "Session log directory");
  c_serve->add_flag("--durable", serve.durable, "fsync every log append");

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Interview-quality metrics from transcripts");
  c_eval->add_option("--transcripts", ev.transcripts, "Transcript JSON files or directories")->required();
  c_eval->add_option("--coding", ev.coding, "Coding sheet TSV")->check(CLI::ExistingFile);
  c_eval->add_option("--reference", ev.reference, "Reference text for informativeness, one passage per line")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "Report file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (c_discover->parsed()) return run_discover(discover);
    if (c_rank->parsed()) return run_rank(rank);
    if (c_label->parsed()) {
      if (label.fraction <= 0.0 || label.fraction > 0.5) {
        throw Error(Errc::kFractionOutOfRange, "--fraction must be in (0, 0.5]");
      }
      return run_label(label);
    }
    if (c_encoder->parsed()) return run_encoder(enc);
    if (c_train->parsed()) return run_train(tr);
    if (c_crossval->parsed()) return run_crossval(cv);
    if (c_bind->parsed()) return run_bind(bind);
    if (c_chat->parsed()) return run_chat(chat);
    if (c_serve->parsed()) return run_serve(serve);
    if (c_eval->parsed()) return run_eval(ev);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(errc_name(e.code())).c_str(), e.what());
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error (ParseError): %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
