#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "attentive/agenda.hpp"
#include "attentive/dialog.hpp"
#include "attentive/encoder.hpp"
#include "attentive/listening.hpp"

namespace testing {

inline std::string data_path(const std::string& name) {
  return (std::filesystem::path(ATTENTIVE_DATA_DIR) / name).string();
}

inline std::string fixture_path(const std::string& name) {
  return (std::filesystem::path(ATTENTIVE_FIXTURE_DIR) / name).string();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("attentive-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Predictor whose probability is a function of the raw message text.
class FunctionPredictor : public attentive::Predictor {
 public:
  FunctionPredictor(std::string fingerprint, std::function<double(std::string_view)> fn)
      : fingerprint_(std::move(fingerprint)), fn_(std::move(fn)) {}
  double probability(const attentive::Embedding&, std::string_view text) const override {
    return fn_(text);
  }
  const std::string& encoder_fingerprint() const override { return fingerprint_; }

 private:
  std::string fingerprint_;
  std::function<double(std::string_view)> fn_;
};

inline std::shared_ptr<const attentive::Predictor> constant(const std::string& fingerprint,
                                                            double p) {
  return std::make_shared<FunctionPredictor>(fingerprint, [p](std::string_view) { return p; });
}

/// p_hit when the text contains `word`, p_miss otherwise.
inline std::shared_ptr<const attentive::Predictor> keyword(const std::string& fingerprint,
                                                           std::string word, double p_hit = 0.9,
                                                           double p_miss = 0.1) {
  return std::make_shared<FunctionPredictor>(
      fingerprint, [word = std::move(word), p_hit, p_miss](std::string_view text) {
        return text.find(word) != std::string_view::npos ? p_hit : p_miss;
      });
}

inline std::shared_ptr<attentive::IntentModelBundle> stub_bundle(
    const std::string& topic_id, const std::string& fingerprint,
    std::shared_ptr<const attentive::Predictor> relevance,
    std::vector<std::pair<std::string, std::shared_ptr<const attentive::Predictor>>> intents,
    double threshold1 = 0.5, double threshold2 = 0.6) {
  auto b = std::make_shared<attentive::IntentModelBundle>();
  b->id = topic_id + "-bundle";
  b->topic_id = topic_id;
  b->relevance = std::move(relevance);
  for (auto& [id, p] : intents) b->intents.push_back({id, std::move(p), ""});
  b->threshold1 = threshold1;
  b->threshold2 = threshold2;
  b->encoder_fingerprint = fingerprint;
  return b;
}

inline const attentive::SideTalkConfig& side_talk() {
  static const auto config = attentive::SideTalkConfig::load(data_path("sidetalk.json"));
  return config;
}

inline attentive::Agenda books_agenda() { return attentive::load_agenda(data_path("agendas/books.json")); }
inline attentive::Agenda interview_agenda() {
  return attentive::load_agenda(data_path("agendas/interview6.json"));
}

/// Encoder fitted on the agenda text; only its fingerprint matters to stubs.
inline std::shared_ptr<const attentive::EncoderModel> small_encoder() {
  static const auto encoder = [] {
    const std::vector<std::string> corpus{"books about magic", "history and biographies",
                                          "detective stories", "cooking and hiking"};
    return std::make_shared<const attentive::EncoderModel>(attentive::EncoderModel::fit(corpus, 64));
  }();
  return encoder;
}

}  // namespace testing
