#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tracelm/csv.hpp"
#include "tracelm/pipeline.hpp"

using namespace tracelm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "tracelm_pipeline_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_scores(const fs::path& file, const std::vector<double>& scores) {
  fs::create_directories(file.parent_path());
  csv::Writer writer(file, 1, {"request_id", "label", "length", "log_prob", "perplexity"});
  for (std::size_t i = 0; i < scores.size(); ++i)
    writer.row({std::to_string(i), "x", "10", "0", csv::format_double(scores[i])});
  writer.finish();
}

trace::Request request_of(std::size_t n, const std::string& label) {
  trace::Request r;
  r.label = label;
  for (std::size_t i = 0; i < n; ++i) {
    trace::SyscallEvent e;
    e.name = "read";
    e.ts_ns = static_cast<std::int64_t>(1000 * i);
    e.procname = "p";
    r.events.push_back(e);
  }
  trace::compute_deltas(r);
  r.duration_ns = r.events.empty() ? 0 : r.events.back().ts_ns;
  return r;
}

// Scores "ood"-labeled requests as less likely; enough to drive the
// detection plumbing end to end.
class LabelAwareModel : public lm::LanguageModel {
 public:
  LabelAwareModel() {
    vocab_ = encode::build_vocab({request_of(1, "id")}, 1);
  }
  std::string arch_name() const override { return "stub"; }
  int name_vocab_size() const override { return 4; }
  const encode::Vocabulary& vocabulary() const override { return vocab_; }
  Eigen::MatrixXd conditionals(const trace::Request& request) const override {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(request.events.size()), 4);
    rows.setConstant(0.25);
    return rows;
  }
  std::vector<double> target_log_probs(const trace::Request& request) const override {
    const double p = request.label == "ood" ? 0.2 : 0.8;
    return std::vector<double>(request.events.size(), std::log(p));
  }

 private:
  encode::Vocabulary vocab_;
};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("stats on lengths {2,4,6} gives mean 4, min 2, max 6") {
  TempDir tmp;
  const fs::path split = tmp.path / "dataset" / "train_id";
  fs::create_directories(split);
  trace::write_request_file(split / "requests.jsonl",
                            {request_of(2, "id"), request_of(4, "id"), request_of(6, "id")});
  pipeline::cmd_stats(tmp.path / "dataset", tmp.path / "stats.csv", 5);
  const csv::Table table = csv::read_csv(tmp.path / "stats.csv");
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0][table.column_index("split")] == "train_id");
  CHECK(table.rows[0][table.column_index("count")] == "3");
  CHECK(std::stod(table.rows[0][table.column_index("len_mean")]) == 4.0);
  CHECK(std::stod(table.rows[0][table.column_index("len_min")]) == 2.0);
  CHECK(std::stod(table.rows[0][table.column_index("len_max")]) == 6.0);
}

TEST_CASE("report emits one row per model x behavior") {
  TempDir tmp;
  const std::vector<std::string> models = {"ngram", "lstm", "transformer", "longformer"};
  const std::vector<std::string> behaviors = {"latency", "mixture"};
  for (const auto& model : models) {
    write_scores(tmp.path / "scores" / model / "test_id.csv", {1.0, 1.1, 1.2});
    for (const auto& behavior : behaviors) {
      write_scores(tmp.path / "scores" / model / ("test_" + behavior + ".csv"), {2.0, 2.2});
      fs::create_directories(tmp.path / "thresholds" / model);
      csv::Writer writer(tmp.path / "thresholds" / model / (behavior + ".csv"), 1,
                         {"behavior", "threshold", "val_f_score"});
      writer.row({behavior, "1.5", "1"});
      writer.finish();
    }
  }
  pipeline::cmd_report(tmp.path, models, behaviors, tmp.path / "report.csv", 9);
  const csv::Table table = csv::read_csv(tmp.path / "report.csv");
  CHECK(table.rows.size() == 8);  // 4 models x 2 behaviors
  for (const auto& row : table.rows) {
    CHECK(std::stod(row[table.column_index("f_score")]) == 1.0);
    CHECK(std::stod(row[table.column_index("auroc")]) == 1.0);
  }
}

TEST_CASE("report is a pure function of the score and threshold files") {
  TempDir tmp;
  write_scores(tmp.path / "scores" / "m" / "test_id.csv", {1.0, 2.0, 3.0});
  write_scores(tmp.path / "scores" / "m" / "test_b.csv", {2.5, 3.5});
  fs::create_directories(tmp.path / "thresholds" / "m");
  {
    csv::Writer writer(tmp.path / "thresholds" / "m" / "b.csv", 1,
                       {"behavior", "threshold", "val_f_score"});
    writer.row({"b", "2.25", "0.9"});
    writer.finish();
  }
  auto bytes = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  pipeline::cmd_report(tmp.path, {"m"}, {"b"}, tmp.path / "r1.csv", 9);
  pipeline::cmd_report(tmp.path, {"m"}, {"b"}, tmp.path / "r2.csv", 9);
  CHECK(bytes(tmp.path / "r1.csv") == bytes(tmp.path / "r2.csv"));
}

TEST_CASE("evaluate_detection applies the validation threshold unchanged") {
  const LabelAwareModel model;
  std::vector<trace::Request> id_test, ood_test;
  for (std::size_t i = 0; i < 10; ++i) {
    id_test.push_back(request_of(8 + i, "id"));
    ood_test.push_back(request_of(8 + i, "ood"));
  }
  // calibrate on validation-like scores: ID at 1/0.8, OOD at 1/0.2
  detect::ThresholdModel tm = detect::calibrate_threshold({1.0 / 0.8}, {1.0 / 0.2}, "b");
  const detect::MetricsReport report = detect::evaluate_detection(model, tm, id_test, ood_test);
  CHECK(report.f_score == 1.0);
  CHECK(report.auroc == 1.0);
  CHECK(report.tp == 10);
  CHECK(report.tn == 10);
  CHECK(report.tp + report.fp + report.tn + report.fn == 20);
  CHECK_THROWS_AS(detect::evaluate_detection(model, tm, {}, ood_test), std::invalid_argument);
}

TEST_CASE("calibrate pools several OOD score files") {
  TempDir tmp;
  write_scores(tmp.path / "id.csv", {1.0, 1.2, 1.4});
  write_scores(tmp.path / "ood_a.csv", {2.0, 2.1});
  write_scores(tmp.path / "ood_b.csv", {3.0, 3.2});
  const auto tm = pipeline::cmd_calibrate(tmp.path / "id.csv",
                                          {tmp.path / "ood_a.csv", tmp.path / "ood_b.csv"},
                                          "pooled", tmp.path / "thr.csv", 3);
  CHECK(tm.val_f_score == 1.0);
  CHECK(tm.threshold > 1.4);
  CHECK(tm.threshold <= 2.0);
  const auto reread = pipeline::threshold_from_csv(tmp.path / "thr.csv");
  CHECK(reread.threshold == tm.threshold);
  CHECK(reread.behavior == "pooled");
}

TEST_CASE("ingest delimits a raw event file onto disk") {
  TempDir tmp;
  const fs::path events = tmp.path / "events.jsonl";
  {
    std::ofstream out(events);
    out << R"({"ts":0,"name":"request_enter","tid":1})" << "\n"
        << R"({"ts":5,"name":"read","ret":1,"proc":"srv","tid":2,"pid":2,"entry":true})" << "\n"
        << R"({"ts":9,"name":"request_exit","tid":1})" << "\n"
        << R"({"ts":11,"name":"request_enter","tid":1})" << "\n";
  }
  const std::size_t dropped = pipeline::cmd_ingest(events, tmp.path / "requests.jsonl", "web");
  CHECK(dropped == 1);
  const auto requests = trace::read_request_file(tmp.path / "requests.jsonl");
  REQUIRE(requests.size() == 1);
  CHECK(requests[0].label == "web");
  CHECK(requests[0].events.size() == 1);
}

}  // TEST_SUITE
