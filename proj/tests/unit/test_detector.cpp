#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "detector.hpp"
#include "evaluator.hpp"
#include "gradcheck.hpp"
#include "synthetic_lab.hpp"

using namespace wsnad;

namespace {

DetectorConfig small_config() {
  DetectorConfig c;
  c.window = 6;
  c.hidden = 4;
  c.gru_layers = 1;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  c.seed = 7;
  return c;
}

PreparedData small_data(const DetectorConfig& c, std::size_t nodes = 3, std::size_t length = 120) {
  testing::SyntheticLab lab;
  lab.days = 1.0;
  return prepare_data(lab.flow(nodes, length, {"temperature", "humidity"}), c);
}

DetectorModel small_model(const DetectorConfig& c, const PreparedData& d) {
  return create_detector(c, d.raw.train.nodes, d.raw.train.modes, build_graphs(c, d.normalized.train), d.norm);
}

std::size_t gat_size(std::size_t f) { return f * f + 2 * f; }

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config validation") {
  DetectorConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.window = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.split = {0.5, 0.1, 0.1};
  CHECK_THROWS_AS(c.validate(), Error);

  CHECK_THROWS_AS(config_from_json({{"windw", 3}}), Error);
  DetectorConfig d = small_config();
  d.ablation.time = true;
  d.node_graph = NodeGraph::kTopK;
  const DetectorConfig e = config_from_json(to_json(d));
  CHECK(to_json(e) == to_json(d));
}

TEST_CASE("forward produces an M x N prediction") {
  const DetectorConfig c = small_config();
  const PreparedData d = small_data(c);
  const DetectorModel m = small_model(c, d);
  ForwardTrace trace;
  Tape tape(false);
  const WindowBatch b = windows(d.normalized.train, c.window)[0];
  Var out = forward(tape, m, b, &trace);
  CHECK(out.value().shape() == Shape{3, 2});
  CHECK(trace.prediction == Shape{3, 2});
  CHECK(m.sequence_length() == 3 * c.window);
  CHECK(trace.node_attention.shape() == Shape{3, 3});
}

TEST_CASE("a single node attends only to itself") {
  const DetectorConfig c = small_config();
  const PreparedData d = small_data(c, 1);
  const DetectorModel m = small_model(c, d);
  ForwardTrace trace;
  Tape tape(false);
  forward(tape, m, windows(d.normalized.train, c.window)[3], &trace);
  CHECK(trace.node_attention.item() == 1.0);
}

TEST_CASE("ablation bookkeeping") {
  const DetectorConfig c = small_config();
  const PreparedData d = small_data(c);
  const DetectorModel full = small_model(c, d);

  CHECK(ablate(full, {}).parameter_count() == full.parameter_count());
  CHECK(ablate(full, {.mode = true}).parameter_count() == full.parameter_count() - gat_size(c.window));
  CHECK(ablate(full, {.time = true}).parameter_count() == full.parameter_count() - gat_size(2));
  CHECK(ablate(full, {.node = true}).parameter_count() == full.parameter_count() - gat_size(2));

  const DetectorModel both = ablate(full, {.mode = true, .time = true});
  CHECK(both.sequence_length() == c.window);
  Tape tape(false);
  CHECK(forward(tape, both, windows(d.normalized.train, c.window)[0]).value().shape() == Shape{3, 2});

  // Every surviving block keeps the full model's initial weights.
  const DetectorModel bare = ablate(full, {.mode = true, .time = true, .node = true});
  for (const Parameter* p : bare.parameters()) {
    bool found = false;
    for (const Parameter* q : full.parameters())
      if (q->name == p->name) found = q->value.values() == p->value.values();
    CHECK(found);
  }
  CHECK(bare.parameter_count() == full.parameter_count() - gat_size(c.window) - 2 * gat_size(2));
}

TEST_CASE("loss") {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(mean_squared_error(std::vector<Tensor>{a}, std::vector<Tensor>{a}) == 0.0);
  CHECK(mean_squared_error(std::vector<Tensor>{Tensor::scalar(1.5)}, std::vector<Tensor>{Tensor::scalar(-0.5)}) == 4.0);
  const std::vector<Tensor> pred{Tensor({2, 3}, 1.0), Tensor({2, 3}, 2.0)};
  const std::vector<Tensor> target{Tensor({2, 3}, 0.0), Tensor({2, 3}, 0.0)};
  CHECK(mean_squared_error(pred, target) == 2.5);

  Tape tape(false);
  CHECK(batch_loss(tape.constant(a), Tensor::zeros(2, 2)).value().item() == doctest::Approx(7.5));
}

TEST_CASE("training is deterministic and descends") {
  DetectorConfig c = small_config();
  c.epochs = 4;
  const PreparedData d = small_data(c, 3, 160);
  const TrainResult a = train(c, d.normalized.train, d.normalized.validation, d.norm);
  const TrainResult b = train(c, d.normalized.train, d.normalized.validation, d.norm);
  REQUIRE(a.history.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) CHECK(a.history[e].train_loss == b.history[e].train_loss);
  for (std::size_t k = 0; k < a.model.parameters().size(); ++k)
    CHECK(a.model.parameters()[k]->value.values() == b.model.parameters()[k]->value.values());
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  CHECK(a.history.front().validation_loss.has_value());
}

TEST_CASE("checkpoint round trip and failures") {
  const DetectorConfig c = small_config();
  const PreparedData d = small_data(c);
  const TrainResult r = train(c, d.normalized.train, d.normalized.validation, d.norm);
  TempDir dir("wsnad_ckpt_test");
  const auto meta = dir.path / "model.json";
  save_checkpoint(r.model, meta);
  const DetectorModel back = load_checkpoint(meta);
  const WindowBatch b = windows(d.normalized.test, c.window)[2];
  CHECK(predict(back, b).values() == predict(r.model, b).values());
  CHECK(to_json(back.config) == to_json(r.model.config));

  SUBCASE("truncated payload") {
    const auto bin = dir.path / "model.bin";
    std::filesystem::resize_file(bin, std::filesystem::file_size(bin) / 2);
    try {
      load_checkpoint(meta);
      FAIL("expected a checkpoint error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCheckpoint);
    }
  }
  SUBCASE("mismatched node count") {
    nlohmann::json doc;
    std::ifstream(meta) >> doc;
    doc["nodes"] = 4;
    std::ofstream(meta) << doc.dump();
    try {
      load_checkpoint(meta);
      FAIL("expected a dimension error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDimension);
    }
  }
  SUBCASE("flow with other extents") {
    const PreparedData other = small_data(c, 4);
    CHECK_THROWS_AS(check_compatible(back, other.normalized.test), Error);
  }
}

TEST_CASE("gradcheck") {
  const GradcheckReport ok = run_gradcheck({});
  CHECK(ok.passed);
  CHECK(ok.max_error < 1e-4);
  CHECK(ok.parameters.size() == 14);

  GradcheckOptions bad;
  bad.corrupt_op = OpKind::kGruSequence;
  const GradcheckReport broken = run_gradcheck(bad);
  CHECK_FALSE(broken.passed);
  bad.corrupt_op = OpKind::kSoftmaxRows;
  CHECK_FALSE(run_gradcheck(bad).passed);

  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
}
