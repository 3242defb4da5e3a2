#include <algorithm>
#include <sstream>

#include "doctest.h"

#include "anomaly.hpp"
#include "evaluator.hpp"
#include "scoring.hpp"
#include "synthetic_lab.hpp"

using namespace wsnad;

TEST_CASE("node scores") {
  const Tensor s = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  for (double v : node_scores(s, s)) CHECK(v == 0.0);
  Tensor t = s;
  t(1, 2) += 0.5;
  CHECK(node_scores(s, t) == std::vector<double>{0.0, 0.25});
  CHECK(node_scores(Tensor::matrix(1, 3, {1, 2, 3}), Tensor::zeros(1, 3)) == std::vector<double>{14.0});
  CHECK_THROWS_AS(node_scores(s, Tensor::zeros(3, 2)), Error);
}

TEST_CASE("inference score") {
  const InferenceScore a = inference_score(std::vector<double>{0.1, 0.5, 0.2});
  CHECK(a.score == 0.5);
  CHECK(a.node == 1);
  const InferenceScore tie = inference_score(std::vector<double>{0.3, 0.3, 0.3});
  CHECK(tie.node == 0);
  CHECK(inference_score(std::vector<double>{2.5}).score == 2.5);
}

TEST_CASE("argmax localizes a single deviation") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.index(12);
    const std::size_t n = 1 + rng.index(4);
    Tensor s({m, n});
    for (double& v : s.data()) v = rng.uniform(-3, 3);
    Tensor pred = s;
    const std::size_t i = rng.index(m);
    const std::size_t j = rng.index(n);
    pred(i, j) += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1e-3, 5.0);
    const InferenceScore r = inference_score(node_scores(s, pred));
    CHECK(r.node == i);
  }
}

namespace {

struct Fixture {
  DetectorConfig config;
  PreparedData data;
  DetectorModel model;

  Fixture() {
    config.window = 8;
    config.hidden = 4;
    config.gru_layers = 1;
    config.epochs = 2;
    config.learning_rate = 1e-3;
    testing::SyntheticLab lab;
    lab.days = 1.0;
    data = prepare_data(lab.flow(4, 200), config);
    model = train(config, data.normalized.train, data.normalized.validation, data.norm).model;
  }
};

}  // namespace

TEST_CASE("score curves and threshold") {
  const Fixture f;
  const ScoreSeries curve = score_curve(f.model, f.data.normalized.test);
  CHECK(curve.size() == f.data.normalized.test.length - f.config.window);
  CHECK(curve.first_index == f.config.window);
  CHECK(curve.at_target(f.config.window + 3) == curve.scores[3]);
  CHECK_FALSE(curve.exceeds(0));

  const double thr = calibrate_threshold(f.model, f.data.normalized.validation);
  const ScoreSeries val = score_curve(f.model, f.data.normalized.validation);
  CHECK(thr == *std::max_element(val.scores.begin(), val.scores.end()));
  CHECK(calibrate_threshold(f.model, f.data.normalized.validation) == thr);

  const InferenceScore direct = score_target(f.model, f.data.normalized.test, f.config.window + 5);
  CHECK(direct.score == curve.scores[5]);
  CHECK(direct.node == curve.argmax[5]);
}

TEST_CASE("zero-turn injection raises the score at its timestamp") {
  const Fixture f;
  const std::size_t t = f.config.window + 4;
  const ScoreSeries clean = score_curve(f.model, f.data.normalized.test);
  for (std::size_t node = 0; node < 4; ++node) {
    AnomalySpec spec;
    spec.type = AnomalyType::kZeroTurn;
    spec.node = node;
    spec.mode = 1;  // humidity: raw zero is far outside the training range
    spec.start = t;
    spec.duration = 1;
    const FlowTensor injected = inject_normalized(f.data.normalized.test, spec, f.data.ranges, f.data.norm);
    const ScoreSeries hit = score_curve(f.model, injected);
    CHECK(hit.at_target(t) > clean.at_target(t));
    CHECK(hit.argmax[t - f.config.window] == node);
  }
}

TEST_CASE("score csv") {
  ScoreSeries s;
  s.first_index = 3;
  s.scores = {0.5, 2.0};
  s.argmax = {1, 0};
  std::ostringstream out;
  const int ids[] = {11, 22};
  write_score_csv(out, s, ids, {{"note", "x"}});
  std::string text = out.str();
  CHECK(text.find("t,score,argmax_node\n3,0.5,22\n4,2,11\n") != std::string::npos);
  CHECK(text.rfind("#", 0) == 0);

  s.threshold = 1.0;
  std::ostringstream out2;
  write_score_csv(out2, s, ids, nlohmann::json::object());
  CHECK(out2.str().find("t,score,argmax_node,exceeds\n3,0.5,22,0\n4,2,11,1\n") != std::string::npos);
}
