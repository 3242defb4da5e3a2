#include "doctest.h"

#include "evaluator.hpp"

using namespace wsnad;

namespace {

TrialOutcome outcome(std::size_t t, bool injected, std::vector<double> scores) {
  TrialOutcome o;
  o.trial.t = t;
  if (injected) o.trial.anomaly = AnomalySpec{};
  o.scores = std::move(scores);
  o.argmax.assign(o.scores.size(), 0);
  return o;
}

std::vector<double> spike_at(std::size_t k, std::size_t len = 9) {
  std::vector<double> s(len, 0.1);
  if (k < len) s[k] = 5.0;
  return s;
}

}  // namespace

TEST_CASE("metric arithmetic") {
  CHECK(*f1_score(0.933, 0.875) == doctest::Approx(0.903).epsilon(1e-3));
  const Metrics m = metrics_from_counts(1, 0, 1);
  CHECK(*m.precision == 1.0);
  CHECK(*m.recall == 0.5);
  CHECK(*m.f1 == doctest::Approx(2.0 / 3.0));
  const Metrics none = metrics_from_counts(0, 0, 0);
  CHECK_FALSE(none.precision);
  CHECK_FALSE(none.recall);
  CHECK_FALSE(none.f1);
}

TEST_CASE("trial classification") {
  std::vector<TrialOutcome> outs;
  for (std::size_t k = 0; k < 10; ++k) outs.push_back(outcome(k, true, spike_at(k % 9)));
  for (std::size_t k = 0; k < 10; ++k) outs.push_back(outcome(100 + k, false, spike_at(99)));
  const DetectionReport r = score_trials(outs, 8, 1.0);
  CHECK(r.tp == 10);
  CHECK(r.tn == 10);
  CHECK(*r.metrics.f1 == 1.0);

  SUBCASE("delay window") {
    std::vector<TrialOutcome> two{outcome(0, true, spike_at(2, 10)), outcome(1, true, spike_at(9, 10))};
    const DetectionReport d = score_trials(two, 8, 1.0);
    CHECK(d.ledger[0].outcome == TrialClass::kTruePositive);
    CHECK(*d.ledger[0].first_exceedance == 2);
    CHECK(d.ledger[1].outcome == TrialClass::kFalseNegative);
  }
  SUBCASE("threshold is strict") {
    std::vector<TrialOutcome> one{outcome(0, false, std::vector<double>(9, 1.0))};
    CHECK(score_trials(one, 8, 1.0).tn == 1);
  }
}

TEST_CASE("raising the threshold never adds detections") {
  Rng rng(12);
  std::vector<TrialOutcome> outs;
  for (std::size_t k = 0; k < 300; ++k) {
    std::vector<double> s(9);
    for (double& v : s) v = rng.uniform(0.0, 3.0) * rng.uniform(0.0, 3.0);
    outs.push_back(outcome(k, k % 2 == 0, s));
  }
  std::size_t tp = SIZE_MAX, fp = SIZE_MAX;
  for (double thr = 0.0; thr <= 9.5; thr += 0.05) {
    const DetectionReport r = score_trials(outs, 8, thr);
    CHECK(r.tp <= tp);
    CHECK(r.fp <= fp);
    CHECK(r.tp + r.fn == 150);
    tp = r.tp;
    fp = r.fp;
  }
  CHECK(tp == 0);
  CHECK(fp == 0);
}

TEST_CASE("report json") {
  std::vector<TrialOutcome> outs{outcome(3, true, spike_at(1)), outcome(4, false, spike_at(0))};
  const DetectionReport r = score_trials(outs, 8, 1.0);
  const auto doc = to_json(r);
  CHECK(doc.at("counts").at("tp") == 1);
  CHECK(doc.at("counts").at("fp") == 1);
  CHECK(doc.at("ledger").size() == 2);
  CHECK_FALSE(to_json(r, false).contains("ledger"));
  CHECK(summary_table(r).find("F1") != std::string::npos);
}
