// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion that was run failed.
//
//   acceptance [--work DIR]     criteria 1-10 on the synthetic lab dump
//   acceptance --ibrl-full      full-scale run on the real dump named by
//                               WSNAD_IBRL_DATA (and WSNAD_IBRL_COORDS);
//                               exits 77 when the dump is not available

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anomaly.hpp"
#include "detector.hpp"
#include "evaluator.hpp"
#include "gradcheck.hpp"
#include "ingest.hpp"
#include "layers.hpp"
#include "oracles.hpp"
#include "scoring.hpp"
#include "synthetic_lab.hpp"

namespace fs = std::filesystem;
using namespace wsnad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string pct(double v) { return fmt(100.0 * v, 3) + "%"; }

struct Verdict {
  bool pass = false;
  std::string detail;
};

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_adjacency(std::size_t p, Rng& rng) {
  Tensor a({p, p}, 0.0);
  const bool weighted = rng.uniform() < 0.3;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (rng.uniform() < 0.55) a(i, j) = weighted ? rng.uniform(-1.0, 1.0) : 1.0;
    }
    if (a(i, i) == 0.0 && rng.uniform() < 0.5) a(i, i) = 1.0;
    bool any = false;
    for (std::size_t j = 0; j < p; ++j) any = any || a(i, j) != 0.0;
    if (!any) a(i, rng.index(p)) = 1.0;
  }
  return a;
}

// ---------------------------------------------------------------- criteria

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck({});
  const double sec = seconds_since(t0);
  return {r.passed && r.max_error < 1e-4 && sec < 10.0,
          "max relative error " + fmt(r.max_error, 3) + " over " + std::to_string(r.parameters.size()) +
              " parameters (M=3 N=2 W=4 D=3, 1 layer, eps 1e-5), " + fmt(sec, 3) + " s"};
}

Verdict layer_oracles() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double gat_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t p = 3 + rng.index(4);
    const std::size_t fin = 1 + rng.index(6);
    const std::size_t fout = 1 + rng.index(6);
    GatLayer layer = GatLayer::create("g", fin, fout, k % 2 ? Activation::kRelu : Activation::kIdentity, rng);
    const Tensor h = random_matrix(p, fin, rng, -2.0, 2.0);
    const Tensor adj = random_adjacency(p, rng);
    Tape tape(false);
    const GatResult got = gat_forward(tape, layer, tape.constant(h), adj);
    const auto want = testing::gat_oracle(layer, testing::to_matrix(h), testing::to_matrix(adj));
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t o = 0; o < fout; ++o)
        gat_err = std::max(gat_err, std::abs(got.features.value()(i, o) - want.output[i][o]));
    }
  }
  double gru_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t fin = 1 + rng.index(3);
    const std::size_t d = 1 + rng.index(6);
    const std::size_t len = 1 + rng.index(12);
    GruCell cell = GruCell::create("gru", fin, d, 1 + rng.index(2), rng);
    const Tensor seq = random_matrix(len, fin, rng, -2.0, 2.0);
    Tape tape(false);
    const Tensor got = gru_run(tape, cell, tape.constant(seq)).value();
    const auto want = testing::gru_run_oracle(cell, testing::to_matrix(seq));
    for (std::size_t i = 0; i < d; ++i) gru_err = std::max(gru_err, std::abs(got[i] - want[i]));
  }
  const double sec = seconds_since(t0);
  return {gat_err <= 1e-10 && gru_err <= 1e-10 && sec < 10.0,
          "gat max |diff| " + fmt(gat_err, 3) + " (100 graphs, 3-6 nodes), gru max |diff| " + fmt(gru_err, 3) +
              " (100 cells), " + fmt(sec, 3) + " s"};
}

Verdict attention_normalization() {
  Rng rng(77);
  double worst = 0.0;
  std::size_t leaks = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t p = 1 + rng.index(10);
    const std::size_t fin = 1 + rng.index(8);
    const std::size_t fout = 1 + rng.index(8);
    GatLayer layer = GatLayer::create("g", fin, fout, Activation::kIdentity, rng);
    const Tensor adj = random_adjacency(p, rng);
    Tape tape(false);
    const Tensor alpha =
        gat_forward(tape, layer, tape.constant(random_matrix(p, fin, rng, -3.0, 3.0)), adj).attention.value();
    for (std::size_t i = 0; i < p; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        row += alpha(i, j);
        if (adj(i, j) == 0.0 && alpha(i, j) != 0.0) ++leaks;
      }
      worst = std::max(worst, std::abs(row - 1.0));
    }
  }
  return {worst <= 1e-12 && leaks == 0,
          "max |row sum - 1| " + fmt(worst, 3) + ", nonzero weights at non-neighbours " + std::to_string(leaks) +
              " (1000 calls)"};
}

Verdict preprocessing(const PreparedData& data) {
  const FlowTensor& n = data.normalized.train;
  double mean_err = 0.0, sd_err = 0.0;
  for (std::size_t i = 0; i < n.nodes; ++i) {
    for (std::size_t j = 0; j < n.modes; ++j) {
      const auto s = n.series(i, j);
      const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
      double sq = 0.0;
      for (double x : s) sq += (x - mean) * (x - mean);
      mean_err = std::max(mean_err, std::abs(mean));
      sd_err = std::max(sd_err, std::abs(std::sqrt(sq / static_cast<double>(s.size())) - 1.0));
    }
  }
  FlowTensor volt = data.raw.train;
  const auto vj = volt.mode_index("voltage");
  bool exact = false;
  if (vj) {
    const NormStats mm = fit_norm(volt, NormKind::kMaxMin);
    exact = mm.apply(0, *vj, 2.0) == 0.0 && mm.apply(0, *vj, 3.0) == 1.0;
  }
  return {mean_err < 1e-9 && sd_err < 1e-9 && exact,
          "max |mean| " + fmt(mean_err, 3) + ", max |sd - 1| " + fmt(sd_err, 3) + " over " +
              std::to_string(n.nodes * n.modes) + " training series; maxmin voltage 2->0, 3->1 " +
              (exact ? "exact" : "NOT exact")};
}

// Independent restatement of the four fault formulas.
double reference_fault(int type, double x, double range, int sign, double p, double q) {
  switch (type) {
    case 1: return x + sign * (range / p);
    case 2: return x + sign * (range / q);
    case 3: return x + sign * range;
    default: return 0.0;
  }
}

Verdict injection_exactness(const PreparedData& data) {
  const FlowTensor& raw = data.raw.test;
  Rng rng(5150);
  std::size_t cases = 0, mismatches = 0, zero_count_errors = 0;
  for (int k = 0; k < 400; ++k) {
    AnomalySpec s;
    const int type = 1 + k % 4;
    s.type = anomaly_type_from_int(type);
    s.duration = default_duration(s.type);
    s.node = rng.index(raw.nodes);
    s.mode = rng.index(raw.modes);
    s.start = rng.index(raw.length - s.duration);
    s.sign = rng.uniform() < 0.5 ? -1 : 1;
    s.p = 10.0 + 4.0 * static_cast<double>(rng.index(4));
    s.q = 6.0 + 3.0 * static_cast<double>(rng.index(4));
    const FlowTensor out = inject(raw, s, data.ranges);
    const double range = data.ranges.hi[s.mode] - data.ranges.lo[s.mode];
    std::size_t zeros = 0;
    for (std::size_t t = 0; t < raw.length; ++t) {
      for (std::size_t i = 0; i < raw.nodes; ++i) {
        for (std::size_t j = 0; j < raw.modes; ++j) {
          const bool touched = i == s.node && j == s.mode && t >= s.start && t < s.start + s.duration;
          const double want = touched ? reference_fault(type, raw.at(t, i, j), range, s.sign, s.p, s.q) : raw.at(t, i, j);
          if (std::bit_cast<std::uint64_t>(want) != std::bit_cast<std::uint64_t>(out.at(t, i, j))) ++mismatches;
          if (touched && out.at(t, i, j) == 0.0) ++zeros;
        }
      }
    }
    if (type == 4 && zeros != s.duration) ++zero_count_errors;
    ++cases;
  }
  return {mismatches == 0 && zero_count_errors == 0,
          std::to_string(cases) + " injections, " + std::to_string(mismatches) +
              " entries differing bit-wise from the reference, " + std::to_string(zero_count_errors) +
              " zero-turn count errors"};
}

// A detector that alarms on a fraction f of all trials regardless of content,
// with the protocol's even injected/clean split, scores F1 = f / (0.5 + f).
double false_alarm_baseline(const DetectionReport& r) {
  const std::size_t clean = r.fp + r.tn;
  const double f = clean ? static_cast<double>(r.fp) / static_cast<double>(clean) : 0.0;
  return f / (0.5 + f);
}

struct SeedRun {
  std::uint64_t seed;
  DetectionReport report;
};

std::vector<SeedRun> evaluate_seeds(const DetectorModel& m, double thr, const PreparedData& d,
                                    std::vector<TrialOutcome>* first_outcomes = nullptr) {
  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ProtocolOptions o;
    o.seed = seed;
    runs.push_back({seed, evaluate(m, thr, d, o, nullptr, seed == 1 ? first_outcomes : nullptr)});
  }
  return runs;
}

double mean_f1(const std::vector<SeedRun>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.report.metrics.f1.value_or(0.0);
  return s / static_cast<double>(runs.size());
}

std::string seed_f1s(const std::vector<SeedRun>& runs) {
  std::string out;
  for (const auto& r : runs) out += (out.empty() ? "" : "/") + pct(r.report.metrics.f1.value_or(0.0));
  return out;
}

// Non-increasing, tolerating one adjacent rise of at most two points.
bool non_increasing(const std::vector<double>& v, std::string& why) {
  std::size_t rises = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    const double rise = v[k] - v[k - 1];
    if (rise > 0.02 + 1e-12) {
      why = "rise of " + fmt(100.0 * rise, 3) + " points at step " + std::to_string(k);
      return false;
    }
    if (rise > 0.0) ++rises;
  }
  if (rises > 1) {
    why = std::to_string(rises) + " rises";
    return false;
  }
  return true;
}

Verdict sensitivity(const DetectorModel& m, double thr, const PreparedData& d) {
  std::string detail;
  bool pass = true;
  for (const auto& [type, name, grid] :
       {std::tuple{AnomalyType::kSlowChange, "p", std::vector<double>{10, 14, 18, 22}},
        std::tuple{AnomalyType::kFastChange, "q", std::vector<double>{6, 9, 12, 15}}}) {
    ProtocolOptions base;
    const auto points = sensitivity_sweep(m, thr, d, type, grid, base);
    std::vector<double> precision;
    std::string row;
    for (const auto& pt : points) {
      // No alarms at all counts as zero precision.
      precision.push_back(pt.report.metrics.precision.value_or(0.0));
      row += (row.empty() ? "" : " ") + std::string(name) + "=" + fmt(pt.value) + ":" +
             (pt.report.metrics.precision ? pct(*pt.report.metrics.precision) : "n/a") + "(tp" +
             std::to_string(pt.report.tp) + ",fp" + std::to_string(pt.report.fp) + ")";
    }
    std::string why;
    // With no alarm even at the strongest offset there is no trend to measure.
    const bool measurable = !points.empty() && points.front().report.metrics.precision.has_value();
    if (!measurable) why = "no alarms at " + std::string(name) + "=" + fmt(grid.front());
    const bool ok = measurable && non_increasing(precision, why);
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + row + (ok ? "" : " [" + why + "]");
  }
  return {pass, detail};
}

}  // namespace

// ---------------------------------------------------------------- driver

namespace {

struct Settings {
  std::size_t nodes = 10;
  std::size_t window = 30;
  std::size_t epochs = 10;
  std::size_t length = 1000;
};

DetectorConfig smoke_config(const Settings& s) {
  DetectorConfig c;
  c.window = s.window;
  c.epochs = s.epochs;
  return c;
}

int run_synthetic(const fs::path& work) {
  int failures = 0;
  auto report = [&](int id, const std::string& title, const Verdict& v) {
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << v.detail << std::endl;
    if (!v.pass) ++failures;
  };

  report(1, "gradient fidelity", gradient_fidelity());
  report(2, "layer oracles", layer_oracles());
  report(3, "attention normalization", attention_normalization());

  // The smoke pipeline: synthetic lab dump -> ingest -> train -> calibrate -> evaluate.
  const Settings settings;
  const auto t0 = Clock::now();
  fs::create_directories(work);
  testing::SyntheticLab lab;
  lab.write_dump(work / "data.txt");
  lab.write_coordinates(work / "mote_locs.txt");
  ParseCounts counts;
  const auto readings = parse_readings_file(work / "data.txt", &counts);
  BuildOptions build;
  build.node_count = settings.nodes;
  build.length = settings.length;
  FlowTensor flow = build_flow(readings, build);
  flow.coordinates = parse_coordinates_file(work / "mote_locs.txt").select(flow.node_ids);
  const DetectorConfig config = smoke_config(settings);
  const PreparedData data = prepare_data(flow, config);

  report(4, "preprocessing", preprocessing(data));
  report(5, "injection exactness", injection_exactness(data));

  const TrainResult trained = train(config, data.normalized.train, data.normalized.validation, data.norm);
  const double threshold = calibrate_threshold(trained.model, data.normalized.validation);
  std::vector<TrialOutcome> outcomes;
  const auto full_runs = evaluate_seeds(trained.model, threshold, data, &outcomes);
  const double smoke_sec = seconds_since(t0);
  double baseline = 0.0;
  for (const auto& r : full_runs) baseline += false_alarm_baseline(r.report);
  baseline /= static_cast<double>(full_runs.size());
  const double f1 = mean_f1(full_runs);
  const DetectionReport& first = full_runs.front().report;
  report(6, "end-to-end smoke variant",
         {f1 > baseline && smoke_sec < 300.0,
          std::to_string(settings.nodes) + " nodes x " + std::to_string(flow.modes) + " modes x " +
              std::to_string(settings.length) + ", W=" + std::to_string(config.window) + ", " +
              std::to_string(config.epochs) + " epochs: F1 " + pct(f1) + " (seeds " + seed_f1s(full_runs) +
              "; seed 1 Prec " + pct(first.metrics.precision.value_or(0)) + " Rec " +
              pct(first.metrics.recall.value_or(0)) + ") vs false-alarm baseline " + pct(baseline) + ", " +
              fmt(smoke_sec, 3) + " s"});
  std::cout << "[BLOCKED] 6. end-to-end full scale (50x3x3000, W=60, 60 epochs): needs the Intel lab dump; "
               "run the acceptance.ibrl_full test with WSNAD_IBRL_DATA set"
            << std::endl;

  report(7, "sensitivity trend", sensitivity(trained.model, threshold, data));

  {
    std::string detail = "full " + pct(f1) + " (" + seed_f1s(full_runs) + ")";
    bool pass = true;
    for (const auto& [flag, name] : {std::pair{Ablation{.mode = true}, "no mode GAT"},
                                     std::pair{Ablation{.time = true}, "no time GAT"},
                                     std::pair{Ablation{.node = true}, "no node GAT"}}) {
      DetectorConfig ac = config;
      ac.ablation = flag;
      const TrainResult ab = train(ac, data.normalized.train, data.normalized.validation, data.norm);
      const double thr = calibrate_threshold(ab.model, data.normalized.validation);
      const auto runs = evaluate_seeds(ab.model, thr, data);
      const double af1 = mean_f1(runs);
      for (std::size_t k = 0; k < runs.size(); ++k) {
        pass = pass && runs[k].report.metrics.f1.value_or(0.0) < full_runs[k].report.metrics.f1.value_or(0.0);
      }
      detail += ", " + std::string(name) + " " + pct(af1) + " (" + seed_f1s(runs) + ")";
    }
    report(8, "ablation ordering (F1 per protocol seed 1-3, each strictly below the full model)", {pass, detail});
  }

  {
    Rng rng(31337);
    std::size_t misses = 0;
    for (int k = 0; k < 1000; ++k) {
      const std::size_t m = 1 + rng.index(50);
      const std::size_t n = 1 + rng.index(4);
      Tensor s = random_matrix(m, n, rng, -3.0, 3.0);
      Tensor pred = s;
      const std::size_t i = rng.index(m);
      pred(i, rng.index(n)) += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1e-6, 10.0);
      if (inference_score(node_scores(s, pred)).node != i) ++misses;
    }
    std::vector<double> grid{0.0};
    for (const auto& o : outcomes) grid.insert(grid.end(), o.scores.begin(), o.scores.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    std::size_t violations = 0;
    std::size_t tp = SIZE_MAX, fp = SIZE_MAX;
    for (double thr : grid) {
      const DetectionReport r = score_trials(outcomes, 8, thr);
      if (r.tp > tp || r.fp > fp) ++violations;
      tp = r.tp;
      fp = r.fp;
    }
    report(9, "scoring properties",
           {misses == 0 && violations == 0,
            "argmax misses " + std::to_string(misses) + "/1000; threshold sweep over " +
                std::to_string(grid.size()) + " levels of a " + std::to_string(outcomes.size()) +
                "-trial ledger, monotonicity violations " + std::to_string(violations)});
  }

  {
    DetectorConfig c = config;
    c.epochs = 2;
    const auto a = train(c, data.normalized.train, data.normalized.validation, data.norm);
    const auto b = train(c, data.normalized.train, data.normalized.validation, data.norm);
    save_checkpoint(a.model, work / "a" / "model.json");
    save_checkpoint(b.model, work / "b" / "model.json");
    auto bytes = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const bool same_ckpt = bytes(work / "a" / "model.bin") == bytes(work / "b" / "model.bin") &&
                           bytes(work / "a" / "model.json") == bytes(work / "b" / "model.json");
    const DetectorModel loaded = load_checkpoint(work / "a" / "model.json");
    bool same_pred = true;
    const WindowView view = windows(data.normalized.test, c.window);
    for (std::size_t k = 0; k < view.size(); k += 7) {
      const Tensor x = predict(a.model, view[k]);
      const Tensor y = predict(loaded, view[k]);
      same_pred = same_pred && std::memcmp(x.values().data(), y.values().data(), x.size() * sizeof(double)) == 0;
    }
    report(10, "determinism and persistence",
           {same_ckpt && same_pred, std::string("checkpoints from identical seeds ") +
                                        (same_ckpt ? "bit-identical" : "DIFFER") + "; reloaded predictions " +
                                        (same_pred ? "bit-identical" : "DIFFER")});
  }

  fs::remove_all(work);
  std::cout << (failures ? std::to_string(failures) + " criterion/criteria failed" : "all criteria run passed")
            << std::endl;
  return failures ? 1 : 0;
}

int run_ibrl_full() {
  const char* data_path = std::getenv("WSNAD_IBRL_DATA");
  if (!data_path || !fs::exists(data_path)) {
    std::cout << "[BLOCKED] 6. end-to-end full scale: WSNAD_IBRL_DATA does not name the Intel lab dump "
                 "(data.txt or data.txt.gz); skipped"
              << std::endl;
    return 77;
  }
  const auto t0 = Clock::now();
  const auto readings = parse_readings_file(data_path);
  FlowTensor flow = build_flow(readings, BuildOptions{});
  if (const char* coords = std::getenv("WSNAD_IBRL_COORDS")) {
    flow.coordinates = parse_coordinates_file(coords).select(flow.node_ids);
  }
  DetectorConfig config;  // W=60, D=32, 2 GRU layers, 60 epochs, lr 5e-5
  const PreparedData data = prepare_data(flow, config);
  const TrainResult trained =
      train(config, data.normalized.train, data.normalized.validation, data.norm, [](const EpochStats& e) {
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss << std::endl;
      });
  const double threshold = calibrate_threshold(trained.model, data.normalized.validation);
  const auto runs = evaluate_seeds(trained.model, threshold, data);
  const double sec = seconds_since(t0);
  const double f1 = mean_f1(runs);
  const bool pass = f1 >= 0.80 && sec <= 7200.0;
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << "6. end-to-end full scale: F1 " << pct(f1) << " (seeds "
            << seed_f1s(runs) << "), threshold " << fmt(threshold) << ", " << fmt(sec, 4) << " s" << std::endl;
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "wsnad_acceptance";
  bool full = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--ibrl-full") full = true;
    else if (a == "--work" && i + 1 < argc) work = argv[++i];
    else {
      std::cerr << "usage: acceptance [--work DIR] | --ibrl-full\n";
      return 2;
    }
  }
  try {
    return full ? run_ibrl_full() : run_synthetic(work);
  } catch (const std::exception& e) {
    std::cout << "[FAIL] aborted: " << e.what() << std::endl;
    return 1;
  }
}
