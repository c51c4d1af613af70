// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; the exit status is non-zero on any FAIL.

#include <cfloat>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "nailguard/dataset.hpp"
#include "nailguard/evaluation.hpp"
#include "nailguard/explain.hpp"
#include "nailguard/service.hpp"
#include "nailguard/synthdata.hpp"
#include "nailguard/training.hpp"
#include "oracles.hpp"

using namespace nailguard;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "violated: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------
void metrics_oracle(Outcome& o) {
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(6));
      // Bias towards agreement so every regime (perfect, empty, mixed) shows up.
      p[i] = rng.bernoulli(0.6) ? t[i] : static_cast<int>(rng.below(6));
    }
    const auto r = classification_report(confusion_matrix(t, p));
    const auto b = ngtest::brute_metrics(t, p, 6);
    auto track = [&](double got, const ngtest::Ratio& want) { worst = std::max(worst, std::abs(got - want.value())); };
    for (int c = 0; c < 6; ++c) {
      track(r.categories[c].precision, b.precision[c]);
      track(r.categories[c].recall, b.recall[c]);
      track(r.categories[c].f1, b.f1[c]);
      o.require(r.categories[c].support == b.support[c], "support");
    }
    track(r.accuracy, b.accuracy);
    track(r.macro_precision, b.macro_precision);
    track(r.macro_recall, b.macro_recall);
    track(r.macro_f1, b.macro_f1);
  }
  o.require(worst <= 1e-12, "max deviation <= 1e-12");
  o.detail << "500 label vectors, max deviation " << worst;
}

// 2 -------------------------------------------------------------------------
void hand_matrix(Outcome& o) {
  ConfusionMatrix m(2);
  const int cells[2][2] = {{2, 1}, {0, 3}};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < cells[i][j]; ++k) m.add(i, j);
    }
  }
  const auto r = classification_report(m);
  const double want[][2] = {{1.0, 0.75}, {2.0 / 3.0, 1.0}, {0.8, 6.0 / 7.0}};
  double worst = std::abs(r.accuracy - 5.0 / 6.0);
  for (int c = 0; c < 2; ++c) {
    worst = std::max(worst, std::abs(r.categories[c].precision - want[0][c]));
    worst = std::max(worst, std::abs(r.categories[c].recall - want[1][c]));
    worst = std::max(worst, std::abs(r.categories[c].f1 - want[2][c]));
  }
  o.require(worst <= 1e-9, "within 1e-9");
  o.detail << "precision (" << r.categories[0].precision << ", " << r.categories[1].precision << "), recall ("
           << r.categories[0].recall << ", " << r.categories[1].recall << "), f1 (" << r.categories[0].f1 << ", "
           << r.categories[1].f1 << "), accuracy " << r.accuracy;
}

// 3 -------------------------------------------------------------------------
void split_properties(Outcome& o) {
  Rng rng(3003);
  std::size_t categories_checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::size_t> sizes;
    for (int c = 0; c < 6; ++c) sizes.push_back(3 + rng.below(498));
    const auto m = ngtest::fake_manifest(sizes);
    const std::uint64_t seed = rng.next();
    const auto s = split(m, seed);
    for (int c = 0; c < 6; ++c) {
      std::size_t n_part[3] = {0, 0, 0};
      for (const auto& e : m.entries) {
        if (e.category == c) ++n_part[static_cast<int>(s.assignment.at(e.id))];
      }
      const std::size_t n = sizes[static_cast<std::size_t>(c)];
      o.require(n_part[2] == n / 10 && n_part[1] == n / 5 && n_part[0] == n - n / 10 - n / 5,
                "floor(0.1n)/floor(0.2n)/remainder for n=" + std::to_string(n));
      ++categories_checked;
    }
    o.require(to_json(s).dump() == to_json(split(m, seed)).dump(), "same seed gives identical JSON");
  }
  o.detail << categories_checked << " categories of size 3..500, 40 reseeded JSON comparisons";
}

// 4 -------------------------------------------------------------------------
void fgsm_bound(Outcome& o) {
  Rng rng(4004);
  double worst_excess = -1.0;
  double worst_gap = 0.0;
  std::size_t equality_coords = 0;
  const std::vector<double> budgets{0.0, 0.05, 0.14, 0.2};
  for (int k = 0; k < 100; ++k) {
    const Tensor3 x = ngtest::random_image(rng);
    Tensor3 g(224, 224, 3);
    for (auto& v : g.data) v = rng.below(20) == 0 ? 0.0 : rng.uniform(-1.0, 1.0);
    for (double eps : budgets) {
      const Tensor3 adv = fgsm_step(x, g, eps);
      if (eps == 0.0) {
        o.require(adv.data == x.data, "eps = 0 is bit-identical");
        continue;
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = std::abs(adv.data[i] - x.data[i]);
        worst_excess = std::max(worst_excess, d - eps);
        const double gi = g.data[i];
        if (gi == 0.0) continue;
        const double target = gi > 0 ? x.data[i] + eps : x.data[i] - eps;
        if (target >= 0.0 && target <= 1.0) {
          worst_gap = std::max(worst_gap, std::abs(d - eps));
          ++equality_coords;
        }
      }
    }
  }
  o.require(worst_excess <= 0.0, "|x' - x|_inf <= eps");
  // Equality holds up to the rounding of x + eps, at most one ulp of 1.0.
  o.require(worst_gap <= DBL_EPSILON, "equality at unclipped coordinates");
  o.detail << "100 images x eps {0, 0.05, 0.14, 0.2}: max(|d|-eps) " << worst_excess << ", equality gap "
           << worst_gap << " over " << equality_coords << " unclipped coordinates";
}

// 5 -------------------------------------------------------------------------
void gradient_check(Outcome& o) {
  const Classifier clf = ngtest::seeded_classifier(5005);
  Rng rng(5006);
  ImageBatch batch;
  batch.push_back(ngtest::random_image(rng), 2, "probe");
  const LossAndGrads lg = clf.loss_and_grads(batch, GradTarget::input);
  const double h = 1e-3;
  double worst = 0.0;
  int checked = 0, straddling = 0;
  while (checked < 20) {
    const std::size_t i = rng.below(batch.images[0].size());
    if (ngtest::straddles_kink(clf, batch.images[0], i, h)) {
      ++straddling;
      continue;
    }
    const double saved = batch.images[0].data[i];
    batch.images[0].data[i] = saved + h;
    const double up = clf.loss_and_grads(batch, GradTarget::params).loss;
    batch.images[0].data[i] = saved - h;
    const double down = clf.loss_and_grads(batch, GradTarget::params).loss;
    batch.images[0].data[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = lg.input_grads[0].data[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    worst = std::max(worst, rel);
    ++checked;
  }
  o.require(worst < 1e-3, "relative error < 1e-3");
  o.detail << "20 input coordinates, max relative error " << worst << " (" << straddling
           << " drawn coordinates skipped: +-1e-3 crosses a ReLU/max-pool boundary)";
}

// 6 -------------------------------------------------------------------------
void grad_cam_oracle(Outcome& o) {
  const Classifier clf = ngtest::seeded_classifier(6006);
  Rng rng(6007);
  double worst = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Tensor3 img = ngtest::random_image(rng);
    const int target = static_cast<int>(rng.below(6));
    const AttributionMap map = grad_cam(clf, img, target);
    const auto fg = clf.activations_and_grads(img, target);
    const Grid want = ngtest::loop_grad_cam(fg.activations, fg.gradients, 224, 224);
    for (std::size_t i = 0; i < want.data.size(); ++i) worst = std::max(worst, std::abs(want.data[i] - map.values.data[i]));
  }
  o.require(worst <= 1e-5, "oracle within 1e-5");

  Tensor3 A(2, 2, 2), G(2, 2, 2);
  A.at(0, 0, 0) = 1;
  A.at(1, 1, 1) = 1;
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      G.at(y, x, 0) = 0.5;
      G.at(y, x, 1) = -0.5;
    }
  }
  const Grid worked = grad_cam_from_maps(A, G, 2, 2);
  o.require(worked.data == std::vector<double>{1, 0, 0, 0}, "worked 2x2 example");
  o.detail << "4 images, max deviation " << worst << "; worked example [[" << worked.data[0] << "," << worked.data[1]
           << "],[" << worked.data[2] << "," << worked.data[3] << "]]";
}

// 7 -------------------------------------------------------------------------
double fgsm_accuracy(const Classifier& clf, const LabeledSet& test, const ImageSource& src, double eps) {
  BatchStream bs = make_batches(test, Partition::test, 32, 0, src, AugmentationConfig::disabled());
  ImageBatch b;
  std::size_t correct = 0, n = 0;
  while (bs.next(b)) {
    const ImageBatch adv = fgsm(clf, b, eps);
    const ForwardResult out = clf.forward(adv);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      correct += argmax(out.probs[i]) == adv.label_index(i);
      ++n;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void desk_training(Outcome& o) {
  ngtest::TempDir dir("acceptance-synth");
  generate_synthetic_dataset({100, 7, 224}, dir.path());
  const auto ing = ingest(dir.path());
  o.require(ing.manifest.total() == 600, "600 synthetic images");
  const auto sp = split(ing.manifest, 42);
  const DatasetImageSource src(ing.manifest);
  const TrainingData data{labeled_partition(ing.manifest, sp, Partition::train),
                          labeled_partition(ing.manifest, sp, Partition::val), &src, {}};
  const LabeledSet test = labeled_partition(ing.manifest, sp, Partition::test);

  TrainingConfig cfg;  // lr 1e-4, batch 32, patience 10
  cfg.max_epochs = 30;
  cfg.seed = 1;

  const std::clock_t c0 = std::clock();
  const auto w0 = std::chrono::steady_clock::now();
  const FitResult clean = fit(build_classifier("tiny_test", 3), data, cfg);
  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  const double wall = seconds_since(w0);
  const double clean_acc = evaluate(clean.best, test, src).report.accuracy;
  o.require(clean_acc >= 0.95, "clean test accuracy >= 95%");
  o.require(cpu < 300.0, "clean training < 5 min CPU");

  TrainingConfig adv_cfg = cfg;
  adv_cfg.adversarial = AdversarialConfig{0.1, 0.5};
  const FitResult adv = adversarial_fit(build_classifier("tiny_test", 3), data, adv_cfg);
  const double clean_under_attack = fgsm_accuracy(clean.best, test, src, 0.1);
  const double adv_under_attack = fgsm_accuracy(adv.best, test, src, 0.1);
  const double gap = adv_under_attack - clean_under_attack;
  o.require(gap >= 0.10, "adversarial model >= 10 points better under FGSM");
  o.detail << "clean test acc " << clean_acc << " (" << clean.history.epochs.size() << " epochs, cpu " << cpu
           << " s, wall " << wall << " s); FGSM(0.1) acc clean-trained " << clean_under_attack
           << ", adversarial " << adv_under_attack << ", gap " << gap * 100 << " points";
}

// 8 -------------------------------------------------------------------------
std::optional<std::size_t> scan_best(const std::vector<SweepRow>& rows) {
  std::optional<std::size_t> best;
  double best_acc = -1.0, best_loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) continue;
    const bool better = rows[i].val_accuracy > best_acc ||
                        (rows[i].val_accuracy == best_acc && rows[i].val_loss < best_loss);
    if (better) {
      best = i;
      best_acc = rows[i].val_accuracy;
      best_loss = rows[i].val_loss;
    }
  }
  return best;
}

void epsilon_sweep_format(Outcome& o) {
  ngtest::TempDir dir("acceptance-sweep");
  generate_synthetic_dataset({10, 8, 224}, dir.path());
  const auto ing = ingest(dir.path());
  const auto sp = split(ing.manifest, 42);
  const DatasetImageSource src(ing.manifest);
  const TrainingData data{labeled_partition(ing.manifest, sp, Partition::train),
                          labeled_partition(ing.manifest, sp, Partition::val), &src, {}};
  TrainingConfig cfg;
  cfg.max_epochs = 2;
  cfg.learning_rate = 1e-3;
  const auto rows = epsilon_sweep([] { return build_classifier("tiny_test", 3); }, data, cfg, kDefaultEpsilons);
  const std::string csv = sweep_csv(rows);

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  o.require(line == "epsilon,val_loss,val_accuracy,optimal_epochs", "header");
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    const auto fields = std::count(line.begin(), line.end(), ',') + 1;
    o.require(fields == 4, "four fields per row");
    const double eps = std::stod(line.substr(0, line.find(',')));
    o.require(n_rows < kDefaultEpsilons.size() && eps == kDefaultEpsilons[n_rows], "row epsilon order");
    ++n_rows;
  }
  o.require(n_rows == 7, "seven rows");
  o.require(best_sweep_row(rows) == scan_best(rows), "best row on the sweep");

  // Random tables with heavy ties and failures.
  Rng rng(8008);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<SweepRow> t(1 + rng.below(7));
    for (auto& r : t) {
      r.val_accuracy = static_cast<double>(rng.below(4)) / 4.0;
      r.val_loss = static_cast<double>(rng.below(3)) / 10.0;
      if (rng.bernoulli(0.15)) r.error = "failed";
    }
    o.require(best_sweep_row(t) == scan_best(t), "selector agrees with scan oracle");
  }
  const auto best = best_sweep_row(rows);
  o.detail << n_rows << " rows; best epsilon " << (best ? rows[*best].epsilon : -1.0)
           << "; selector matched the scan oracle on 2000 random tables";
}

// 9 -------------------------------------------------------------------------
void shapley_axioms(Outcome& o) {
  Rng rng(9009);
  double eff = 0.0, dummy = 0.0, sym = 0.0, sampled = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(3));
    std::vector<double> table(1ULL << n);
    for (auto& t : table) t = rng.uniform();
    // Segment n-1 is a dummy; segments 0 and 1 are symmetric.
    const Coalition last = 1ULL << (n - 1);
    auto v = [&](Coalition s) {
      s &= ~last;
      const bool a = s & 1, b = s & 2;
      if (a != b) s = (s & ~Coalition{3}) | 1;
      return table[s];
    };
    const auto phi = shapley_exact(n, v);
    double sum = 0.0;
    for (double p : phi) sum += p;
    eff = std::max(eff, std::abs(sum - (v((1ULL << n) - 1) - v(0))));
    dummy = std::max(dummy, std::abs(phi[static_cast<std::size_t>(n - 1)]));
    if (n >= 3) sym = std::max(sym, std::abs(phi[0] - phi[1]));
  }

  const Classifier clf = ngtest::seeded_classifier(9010, 2.0);
  Tensor3 img = ngtest::random_image(rng);
  const Segmentation seg = segment_grid(224, 224, 2, 2);
  for (int y = 112; y < 224; ++y) {
    for (int x = 112; x < 224; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.5;  // segment 3 equals the gray baseline
    }
  }
  ShapleyOptions opts;
  opts.baseline = Baseline::gray;
  const ShapleyResult r = shapley_attribution(clf, img, seg, 1, opts);
  double sum = 0.0;
  for (double p : r.phi) sum += p;
  eff = std::max(eff, std::abs(sum - (r.full_value - r.base_value)));
  dummy = std::max(dummy, std::abs(r.phi[3]));

  opts.exact = false;
  opts.samples = 2000;
  opts.seed = 17;
  const ShapleyResult s = shapley_attribution(clf, img, seg, 1, opts);
  for (int i = 0; i < 4; ++i) sampled = std::max(sampled, std::abs(s.phi[i] - r.phi[i]));
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> table(16);
    for (auto& t : table) t = rng.uniform();
    const ValueFunction v = [&](Coalition c) { return table[c]; };
    const auto exact = shapley_exact(4, v);
    const auto est = shapley_sampled(4, v, 2000, 17);
    for (int i = 0; i < 4; ++i) sampled = std::max(sampled, std::abs(est[i] - exact[i]));
  }

  const std::vector<double> worked = shapley_exact(2, [](Coalition c) {
    const double vals[] = {0.1, 0.4, 0.3, 0.9};
    return vals[c];
  });
  const double worked_err = std::max(std::abs(worked[0] - 0.45), std::abs(worked[1] - 0.35));

  o.require(eff < 1e-6, "efficiency < 1e-6");
  o.require(dummy <= 1e-9, "dummy within 1e-9");
  o.require(sym <= 1e-9, "symmetry within 1e-9");
  o.require(worked_err <= 1e-12, "worked example (0.45, 0.35)");
  o.require(sampled <= 0.05, "sampled within 0.05 of exact");
  o.detail << "efficiency " << eff << ", dummy " << dummy << ", symmetry " << sym << ", worked (" << worked[0]
           << ", " << worked[1] << "), sampled max gap " << sampled;
}

// 10 ------------------------------------------------------------------------
void early_stopping(Outcome& o) {
  EarlyStopState state(2);
  const std::vector<double> seq{1.0, 0.8, 0.85, 0.9};
  std::vector<int> decisions;
  for (std::size_t e = 0; e < seq.size(); ++e) {
    decisions.push_back(state.update(static_cast<int>(e), seq[e]) == EarlyStopState::Decision::stop);
  }
  o.require(decisions == std::vector<int>{0, 0, 0, 1}, "stop exactly after epoch 3");
  o.require(state.best_epoch() == 1, "best epoch 1");

  ngtest::ToyData toy;
  ngtest::fill_toy(toy, 2, 1, 1010);
  ImageBatch probe;
  for (int i = 0; i < 3; ++i) probe.push_back(toy.source.load(toy.val.ids[static_cast<std::size_t>(i)]), 0, "probe");
  std::vector<ForwardResult> at_epoch;
  TrainingData data{toy.train, toy.val, &toy.source, {}};
  const std::vector<double> scripted{1.0, 0.8, 0.85, 0.9, 0.1, 0.1};
  data.validator = [&](const Classifier& c, int epoch) {
    at_epoch.push_back(c.forward(probe));
    return EvalStats{scripted.at(static_cast<std::size_t>(epoch)), 0.0};
  };
  TrainingConfig cfg;
  cfg.max_epochs = 6;
  cfg.patience = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  const FitResult r = fit(build_classifier("tiny_test", 10), data, cfg);
  o.require(r.history.stopped_epoch == 3 && r.history.epochs.size() == 4, "fit stops after epoch 3");
  o.require(r.history.best_epoch == 1, "fit best epoch 1");
  const ForwardResult restored = r.best.forward(probe);
  bool same = true;
  for (std::size_t i = 0; i < probe.size(); ++i) same = same && restored.probs[i] == at_epoch[1].probs[i];
  o.require(same, "probe predictions equal the epoch-1 weights");
  o.require(restored.probs[0] != at_epoch[3].probs[0], "weights did move after epoch 1");
  o.detail << "decisions 0,0,0,stop; fit stopped_epoch " << r.history.stopped_epoch << ", best_epoch "
           << r.history.best_epoch << ", restored probe matches epoch 1";
}

// 11 ------------------------------------------------------------------------
void checkpoint_round_trip(Outcome& o) {
  ngtest::ToyData toy;
  ngtest::fill_toy(toy, 2, 1, 1111);
  TrainingConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  const FitResult r = fit(ngtest::seeded_classifier(1112), {toy.train, toy.val, &toy.source, {}}, cfg);
  ngtest::TempDir dir("acceptance-ckpt");
  save_checkpoint(r.best, r.metadata, dir.path());
  const std::string schema_error = validate_checkpoint_metadata(read_json_file(dir / "metadata.json"));
  o.require(schema_error.empty(), "metadata schema: " + schema_error);
  const LoadedCheckpoint back = load_checkpoint(dir.path());

  Rng rng(1113);
  ImageBatch probe;
  for (int i = 0; i < 8; ++i) probe.push_back(ngtest::random_image(rng), i % 6, "probe");
  const ForwardResult a = r.best.forward(probe);
  const ForwardResult b = back.classifier.forward(probe);
  double drift = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (int c = 0; c < 6; ++c) drift = std::max(drift, std::abs(a.probs[i][c] - b.probs[i][c]));
  }
  o.require(drift <= 1e-7, "drift <= 1e-7");
  o.require(back.metadata.epoch == r.metadata.epoch && back.metadata.backbone_id == "tiny_test", "metadata fields");
  o.detail << "8-image probe, max drift " << drift << ", metadata valid";
}

// 12 ------------------------------------------------------------------------
void service_state_machine(Outcome& o) {
  ngtest::TempDir dir("acceptance-service");
  const Classifier clf = ngtest::seeded_classifier(1212, 3.0);
  save_checkpoint(clf, CheckpointMetadata{"tiny_test", clf.taxonomy().names()}, dir / "models/m1");
  Rng rng(1213);
  std::vector<std::vector<std::uint8_t>> images;
  for (int i = 0; i < 6; ++i) images.push_back(encode_png(ngtest::random_rgb(rng, 24, 24)));

  std::size_t actions = 0, reviews = 0;
  for (int seq = 0; seq < 200; ++seq) {
    ServiceConfig cfg;
    cfg.store_dir = dir / ("store-" + std::to_string(seq));
    cfg.models_dir = dir / "models";
    auto tick = std::make_shared<int>(0);
    cfg.clock = [tick] {
      char buf[40];
      std::snprintf(buf, sizeof buf, "2024-03-01T10:%02d:%02d.000Z", *tick / 60, *tick % 60);
      ++*tick;
      return std::string(buf);
    };
    std::set<std::string> reviewed;
    std::vector<json> before;
    {
      NailService svc(cfg);
      svc.activate_model("m1");
      const int steps = 3 + static_cast<int>(rng.below(10));
      for (int step = 0; step < steps; ++step, ++actions) {
        const auto queue = svc.pending_queue();
        const auto action = rng.below(3);
        if (action == 0 || queue.empty()) {
          svc.submit_case(images[rng.below(images.size())]);
        } else if (action == 1) {
          const Case& pick = queue[rng.below(queue.size())];
          const bool confirm = rng.bernoulli(0.5);
          svc.review_case(pick.case_id, {confirm ? "confirm" : "override",
                                         confirm ? std::nullopt : std::optional<std::string>("pitting"), ""});
          reviewed.insert(pick.case_id);
          ++reviews;
        }
        const auto q = svc.pending_queue();
        for (std::size_t i = 0; i + 1 < q.size(); ++i) {
          const bool ordered = q[i].priority_score > q[i + 1].priority_score ||
                               (q[i].priority_score == q[i + 1].priority_score &&
                                q[i].submitted_at <= q[i + 1].submitted_at);
          o.require(ordered, "queue ordered by priority desc, time asc");
        }
        for (const auto& c : q) o.require(reviewed.count(c.case_id) == 0, "reviewed case reappeared");
      }
      for (const auto& c : svc.cases()) before.push_back(to_json(c, svc.taxonomy()));
    }
    NailService replayed(cfg);
    std::vector<json> after;
    for (const auto& c : replayed.cases()) after.push_back(to_json(c, replayed.taxonomy()));
    o.require(after == before, "replay reproduces every field");
    o.require(replayed.active_model() == "m1", "replay restores the active model");
  }
  o.detail << "200 sequences, " << actions << " actions, " << reviews << " reviews";
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // 0: no runtime bound
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "metrics oracle", 5, metrics_oracle},
      {2, "hand matrix", 0, hand_matrix},
      {3, "split properties", 5, split_properties},
      {4, "FGSM bound", 5, fgsm_bound},
      {5, "gradient check", 30, gradient_check},
      {6, "Grad-CAM oracle", 10, grad_cam_oracle},
      {7, "desk-scale training and robustness", 0, desk_training},
      {8, "epsilon sweep format", 0, epsilon_sweep_format},
      {9, "Shapley axioms", 60, shapley_axioms},
      {10, "early stopping", 0, early_stopping},
      {11, "checkpoint round trip", 0, checkpoint_round_trip},
      {12, "service state machine", 60, service_state_machine},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = seconds_since(t0);
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail << "; runtime over " << c.limit_seconds << " s";
    }
    failures += !o.pass;
    std::printf("%s  #%-2d %-36s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
