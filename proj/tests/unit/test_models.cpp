#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/models.hpp"

using namespace nailguard;
namespace fs = std::filesystem;

namespace {

ImageBatch probe_batch(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  ImageBatch b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(ngtest::random_image(rng), static_cast<int>(i % 6), "p");
  return b;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10}); }

}  // namespace

TEST_CASE("tiny_test parameter layout") {
  const Classifier clf = build_classifier("tiny_test", 1);
  // conv1 3*3*3*8+8, conv2 3*3*8*16+16, head 16*6+6
  CHECK(clf.parameter_count() == 224 + 1168 + 102);
  const auto params = clf.parameters();
  CHECK(params.back()->name == "head.bias");
  for (const Parameter* p : {params.end()[-2], params.end()[-1]}) {
    for (double w : p->value) CHECK(w == 0.0);
  }
}

TEST_CASE("zero head predicts uniformly") {
  const Classifier clf = build_classifier("tiny_test", 1);
  Rng rng(1);
  const auto p = clf.predict(ngtest::random_image(rng));
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("backbone registry") {
  CHECK(backbone_ids().size() == 5);
  CHECK(backbone_spec("inception_v3").pretrained);
  CHECK(backbone_spec("tiny_test").feature_channels == 16);
  CHECK_THROWS_AS(backbone_spec("vgg16"), ConfigError);
  CHECK_THROWS_AS(build_classifier("densenet201"), ConfigError);
}

TEST_CASE("softmax and cross-entropy") {
  const ProbRow p = softmax({1, 2, 3, 4, 5, 6});
  double sum = 0;
  for (double v : p) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p[5] / p[4] == doctest::Approx(std::exp(1.0)));
  const ProbRow huge = softmax({1000, 0, 0, 0, 0, 0});
  CHECK(huge[0] == doctest::Approx(1.0));
  CHECK(cross_entropy({0.5, 0.5, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}) == doctest::Approx(-std::log(0.5 + 1e-12)));
  CHECK(cross_entropy({0, 1, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 0}) == doctest::Approx(-std::log(1e-12)));
  CHECK(argmax({0.1, 0.3, 0.3, 0.2, 0.0, 0.1}) == 1);
}

TEST_CASE("wrong input shape is rejected") {
  const Classifier clf = build_classifier("tiny_test", 1);
  CHECK_THROWS_AS(clf.predict(Tensor3(100, 100, 3)), InvalidArgument);
}

TEST_CASE("parameter gradients match central differences") {
  Classifier clf = ngtest::seeded_classifier(4);
  const ImageBatch batch = probe_batch(8, 2);
  const LossAndGrads lg = clf.loss_and_grads(batch, GradTarget::params);
  auto params = clf.parameters();
  Rng rng(12);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t p = rng.below(params.size());
    const std::size_t k = rng.below(params[p]->size());
    const double h = 1e-5;
    const double saved = params[p]->value[k];
    params[p]->value[k] = saved + h;
    const double up = clf.loss_and_grads(batch, GradTarget::params).loss;
    params[p]->value[k] = saved - h;
    const double down = clf.loss_and_grads(batch, GradTarget::params).loss;
    params[p]->value[k] = saved;
    const double numeric = (up - down) / (2 * h);
    INFO(params[p]->name, "[", k, "] analytic ", lg.param_grads[p][k], " numeric ", numeric);
    CHECK(std::abs(lg.param_grads[p][k] - numeric) <= 1e-4 * std::max(std::abs(numeric), 1e-4));
  }
}

TEST_CASE("kink detection flags a coordinate whose step crosses a boundary") {
  const Classifier clf = ngtest::seeded_classifier(5005);
  Rng rng(5006);
  const Tensor3 img = ngtest::random_image(rng);
  int flagged = 0;
  for (int t = 0; t < 40; ++t) flagged += ngtest::straddles_kink(clf, img, rng.below(img.size()), 1e-3);
  CHECK(flagged > 0);
  CHECK(flagged < 20);
  CHECK_FALSE(ngtest::straddles_kink(clf, img, 1000, 1e-7));
}

TEST_CASE("input gradients match central differences") {
  const Classifier clf = ngtest::seeded_classifier(5);
  ImageBatch batch = probe_batch(9, 1);
  const LossAndGrads lg = clf.loss_and_grads(batch, GradTarget::input);
  REQUIRE(lg.param_grads.empty());
  REQUIRE(lg.input_grads.size() == 1);
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t i = rng.below(batch.images[0].size());
    const double h = 1e-3;
    if (ngtest::straddles_kink(clf, batch.images[0], i, h)) continue;
    const double saved = batch.images[0].data[i];
    batch.images[0].data[i] = saved + h;
    const double up = clf.loss_and_grads(batch, GradTarget::params).loss;
    batch.images[0].data[i] = saved - h;
    const double down = clf.loss_and_grads(batch, GradTarget::params).loss;
    batch.images[0].data[i] = saved;
    CHECK(rel_error(lg.input_grads[0].data[i], (up - down) / (2 * h)) < 1e-3);
  }
}

TEST_CASE("frozen backbone receives no gradient") {
  Classifier clf = ngtest::seeded_classifier(6);
  clf.set_backbone_frozen(true);
  const LossAndGrads lg = clf.loss_and_grads(probe_batch(1, 1), GradTarget::params);
  const auto n = lg.param_grads.size();
  REQUIRE(n == clf.parameters().size());
  for (std::size_t p = 0; p + 2 < n; ++p) CHECK(lg.param_grads[p].empty());
  CHECK_FALSE(lg.param_grads[n - 1].empty());
}

TEST_CASE("grad-cam tap gradient equals head weight over the tap area") {
  const Classifier clf = ngtest::seeded_classifier(7);
  Rng rng(2);
  const auto fg = clf.activations_and_grads(ngtest::random_image(rng), 3);
  REQUIRE(fg.activations.height == 56);
  REQUIRE(fg.activations.channels == 16);
  const auto& w = clf.parameters().end()[-2]->value;
  for (int k = 0; k < 16; ++k) CHECK(fg.gradients.at(10, 20, k) == doctest::Approx(w[3 * 16 + k] / (56.0 * 56.0)));
}

TEST_CASE("checkpoint round trip") {
  ngtest::TempDir dir("ckpt");
  const Classifier clf = ngtest::seeded_classifier(8);
  CheckpointMetadata meta;
  meta.backbone_id = "tiny_test";
  meta.taxonomy = clf.taxonomy().names();
  meta.epoch = 4;
  meta.metrics = {{"best_val_loss", 0.5}};
  save_checkpoint(clf, meta, dir.path());
  const auto meta_json = read_json_file(dir / "metadata.json");
  CHECK(validate_checkpoint_metadata(meta_json).empty());

  const auto loaded = load_checkpoint(dir.path());
  CHECK(loaded.metadata.epoch == 4);
  const ImageBatch batch = probe_batch(3, 3);
  const auto a = clf.forward(batch);
  const auto b = loaded.classifier.forward(batch);
  for (std::size_t i = 0; i < 3; ++i) {
    for (int c = 0; c < 6; ++c) CHECK(a.probs[i][c] == b.probs[i][c]);
  }
}

TEST_CASE("checkpoint metadata validation catches schema violations") {
  CHECK_FALSE(validate_checkpoint_metadata(nlohmann::json::object()).empty());
  auto j = to_json(CheckpointMetadata{"tiny_test", LabelTaxonomy::canonical().names()});
  CHECK(validate_checkpoint_metadata(j).empty());
  j["taxonomy"] = {"a"};
  CHECK_FALSE(validate_checkpoint_metadata(j).empty());
  j = to_json(CheckpointMetadata{"tiny_test", LabelTaxonomy::canonical().names()});
  j["epoch"] = "three";
  CHECK_FALSE(validate_checkpoint_metadata(j).empty());
}

TEST_CASE("loading under a different taxonomy fails") {
  ngtest::TempDir dir("ckpt-tax");
  const Classifier clf = build_classifier("tiny_test", 1);
  save_checkpoint(clf, CheckpointMetadata{"tiny_test", clf.taxonomy().names()}, dir.path());
  const LabelTaxonomy other({"a", "b", "c", "d", "e", "f"});
  CHECK_THROWS_AS(load_checkpoint(dir.path(), other), ConfigError);
}

TEST_CASE("corrupt weights file") {
  ngtest::TempDir dir("ckpt-bad");
  const Classifier clf = build_classifier("tiny_test", 1);
  save_checkpoint(clf, CheckpointMetadata{"tiny_test", clf.taxonomy().names()}, dir.path());
  write_text_file(dir / "weights.bin", "short");
  CHECK_THROWS(load_checkpoint(dir.path()));
}
