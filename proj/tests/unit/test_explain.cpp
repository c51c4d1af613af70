#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/explain.hpp"
#include "oracles.hpp"

using namespace nailguard;

TEST_CASE("grad-cam worked 2x2 example") {
  Tensor3 A(2, 2, 2), G(2, 2, 2);
  A.at(0, 0, 0) = 1;
  A.at(1, 1, 1) = 1;
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      G.at(y, x, 0) = 0.5;
      G.at(y, x, 1) = -0.5;
    }
  }
  const Grid m = grad_cam_from_maps(A, G, 2, 2);
  CHECK(m.data == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("non-positive gradients with non-negative activations give a zero map") {
  Rng rng(1);
  Tensor3 A = ngtest::random_image(rng, 4, 4, 3);
  Tensor3 G(4, 4, 3, -0.2);
  const Grid m = grad_cam_from_maps(A, G, 8, 8);
  for (double v : m.data) CHECK(v == 0.0);
}

TEST_CASE("grad-cam equals the loop oracle on tiny_test") {
  const Classifier clf = ngtest::seeded_classifier(11);
  Rng rng(2);
  const Tensor3 img = ngtest::random_image(rng);
  for (int target : {0, 4}) {
    const AttributionMap map = grad_cam(clf, img, target);
    const auto fg = clf.activations_and_grads(img, target);
    const Grid oracle = ngtest::loop_grad_cam(fg.activations, fg.gradients, 224, 224);
    double worst = 0;
    for (std::size_t i = 0; i < oracle.data.size(); ++i) {
      worst = std::max(worst, std::abs(oracle.data[i] - map.values.data[i]));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("grad-cam stays in [0,1] and its peak ignores gradient scale") {
  const Classifier clf = ngtest::seeded_classifier(12);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const Tensor3 img = ngtest::random_image(rng);
    const auto fg = clf.activations_and_grads(img, 1);
    const Grid a = grad_cam_from_maps(fg.activations, fg.gradients, 224, 224);
    Tensor3 scaled = fg.gradients;
    for (auto& g : scaled.data) g *= 7.5;
    const Grid b = grad_cam_from_maps(fg.activations, scaled, 224, 224);
    for (double v : a.data) REQUIRE((v >= 0.0 && v <= 1.0));
    CHECK(std::max_element(a.data.begin(), a.data.end()) - a.data.begin() ==
          std::max_element(b.data.begin(), b.data.end()) - b.data.begin());
  }
}

TEST_CASE("segment grid covers every pixel once") {
  const auto s = segment_grid(224, 224, 4, 4);
  CHECK(s.count == 16);
  std::vector<int> sizes(16, 0);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) ++sizes[static_cast<std::size_t>(s.id_at(y, x))];
  }
  for (int n : sizes) CHECK(n == 56 * 56);
  CHECK(s.id_at(0, 60) == 1);
  CHECK(s.id_at(60, 0) == 4);
  const auto two = segment_grid(224, 224, 2, 2);
  CHECK(two.count == 4);
  CHECK(two.id_at(111, 112) == 1);
  CHECK_THROWS_AS(segment_grid(224, 224, 5, 4), InvalidArgument);
}

TEST_CASE("shapley worked two-segment example") {
  const ValueFunction v = [](Coalition s) {
    switch (s) {
      case 0: return 0.1;
      case 1: return 0.4;
      case 2: return 0.3;
      default: return 0.9;
    }
  };
  const auto phi = shapley_exact(2, v);
  CHECK(phi[0] == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(phi[1] == doctest::Approx(0.35).epsilon(1e-12));
}

TEST_CASE("shapley exact agrees with permutation enumeration") {
  Rng rng(4);
  for (int n = 1; n <= 6; ++n) {
    std::vector<double> table(1ULL << n);
    for (auto& t : table) t = rng.uniform();
    const ValueFunction v = [&](Coalition s) { return table[s]; };
    const auto a = shapley_exact(n, v);
    const auto b = ngtest::permutation_shapley(n, v);
    for (int i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("shapley null player, constant game, size limit") {
  const auto zero = shapley_exact(3, [](Coalition) { return 0.7; });
  for (double p : zero) CHECK(p == 0.0);
  CHECK_THROWS_AS(shapley_exact(13, [](Coalition) { return 0.0; }), InvalidArgument);
}

TEST_CASE("sampled shapley is seeded and close to exact") {
  Rng rng(5);
  std::vector<double> table(16);
  for (auto& t : table) t = rng.uniform();
  const ValueFunction v = [&](Coalition s) { return table[s]; };
  const auto exact = shapley_exact(4, v);
  const auto a = shapley_sampled(4, v, 2000, 9);
  CHECK(a == shapley_sampled(4, v, 2000, 9));
  for (int i = 0; i < 4; ++i) CHECK(std::abs(a[i] - exact[i]) < 0.05);
}

TEST_CASE("shapley attribution on tiny_test satisfies efficiency") {
  const Classifier clf = ngtest::seeded_classifier(13, 2.0);
  Rng rng(6);
  const Tensor3 img = ngtest::random_image(rng);
  const auto seg = segment_grid(224, 224, 2, 2);
  const auto r = shapley_attribution(clf, img, seg, 2);
  double sum = 0;
  for (double p : r.phi) sum += p;
  CHECK(std::abs(sum - (r.full_value - r.base_value)) < 1e-6);
  CHECK(r.full_value == doctest::Approx(clf.predict(img)[2]).epsilon(1e-12));
  ShapleyOptions gray;
  gray.baseline = Baseline::gray;
  const auto g = shapley_attribution(clf, img, seg, 2, gray);
  CHECK(g.base_value == doctest::Approx(clf.predict(Tensor3(224, 224, 3, 0.5))[2]).epsilon(1e-12));
}

TEST_CASE("pixel map of shapley values") {
  const auto seg = segment_grid(4, 4, 2, 2);
  ShapleyResult zero{{0, 0, 0, 0}, 0, 0};
  for (double v : to_pixel_map(zero, seg).data) CHECK(v == 0.5);
  ShapleyResult one{{0, 0.3, 0, 0}, 0, 0.3};
  const Grid m = to_pixel_map(one, seg);
  CHECK(m.at(0, 2) == 1.0);
  CHECK(m.at(3, 3) == 0.5);
  ShapleyResult mixed{{-0.2, 0.1, 0.05, 0}, 0, 0};
  const Grid mm = to_pixel_map(mixed, seg);
  CHECK(mm.at(0, 0) == 0.0);
  CHECK(mm.at(0, 3) == 0.75);
}

TEST_CASE("jet colormap endpoints") {
  CHECK(jet(0.0) == std::array<std::uint8_t, 3>{0, 0, 128});
  CHECK(jet(0.5) == std::array<std::uint8_t, 3>{128, 255, 128});
  CHECK(jet(1.0) == std::array<std::uint8_t, 3>{128, 0, 0});
  CHECK(jet(-3.0) == jet(0.0));
}

TEST_CASE("overlay blend on a 2x2 toy") {
  RgbImage img(2, 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(20 * i);
  Grid map(2, 2);
  map.data = {0.0, 0.25, 0.5, 1.0};
  CHECK(overlay_image(img, map, 0.0).pixels == img.pixels);
  const RgbImage pure = overlay_image(img, map, 1.0);
  for (int p = 0; p < 4; ++p) {
    const auto c = jet(map.data[static_cast<std::size_t>(p)]);
    for (int k = 0; k < 3; ++k) CHECK(pure.pixels[static_cast<std::size_t>(3 * p + k)] == c[k]);
  }
  const RgbImage half = overlay_image(img, map, 0.4);
  for (int p = 0; p < 4; ++p) {
    const auto c = jet(map.data[static_cast<std::size_t>(p)]);
    for (int k = 0; k < 3; ++k) {
      const auto i = static_cast<std::size_t>(3 * p + k);
      CHECK(half.pixels[i] == static_cast<int>(std::lround(0.6 * img.pixels[i] + 0.4 * c[k])));
    }
  }
  CHECK(overlay(img, map) == overlay(img, map));
  CHECK_THROWS_AS(overlay_image(img, Grid(3, 3)), InvalidArgument);
  CHECK_THROWS_AS(overlay_image(img, map, 1.5), InvalidArgument);
}

TEST_CASE("method and baseline names") {
  CHECK(parse_method("gradcam") == AttributionMethod::gradcam);
  CHECK(method_name(AttributionMethod::shapley) == "shapley");
  CHECK_THROWS_AS(parse_method("lime"), InvalidArgument);
  CHECK(parse_baseline("gray") == Baseline::gray);
  CHECK_THROWS_AS(parse_baseline("noise"), InvalidArgument);
}
