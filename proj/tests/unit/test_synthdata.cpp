#include "doctest.h"
#include "fixtures.hpp"
#include "nailguard/digest.hpp"
#include "nailguard/synthdata.hpp"

using namespace nailguard;

TEST_CASE("synthetic nails are reproducible per seed, category and index") {
  const SynthSpec spec{4, 7, 224};
  const RgbImage a = render_synthetic_nail(0, 3, spec);
  CHECK(a.height == 224);
  CHECK(a.width == 224);
  CHECK(a.pixels == render_synthetic_nail(0, 3, spec).pixels);
  CHECK(a.pixels != render_synthetic_nail(0, 2, spec).pixels);
  CHECK(a.pixels != render_synthetic_nail(1, 3, spec).pixels);
  CHECK(a.pixels != render_synthetic_nail(0, 3, SynthSpec{4, 8, 224}).pixels);
}

TEST_CASE("blue finger images are bluer than healthy ones") {
  const SynthSpec spec{4, 1, 224};
  auto mean_channel = [](const RgbImage& img, int c) {
    double s = 0;
    for (int y = 62; y < 162; ++y) {
      for (int x = 62; x < 162; ++x) s += img.at(y, x)[c];
    }
    return s / 10000.0;
  };
  for (std::size_t i = 0; i < 4; ++i) {
    const RgbImage blue = render_synthetic_nail(3, i, spec);
    const RgbImage healthy = render_synthetic_nail(1, i, spec);
    CHECK(mean_channel(blue, 2) - mean_channel(blue, 0) > mean_channel(healthy, 2) - mean_channel(healthy, 0));
  }
}

TEST_CASE("generated dataset ingests cleanly and is byte-deterministic") {
  ngtest::TempDir a("synth-a"), b("synth-b");
  const SynthSpec spec{3, 11, 224};
  const auto written = generate_synthetic_dataset(spec, a.path());
  CHECK(written.size() == 18);
  CHECK(written[0] == "acral_lentiginous_melanoma/acral_lentiginous_melanoma_0000.png");
  generate_synthetic_dataset(spec, b.path());
  for (const auto& rel : written) CHECK(sha256_file(a / rel) == sha256_file(b / rel));
  const auto r = ingest(a.path());
  CHECK(r.skipped.empty());
  const auto dist = category_distribution(r.manifest);
  for (auto n : dist) CHECK(n == 3);
}
