#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

#include "lunarsfs/dataset.hpp"
#include "support.hpp"

using namespace lunarsfs;

namespace {

Raster random_raster(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1000.0f, 1000.0f);
  Raster r(w, h, c);
  for (float& v : r.samples()) v = u(rng);
  return r;
}

bool bit_identical(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) return false;
  return std::memcmp(a.samples().data(), b.samples().data(), a.samples().size_bytes()) == 0;
}

}  // namespace

TEST_CASE("Raster layout and conversions") {
  Raster r(3, 2, 2);
  r.at(2, 1, 1) = 5.0f;
  CHECK(r.samples()[1 * 6 + 1 * 3 + 2] == 5.0f);

  Grid g(4, 3);
  g(1, 2) = 0.25;
  const Raster from = to_raster(g);
  CHECK(from.channels() == 1);
  CHECK(from.at(1, 2) == 0.25f);
  CHECK(channel_grid(from) == g);

  NormalMap n(2, 2);
  n(1, 0) = Vec3{0.6, 0.0, 0.8};
  const Raster nr = to_raster(n);
  CHECK(nr.channels() == 3);
  CHECK(nr.at(1, 0, 0) == 0.6f);
  CHECK(nr.at(1, 0, 2) == 0.8f);
  CHECK(channel_grid(nr, 2)(0, 0) == 1.0);
  CHECK_THROWS_AS(channel_grid(nr, 3), std::invalid_argument);
}

TEST_CASE("SFSR round trip is bit-identical") {
  testing::TempDir dir;
  for (int k = 0; k < 5; ++k) {
    const Raster r = random_raster(1 + 7 * k, 3 + k, 1 + k % 3, static_cast<std::uint64_t>(k));
    const auto path = dir / ("r" + std::to_string(k) + ".sfsr");
    write_raster(path, r);
    CHECK(bit_identical(read_raster(path), r));
  }
  Raster special(3, 1);
  special.at(0, 0) = -0.0f;
  special.at(1, 0) = std::numeric_limits<float>::denorm_min();
  special.at(2, 0) = std::numeric_limits<float>::max();
  CHECK(bit_identical(decode_sfsr(encode_sfsr(special)), special));
}

TEST_CASE("SFSR header layout") {
  testing::TempDir dir;
  const auto path = dir / "one.sfsr";
  write_raster(path, Raster(1, 1, 1, 0.0f));
  CHECK(std::filesystem::file_size(path) == 23);

  Raster r(2, 3, 4);
  r.at(0, 0, 0) = 1.0f;
  const auto bytes = encode_sfsr(r);
  REQUIRE(bytes.size() == kSfsrHeaderSize + 2 * 3 * 4 * 4);
  const std::vector<std::uint8_t> header(bytes.begin(), bytes.begin() + kSfsrHeaderSize);
  const std::vector<std::uint8_t> expected{'S', 'F', 'S', 'R', 1, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0, 0};
  CHECK(header == expected);
  // 1.0f little-endian
  CHECK(bytes[19] == 0x00);
  CHECK(bytes[20] == 0x00);
  CHECK(bytes[21] == 0x80);
  CHECK(bytes[22] == 0x3f);
}

TEST_CASE("SFSR format errors") {
  const auto good = encode_sfsr(random_raster(4, 4, 1, 9));
  auto expect_error = [](std::vector<std::uint8_t> bytes, std::size_t offset) {
    try {
      (void)decode_sfsr(bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == offset);
    }
  };
  auto bad = good;
  bad[0] = 'X';
  expect_error(bad, 0);
  bad = good;
  bad[2] = 'Z';
  expect_error(bad, 2);
  bad = good;
  bad[4] = 2;
  expect_error(bad, 4);
  bad = good;
  bad[16] = 1;
  expect_error(bad, 16);
  bad = good;
  bad[18] = 1;
  expect_error(bad, 17);
  expect_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 10), 10);
  expect_error(std::vector<std::uint8_t>(good.begin(), good.end() - 1), good.size() - 1);
  bad = good;
  bad.push_back(0);
  expect_error(bad, good.size());
  expect_error({}, 0);

  testing::TempDir dir;
  Raster nan(2, 2);
  nan.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(write_raster(dir / "nan.sfsr", nan), std::invalid_argument);
  CHECK_THROWS_AS(read_raster(dir / "missing.sfsr"), std::runtime_error);

  std::ofstream(dir / "corrupt.sfsr", std::ios::binary) << "SFSQ-not-a-raster";
  CHECK_THROWS_AS(read_raster(dir / "corrupt.sfsr"), FormatError);
}

TEST_CASE("slice_patches") {
  CHECK(slice_patches(Raster(224, 224)).size() == 1);

  const auto two = slice_patches(random_raster(256, 224, 1, 3));
  REQUIRE(two.size() == 2);
  CHECK(two[0].origin_x == 0);
  CHECK(two[1].origin_x == 32);
  CHECK(two[1].origin_y == 0);
  CHECK(two[1].raster.width() == 224);

  CHECK(kTokensPerImage == 784);
  CHECK((224 / kTokenPatch) * (224 / kTokenPatch) == 784);

  CHECK_THROWS_AS(slice_patches(Raster(223, 300)), std::invalid_argument);
  CHECK_THROWS_AS(patch_count(10, 10, 4, 0), std::invalid_argument);
}

TEST_CASE("slice_patches count formula, order and content on random sizes") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> side(8, 60);
  for (int k = 0; k < 10; ++k) {
    const int w = side(rng), h = side(rng);
    const int size = 8, stride = 5;
    const Raster r = random_raster(w, h, 2, static_cast<std::uint64_t>(k));
    const auto patches = slice_patches(r, size, stride);
    const std::size_t expected =
        static_cast<std::size_t>((w - size) / stride + 1) * static_cast<std::size_t>((h - size) / stride + 1);
    CHECK(patch_count(w, h, size, stride) == expected);
    REQUIRE(patches.size() == expected);
    for (std::size_t i = 1; i < patches.size(); ++i) {
      const auto& a = patches[i - 1];
      const auto& b = patches[i];
      CHECK((b.origin_y > a.origin_y || (b.origin_y == a.origin_y && b.origin_x > a.origin_x)));
    }
    for (const auto& p : patches) {
      CHECK(p.origin_x % stride == 0);
      CHECK(p.origin_y % stride == 0);
      CHECK(p.raster.at(size - 1, 3, 1) == r.at(p.origin_x + size - 1, p.origin_y + 3, 1));
    }
  }
}

TEST_CASE("normalize_modality") {
  const Raster dem(16, 16, 1, 500.0f);
  const auto out1 = normalize_modality(dem, Modality::kDem);
  for (float v : out1.samples()) CHECK(v == 0.0f);

  const Raster rough = random_raster(20, 20, 1, 4);
  const Raster centered = normalize_modality(rough, Modality::kDem);
  double mean = 0.0;
  for (float v : centered.samples()) mean += v;
  CHECK(std::abs(mean / 400.0) < 1e-3);  // float32 samples of magnitude ~1e3

  const Raster normals = random_raster(8, 8, 3, 5);
  CHECK(normalize_modality(normals, Modality::kNormals) == normals);

  const Raster gray(2, 2, 1, 0.75f);
  const Raster g = normalize_modality(gray, Modality::kGray, NormalizationStats{0.5, 0.25});
  CHECK(g.at(1, 1) == 1.0f);
  CHECK(normalize_modality(gray, Modality::kAlbedo, NormalizationStats{0.25, 0.5}).at(0, 0) == 1.0f);

  CHECK_THROWS_AS(normalize_modality(gray, Modality::kGray), std::invalid_argument);
  CHECK_THROWS_AS(normalize_modality(gray, Modality::kGray, NormalizationStats{0.5, 0.0}), std::invalid_argument);
}

TEST_CASE("modality names") {
  for (auto m : {Modality::kGray, Modality::kDem, Modality::kNormals, Modality::kAlbedo})
    CHECK(parse_modality(modality_name(m)) == m);
  CHECK_THROWS_AS(parse_modality("lidar"), std::invalid_argument);
}

TEST_CASE("allocate_budget") {
  const std::vector<double> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(allocate_budget(thirds, 12, 784) == std::vector<std::size_t>{4, 4, 4});
  CHECK(allocate_budget(thirds, 10, 784) == std::vector<std::size_t>{4, 3, 3});
  const std::vector<double> skewed{0.98, 0.01, 0.01};
  CHECK(allocate_budget(skewed, 100, 50) == std::vector<std::size_t>{50, 25, 25});
  CHECK_THROWS_AS(allocate_budget(skewed, 151, 50), std::invalid_argument);
}

TEST_CASE("dirichlet_mask examples") {
  MaskOptions single;
  single.alphas = {1.0};
  single.input_budget = 784;
  const MaskPlan all = dirichlet_mask(single);
  CHECK(all.modalities[0].inputs.size() == 784);
  CHECK(all.modalities[0].targets.empty());

  MaskOptions uniform;
  uniform.alphas = {1.0, 1.0, 1.0};
  uniform.input_budget = 12;
  uniform.uniform = true;
  const MaskPlan u = dirichlet_mask(uniform);
  for (const auto& m : u.modalities) CHECK(m.inputs.size() == 4);
}

TEST_CASE("dirichlet_mask partition, budget and determinism") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> budget(1, 3 * 784);
  for (int k = 0; k < 50; ++k) {
    MaskOptions opts;
    opts.alphas = {0.5, 1.0, 2.0};
    opts.input_budget = budget(rng);
    opts.seed = static_cast<std::uint64_t>(k);
    const MaskPlan plan = dirichlet_mask(opts);
    CHECK(plan.input_count() == opts.input_budget);
    for (const auto& m : plan.modalities) {
      CHECK(std::ranges::is_sorted(m.inputs));
      CHECK(std::ranges::is_sorted(m.targets));
      std::set<std::size_t> all(m.inputs.begin(), m.inputs.end());
      for (std::size_t t : m.targets) CHECK(all.insert(t).second);
      CHECK(all.size() == 784);
      CHECK(*all.rbegin() == 783);
    }
    const MaskPlan again = dirichlet_mask(opts);
    for (std::size_t i = 0; i < 3; ++i) CHECK(again.modalities[i].inputs == plan.modalities[i].inputs);
  }
}

TEST_CASE("Dirichlet with tiny alpha concentrates the budget on one modality") {
  const int draws = 10000;
  int concentrated = 0;
  MaskOptions opts;
  opts.alphas = {0.001, 0.001, 0.001};
  opts.input_budget = 784;
  for (int k = 0; k < draws; ++k) {
    opts.seed = static_cast<std::uint64_t>(k);
    const MaskPlan plan = dirichlet_mask(opts);
    std::size_t most = 0;
    for (const auto& m : plan.modalities) most = std::max(most, m.inputs.size());
    if (most >= 0.95 * 784) ++concentrated;
  }
  CHECK(concentrated >= 0.99 * draws);
}

TEST_CASE("sample_dirichlet") {
  const std::vector<double> alphas{2.0, 3.0, 5.0};
  double mean0 = 0.0;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    const auto lambda = sample_dirichlet(alphas, s);
    double sum = 0.0;
    for (double v : lambda) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    mean0 += lambda[0];
  }
  CHECK(mean0 / 4000 == doctest::Approx(0.2).epsilon(0.05));
  CHECK(sample_dirichlet(alphas, 7) == sample_dirichlet(alphas, 7));
}

TEST_CASE("dirichlet_mask errors") {
  MaskOptions opts;
  opts.alphas = {1.0, 0.0};
  opts.input_budget = 10;
  CHECK_THROWS_AS(dirichlet_mask(opts), std::invalid_argument);
  opts.alphas = {};
  CHECK_THROWS_AS(dirichlet_mask(opts), std::invalid_argument);
  opts.alphas = {1.0, 1.0};
  opts.input_budget = 0;
  CHECK_THROWS_AS(dirichlet_mask(opts), std::invalid_argument);
  opts.input_budget = 2 * 784 + 1;
  CHECK_THROWS_AS(dirichlet_mask(opts), std::invalid_argument);
}
