#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gbpsim/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace gbpsim::env;

TEST_CASE("region grid geometry") {
  auto f = SignalField::generate(1, 100.0, 10.0);
  CHECK(f.n_side() == 10);
  CHECK(f.n_regions() == 100);
  CHECK(f.center(0).x() == doctest::Approx(5.0));
  CHECK(f.center(0).y() == doctest::Approx(5.0));
  CHECK(f.center(1).x() == doctest::Approx(15.0));  // row-major: x fastest
  CHECK(f.center(1).y() == doctest::Approx(5.0));
  CHECK(f.center(10).x() == doctest::Approx(5.0));
  CHECK(f.center(10).y() == doctest::Approx(15.0));
  CHECK(f.center(99).x() == doctest::Approx(95.0));
  CHECK(f.center(99).y() == doctest::Approx(95.0));
}

TEST_CASE("world side must tile into regions") {
  CHECK_THROWS_AS((void)SignalField::generate(1, 105.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS((void)SignalField::generate(1, 0.0, 10.0), std::invalid_argument);
}

TEST_CASE("values are rescaled to span [0, 1] exactly") {
  for (std::uint64_t seed : {1ull, 7ull, 42ull}) {
    auto f = SignalField::generate(seed, 200.0, 10.0);
    const auto& v = f.values();
    CHECK(*std::min_element(v.begin(), v.end()) == 0.0);
    CHECK(*std::max_element(v.begin(), v.end()) == 1.0);
    for (double x : v) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = SignalField::generate(9, 100.0, 10.0);
  auto b = SignalField::generate(9, 100.0, 10.0);
  CHECK(a.values() == b.values());  // bit-exact
  auto c = SignalField::generate(10, 100.0, 10.0);
  CHECK(a.values() != c.values());
}

TEST_CASE("fields are not degenerate noise") {
  // neighboring regions correlate: the field is smooth at the region scale
  auto f = SignalField::generate(3, 200.0, 10.0);
  double step_sum = 0.0;
  int steps = 0;
  for (int iy = 0; iy < f.n_side(); ++iy)
    for (int ix = 0; ix + 1 < f.n_side(); ++ix) {
      step_sum += std::abs(f.truth(iy * f.n_side() + ix + 1) - f.truth(iy * f.n_side() + ix));
      ++steps;
    }
  CHECK(step_sum / steps < 0.2);  // mean neighbor step far below the full range
}

TEST_CASE("a source region exists for source-seeking runs") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    auto f = SignalField::generate_with_source(seed, 100.0, 10.0, 10.0 / 255.0);
    const auto& v = f.values();
    CHECK(*std::min_element(v.begin(), v.end()) < 10.0 / 255.0);
  }
}

TEST_CASE("regions within a radius, against a brute-force scan") {
  auto f = SignalField::generate(1, 100.0, 10.0);

  auto within = f.regions_within({5.0, 5.0}, 0.1);
  CHECK(within == std::vector<int>{0});

  within = f.regions_within({5.0, 5.0}, 10.1);
  CHECK(within == std::vector<int>{0, 1, 10});

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> pos(0.0, 100.0), rad(0.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector2d p{pos(rng), pos(rng)};
    const double r = rad(rng);
    auto got = f.regions_within(p, r);
    std::vector<int> expect;
    for (int m = 0; m < f.n_regions(); ++m)
      if ((f.center(m) - p).norm() <= r) expect.push_back(m);
    CHECK(got == expect);
    CHECK(std::is_sorted(got.begin(), got.end()));
  }
}

TEST_CASE("nearest region") {
  auto f = SignalField::generate(1, 100.0, 10.0);
  CHECK(f.nearest_region({0.0, 0.0}) == 0);
  CHECK(f.nearest_region({99.0, 1.0}) == 9);
  CHECK(f.nearest_region({16.0, 17.0}) == 11);
}

TEST_CASE("sampling without noise reproduces the truth at region centers") {
  auto f = SignalField::generate(4, 100.0, 10.0);
  std::mt19937_64 rng(0);
  auto samples = sample(f, {35.0, 45.0}, 10.0, 0.0, rng);
  CHECK(!samples.empty());
  for (const auto& s : samples) {
    CHECK(s.psi == f.truth(s.region));
    CHECK(s.position.x() == f.center(s.region).x());
    CHECK(s.position.y() == f.center(s.region).y());
    CHECK((f.center(s.region) - Eigen::Vector2d{35.0, 45.0}).norm() <= 10.0);
  }
  // samples arrive in region-index order (the rng draw order is pinned)
  CHECK(std::is_sorted(samples.begin(), samples.end(),
                       [](const auto& a, const auto& b) { return a.region < b.region; }));
}

TEST_CASE("sampling noise has the configured spread") {
  auto f = SignalField::generate(4, 100.0, 10.0);
  std::mt19937_64 rng(123);
  const double sigma = 0.1;
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto s = sample(f, {5.0, 5.0}, 0.5, sigma, rng);  // a single region
    REQUIRE(s.size() == 1);
    const double e = s[0].psi - f.truth(s[0].region);
    sum += e;
    sq += e * e;
  }
  const double mean = sum / n;
  const double std_dev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 2e-3);
  CHECK(std::abs(std_dev - sigma) < 0.01 * sigma);
}

TEST_CASE("text export and import round-trip") {
  auto f = SignalField::generate(11, 100.0, 10.0);
  std::stringstream ss;
  f.save(ss);
  auto g = SignalField::load(ss);
  CHECK(g.d_world() == f.d_world());
  CHECK(g.r_d() == f.r_d());
  CHECK(g.seed() == f.seed());
  CHECK(g.n_regions() == f.n_regions());
  for (int m = 0; m < f.n_regions(); ++m)
    CHECK(std::abs(g.truth(m) - f.truth(m)) <= 5e-7);  // 6-decimal file format
}

TEST_CASE("truncated field files are rejected") {
  auto f = SignalField::generate(11, 100.0, 10.0);
  std::stringstream ss;
  f.save(ss);
  std::string text = ss.str();
  std::stringstream bad(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS((void)SignalField::load(bad), std::runtime_error);
}
