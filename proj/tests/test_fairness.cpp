#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "fairfeeder/common.hpp"
#include "fairfeeder/fairness.hpp"

using namespace fairfeeder;

namespace {

using Vec = std::vector<double>;

CurtailmentProfile make_profile(std::size_t timesteps, std::size_t households) {
  CurtailmentProfile profile;
  profile.timesteps = timesteps;
  profile.households = households;
  profile.alpha.assign(timesteps * households, 0.0);
  profile.generation_kw.assign(timesteps * households, 0.0);
  profile.load_kw.assign(timesteps * households, 0.0);
  return profile;
}

CurtailmentProfile random_profile(RandomStream& rng, std::size_t timesteps,
                                  std::size_t households) {
  CurtailmentProfile profile = make_profile(timesteps, households);
  for (auto& a : profile.alpha) a = rng.uniform01();
  for (auto& g : profile.generation_kw) g = rng.uniform(0.0, 6.0);
  for (auto& l : profile.load_kw) l = rng.uniform(0.0, 3.0);
  return profile;
}

}  // namespace

TEST_CASE("f1_instant is the worst curtailed power") {
  const std::vector<double> zero = {0.0, 0.0};
  CHECK(f1_instant(Vec{4.0, 2.0}, zero) == 0.0);
  CHECK(f1_instant(Vec{4.0, 2.0}, Vec{0.5, 1.0}) == Catch::Approx(2.0).margin(1e-12));
  CHECK(f1_instant(Vec{4.0, 2.0}, Vec{0.25, 0.6}) == Catch::Approx(1.2).margin(1e-12));
  CHECK_THROWS_AS(f1_instant(Vec{}, Vec{}), std::invalid_argument);
}

TEST_CASE("f1_accumulative folds energy and picks the worst household") {
  CurtailmentProfile profile = make_profile(2, 1);
  profile.generation_kw = {4.0, 4.0};
  profile.alpha = {0.5, 0.5};
  CHECK(f1_accumulative(profile) == Catch::Approx(2.0).margin(1e-12));

  profile.alpha = {0.0, 0.0};
  CHECK(f1_accumulative(profile) == 0.0);

  // brute force over households on random data
  RandomStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    CurtailmentProfile p = random_profile(rng, 4, 3);
    double expected = 0.0;
    for (std::size_t h = 0; h < 3; ++h) {
      double total = 0.0;
      for (std::size_t t = 0; t < 4; ++t)
        total += p.alpha_at(t, h) * p.gen_at(t, h) * p.step_hours;
      expected = std::max(expected, total);
    }
    CHECK(f1_accumulative(p) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("f2_instant is the worst curtailment-to-export ratio") {
  CHECK(f2_instant(Vec{4.0}, Vec{2.0}, Vec{0.0}, 1e-3) == 0.0);
  CHECK(f2_instant(Vec{4.0}, Vec{2.0}, Vec{0.5}, 1e-3) ==
        Catch::Approx(1.0).margin(1e-12));
  // no surplus: the epsilon guard takes over
  CHECK(f2_instant(Vec{1.0}, Vec{2.0}, Vec{0.5}, 1e-3) ==
        Catch::Approx(500.0).margin(1e-9));
  // a tight cap clamps the same input
  CHECK(f2_instant(Vec{1.0}, Vec{2.0}, Vec{0.5}, 1e-3, 100.0) ==
        Catch::Approx(100.0).margin(1e-12));
}

TEST_CASE("f2_accumulative uses total energies") {
  CurtailmentProfile profile = make_profile(2, 1);
  profile.generation_kw = {4.0, 4.0};
  profile.load_kw = {2.0, 2.0};
  profile.alpha = {0.5, 0.5};
  CHECK(f2_accumulative(profile, 1e-3) == Catch::Approx(1.0).margin(1e-12));

  profile.alpha = {0.0, 0.0};
  CHECK(f2_accumulative(profile, 1e-3) == 0.0);

  // net consumer: denominator is epsilon, output hits the cap
  profile.generation_kw = {1.0, 1.0};
  profile.load_kw = {3.0, 3.0};
  profile.alpha = {1.0, 1.0};
  CHECK(f2_accumulative(profile, 1e-3) == Catch::Approx(1000.0).margin(1e-9));
}

TEST_CASE("f3_instant masks uncurtailed households with the max surplus") {
  CHECK(f3_instant(Vec{4.0, 4.0}, Vec{1.0, 1.0}, Vec{0.0, 0.0}) ==
        Catch::Approx(-3.0).margin(1e-12));
  CHECK(f3_instant(Vec{4.0, 4.0}, Vec{1.0, 1.0}, Vec{0.5, 0.0}) ==
        Catch::Approx(-1.0).margin(1e-12));

  // raising a curtailed household's export weakly lowers the penalty
  RandomStream rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.index(3);
    std::vector<double> gen(n), load(n), alpha(n);
    for (std::size_t h = 0; h < n; ++h) {
      gen[h] = rng.uniform(0.0, 5.0);
      load[h] = rng.uniform(0.0, 2.0);
      alpha[h] = rng.uniform01();
    }
    const double before = f3_instant(gen, load, alpha);
    const std::size_t pick = rng.index(n);
    if (alpha[pick] == 0.0) continue;
    std::vector<double> eased = alpha;
    eased[pick] = std::max(1e-12, alpha[pick] * rng.uniform01());
    const double after = f3_instant(gen, load, eased);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("f3_accumulative masks never-curtailed households") {
  CurtailmentProfile profile = make_profile(2, 1);
  profile.generation_kw = {4.0, 4.0};
  profile.load_kw = {0.5, 0.5};
  profile.alpha = {0.5, 0.5};
  // realized export: 2 * ((0.5 * 4 - 0.5) * 0.5) = 1.5 kWh
  CHECK(f3_accumulative(profile) == Catch::Approx(-1.5).margin(1e-12));

  profile.alpha = {0.0, 0.0};
  // no curtailment anywhere: penalty is minus the best available export
  CHECK(f3_accumulative(profile) == Catch::Approx(-3.5).margin(1e-12));

  // the masked (uncurtailed) household cannot steal the binding role
  CurtailmentProfile trio = make_profile(1, 3);
  trio.generation_kw = {4.0, 6.0, 5.0};
  trio.load_kw = {1.0, 1.0, 1.0};
  trio.alpha = {0.9, 0.0, 0.0};
  const double binding = f3_accumulative(trio);
  trio.generation_kw[1] = 9.0;  // bigger uncurtailed export
  CHECK(f3_accumulative(trio) == Catch::Approx(binding).margin(1e-12));
}

TEST_CASE("dispatch routes by definition and horizon") {
  RandomStream rng(5);
  CurtailmentProfile profile = random_profile(rng, 6, 3);
  FairnessCase fairness;
  fairness.horizon = FairnessHorizon::Instant;

  fairness.definition = FairnessDefinition::EgalitarianCurtailment;
  CHECK(dispatch(fairness, profile, 2) ==
        f1_instant(profile.gen_row(2), profile.alpha_row(2)));
  fairness.definition = FairnessDefinition::ProportionalCurtailment;
  CHECK(dispatch(fairness, profile, 2) ==
        f2_instant(profile.gen_row(2), profile.load_row(2), profile.alpha_row(2),
                   fairness.epsilon_kw, fairness.ratio_cap, false));
  fairness.definition = FairnessDefinition::EgalitarianOutput;
  CHECK(dispatch(fairness, profile, 2) ==
        f3_instant(profile.gen_row(2), profile.load_row(2), profile.alpha_row(2),
                   false));

  // accumulative horizon folds rows 0..t only
  fairness.horizon = FairnessHorizon::Accumulative;
  fairness.definition = FairnessDefinition::EgalitarianCurtailment;
  CHECK(dispatch(fairness, profile, 3) == f1_accumulative(profile, 3));
}

TEST_CASE("accumulative equals scaled instant on a single step") {
  RandomStream rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    CurtailmentProfile profile = random_profile(rng, 1, 4);
    CHECK(f1_accumulative(profile) ==
          Catch::Approx(profile.step_hours *
                        f1_instant(profile.gen_row(0), profile.alpha_row(0)))
              .margin(1e-12));
  }
}

TEST_CASE("raising curtailment never lowers the d1/d2 penalties") {
  RandomStream rng(9);
  for (int trial = 0; trial < 2500; ++trial) {
    CurtailmentProfile profile = random_profile(rng, 3, 3);
    const std::size_t t = rng.index(3);
    const std::size_t h = rng.index(3);
    CurtailmentProfile bumped = profile;
    bumped.at_alpha(t, h) =
        std::min(1.0, profile.alpha_at(t, h) + rng.uniform(0.0, 0.5));

    CHECK(f1_instant(bumped.gen_row(t), bumped.alpha_row(t)) >=
          f1_instant(profile.gen_row(t), profile.alpha_row(t)) - 1e-12);
    CHECK(f1_accumulative(bumped) >= f1_accumulative(profile) - 1e-12);
    CHECK(f2_instant(bumped.gen_row(t), bumped.load_row(t), bumped.alpha_row(t),
                     1e-3) >=
          f2_instant(profile.gen_row(t), profile.load_row(t),
                     profile.alpha_row(t), 1e-3) -
              1e-12);
    CHECK(f2_accumulative(bumped, 1e-3) >= f2_accumulative(profile, 1e-3) - 1e-12);
  }
}

TEST_CASE("penalty signs: d1/d2 non-negative, d3 non-positive on surpluses") {
  RandomStream rng(13);
  for (int trial = 0; trial < 2500; ++trial) {
    CurtailmentProfile profile = random_profile(rng, 2, 3);
    CHECK(f1_instant(profile.gen_row(0), profile.alpha_row(0)) >= 0.0);
    CHECK(f1_accumulative(profile) >= 0.0);
    CHECK(f2_instant(profile.gen_row(0), profile.load_row(0),
                     profile.alpha_row(0), 1e-3) >= 0.0);
    CHECK(f2_accumulative(profile, 1e-3) >= 0.0);

    // force all per-household instant values non-negative, then f3 <= 0
    std::vector<double> gen(3), load(3), alpha(3);
    for (std::size_t h = 0; h < 3; ++h) {
      gen[h] = rng.uniform(1.0, 5.0);
      load[h] = rng.uniform(0.0, 0.4);
      alpha[h] = rng.uniform(0.0, 0.5);
    }
    CHECK(f3_instant(gen, load, alpha) <= 1e-12);
  }
}

TEST_CASE("strict eligibility drops households without surplus") {
  // second household consumes more than it generates
  const std::vector<double> gen = {4.0, 1.0};
  const std::vector<double> load = {1.0, 3.0};
  const std::vector<double> alpha = {0.1, 0.9};
  const double lenient = f2_instant(gen, load, alpha, 1e-3, 1e3, false);
  const double strict = f2_instant(gen, load, alpha, 1e-3, 1e3, true);
  CHECK(lenient > strict);  // the epsilon-guarded consumer dominated
  CHECK(strict == Catch::Approx(0.4 / 3.0).margin(1e-12));

  // nothing eligible at all
  CHECK(f2_instant(Vec{1.0}, Vec{2.0}, Vec{1.0}, 1e-3, 1e3, true) == 0.0);
  CHECK(f3_instant(Vec{1.0}, Vec{2.0}, Vec{1.0}, true) == 0.0);
}

TEST_CASE("gini index closed forms") {
  CHECK(gini_index(Vec{3.0, 3.0, 3.0}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(gini_index(Vec{1.0, 0.0}) == Catch::Approx(0.5).margin(1e-12));
  CHECK(gini_index(Vec{0.0, 0.0, 0.0, 1.0}) == Catch::Approx(0.75).margin(1e-12));
  CHECK(gini_index(Vec{0.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(gini_index(Vec{-1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(gini_index(Vec{}), std::invalid_argument);
}

TEST_CASE("gini bounds, permutation and scale invariance") {
  RandomStream rng(21);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng.index(9);
    std::vector<double> values(n);
    for (auto& v : values) v = rng.uniform(0.0, 10.0);
    const double g = gini_index(values);
    CHECK(g >= 0.0);
    CHECK(g < 1.0);

    std::vector<double> shuffled = values;
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[rng.index(i + 1)]);
    CHECK(gini_index(shuffled) == Catch::Approx(g).margin(1e-12));

    const double k = rng.uniform(0.1, 7.0);
    std::vector<double> scaled = values;
    for (auto& v : scaled) v *= k;
    CHECK(gini_index(scaled) == Catch::Approx(g).margin(1e-9));
  }
}
