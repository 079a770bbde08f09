#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fairfeeder/common.hpp"

namespace fairfeeder {

// d1: cap the largest curtailed power.  d2: cap the largest ratio of
// curtailment to available export.  d3: lift the smallest post-curtailment
// export among curtailed households.
enum class FairnessDefinition {
  EgalitarianCurtailment,
  ProportionalCurtailment,
  EgalitarianOutput,
};

enum class FairnessHorizon { Instant, Accumulative };

struct FairnessCase {
  FairnessDefinition definition = FairnessDefinition::EgalitarianCurtailment;
  FairnessHorizon horizon = FairnessHorizon::Instant;
  double epsilon_kw = 1e-3;   // denominator guard for the ratio forms
  double ratio_cap = 1e3;     // bounds d2 so a net consumer cannot blow up
  bool strict_eligibility = false;  // d2/d3: drop households without surplus

  void validate() const {
    require(epsilon_kw > 0.0, "fairness: epsilon must be positive");
    require(ratio_cap > 0.0, "fairness: ratio_cap must be positive");
  }
};

// Curtailment decisions with the generation/load context they acted on.
// Matrices are row-major [timestep][household].
struct CurtailmentProfile {
  std::size_t timesteps = 0;
  std::size_t households = 0;
  std::vector<double> alpha;
  std::vector<double> generation_kw;
  std::vector<double> load_kw;
  double step_hours = kStepHours;

  double& at_alpha(std::size_t t, std::size_t h) { return alpha[t * households + h]; }
  double alpha_at(std::size_t t, std::size_t h) const { return alpha[t * households + h]; }
  double gen_at(std::size_t t, std::size_t h) const { return generation_kw[t * households + h]; }
  double load_at(std::size_t t, std::size_t h) const { return load_kw[t * households + h]; }

  std::span<const double> alpha_row(std::size_t t) const {
    return {alpha.data() + t * households, households};
  }
  std::span<const double> gen_row(std::size_t t) const {
    return {generation_kw.data() + t * households, households};
  }
  std::span<const double> load_row(std::size_t t) const {
    return {load_kw.data() + t * households, households};
  }

  void validate() const {
    const std::size_t n = timesteps * households;
    require(timesteps > 0 && households > 0, "profile: empty dimensions");
    require(alpha.size() == n && generation_kw.size() == n && load_kw.size() == n,
            "profile: matrix sizes disagree with dimensions");
    require(step_hours > 0.0, "profile: step_hours must be positive");
    for (std::size_t i = 0; i < n; ++i) {
      require(alpha[i] >= 0.0 && alpha[i] <= 1.0,
              "profile: curtailment fraction outside [0, 1]");
      require(generation_kw[i] >= 0.0 && load_kw[i] >= 0.0,
              "profile: negative generation or load");
    }
  }
};

// --- Definition 1: egalitarian curtailment -------------------------------

inline double f1_instant(std::span<const double> gen_kw,
                         std::span<const double> alpha) {
  require(!gen_kw.empty(), "f1_instant: no households");
  require(gen_kw.size() == alpha.size(), "f1_instant: length mismatch");
  double worst = 0.0;
  for (std::size_t h = 0; h < gen_kw.size(); ++h)
    worst = std::max(worst, alpha[h] * gen_kw[h]);
  return worst;
}

inline double f1_accumulative(const CurtailmentProfile& profile,
                              std::size_t end_step = SIZE_MAX) {
  profile.validate();
  const std::size_t last = std::min(end_step, profile.timesteps - 1);
  double worst = 0.0;
  for (std::size_t h = 0; h < profile.households; ++h) {
    double total = 0.0;
    for (std::size_t t = 0; t <= last; ++t)
      total += profile.alpha_at(t, h) * profile.gen_at(t, h) * profile.step_hours;
    worst = std::max(worst, total);
  }
  return worst;
}

// --- Definition 2: proportional curtailment ------------------------------

inline double f2_instant(std::span<const double> gen_kw,
                         std::span<const double> load_kw,
                         std::span<const double> alpha, double epsilon_kw,
                         double ratio_cap = 1e3, bool strict = false) {
  require(!gen_kw.empty(), "f2_instant: no households");
  require(gen_kw.size() == load_kw.size() && gen_kw.size() == alpha.size(),
          "f2_instant: length mismatch");
  require(epsilon_kw > 0.0, "f2_instant: epsilon must be positive");
  double worst = 0.0;
  for (std::size_t h = 0; h < gen_kw.size(); ++h) {
    const double surplus = gen_kw[h] - load_kw[h];
    if (strict && surplus <= 0.0) continue;
    const double ratio = alpha[h] * gen_kw[h] / std::max(epsilon_kw, surplus);
    worst = std::max(worst, std::min(ratio, ratio_cap));
  }
  return worst;
}

inline double accumulated_export_kwh(const CurtailmentProfile& profile,
                                     std::size_t h, std::size_t last) {
  double total = 0.0;
  for (std::size_t t = 0; t <= last; ++t)
    total += (profile.gen_at(t, h) - profile.load_at(t, h)) * profile.step_hours;
  return total;
}

inline double f2_accumulative(const CurtailmentProfile& profile,
                              double epsilon_kw, double ratio_cap = 1e3,
                              bool strict = false,
                              std::size_t end_step = SIZE_MAX) {
  profile.validate();
  require(epsilon_kw > 0.0, "f2_accumulative: epsilon must be positive");
  const std::size_t last = std::min(end_step, profile.timesteps - 1);
  double worst = 0.0;
  for (std::size_t h = 0; h < profile.households; ++h) {
    const double available = accumulated_export_kwh(profile, h, last);
    if (strict && available <= 0.0) continue;
    double curtailed = 0.0;
    for (std::size_t t = 0; t <= last; ++t)
      curtailed += profile.alpha_at(t, h) * profile.gen_at(t, h) * profile.step_hours;
    const double ratio = curtailed / std::max(epsilon_kw, available);
    worst = std::max(worst, std::min(ratio, ratio_cap));
  }
  return worst;
}

// --- Definition 3: egalitarian output ------------------------------------

// Households that were never curtailed are masked by substituting the
// largest surplus, so they cannot bind the minimum.
inline double f3_instant(std::span<const double> gen_kw,
                         std::span<const double> load_kw,
                         std::span<const double> alpha, bool strict = false) {
  require(!gen_kw.empty(), "f3_instant: no households");
  require(gen_kw.size() == load_kw.size() && gen_kw.size() == alpha.size(),
          "f3_instant: length mismatch");
  double max_surplus = -std::numeric_limits<double>::infinity();
  bool any_eligible = false;
  for (std::size_t h = 0; h < gen_kw.size(); ++h) {
    if (strict && gen_kw[h] - load_kw[h] <= 0.0) continue;
    any_eligible = true;
    max_surplus = std::max(max_surplus, gen_kw[h] - load_kw[h]);
  }
  if (!any_eligible) return 0.0;  // strict mode with nothing to protect

  double binding = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < gen_kw.size(); ++h) {
    if (strict && gen_kw[h] - load_kw[h] <= 0.0) continue;
    const double value = alpha[h] > 0.0
                             ? (1.0 - alpha[h]) * gen_kw[h] - load_kw[h]
                             : max_surplus;
    binding = std::min(binding, value);
  }
  return -binding;
}

inline double f3_accumulative(const CurtailmentProfile& profile,
                              bool strict = false,
                              std::size_t end_step = SIZE_MAX) {
  profile.validate();
  const std::size_t last = std::min(end_step, profile.timesteps - 1);

  double max_export = -std::numeric_limits<double>::infinity();
  bool any_eligible = false;
  for (std::size_t h = 0; h < profile.households; ++h) {
    const double available = accumulated_export_kwh(profile, h, last);
    if (strict && available <= 0.0) continue;
    any_eligible = true;
    max_export = std::max(max_export, available);
  }
  if (!any_eligible) return 0.0;

  double binding = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < profile.households; ++h) {
    const double available = accumulated_export_kwh(profile, h, last);
    if (strict && available <= 0.0) continue;
    double alpha_total = 0.0;
    double realized = 0.0;
    for (std::size_t t = 0; t <= last; ++t) {
      alpha_total += profile.alpha_at(t, h);
      realized += ((1.0 - profile.alpha_at(t, h)) * profile.gen_at(t, h) -
                   profile.load_at(t, h)) *
                  profile.step_hours;
    }
    binding = std::min(binding, alpha_total > 0.0 ? realized : max_export);
  }
  return -binding;
}

// Route a fairness case to its penalty function. Instant cases read column t;
// accumulative cases fold the horizon up to and including t.
inline double dispatch(const FairnessCase& fairness,
                       const CurtailmentProfile& profile, std::size_t t) {
  fairness.validate();
  require(t < profile.timesteps, "dispatch: timestep out of range");
  if (fairness.horizon == FairnessHorizon::Instant) {
    const auto gen = profile.gen_row(t);
    const auto load = profile.load_row(t);
    const auto alpha = profile.alpha_row(t);
    switch (fairness.definition) {
      case FairnessDefinition::EgalitarianCurtailment:
        return f1_instant(gen, alpha);
      case FairnessDefinition::ProportionalCurtailment:
        return f2_instant(gen, load, alpha, fairness.epsilon_kw,
                          fairness.ratio_cap, fairness.strict_eligibility);
      case FairnessDefinition::EgalitarianOutput:
        return f3_instant(gen, load, alpha, fairness.strict_eligibility);
    }
  }
  switch (fairness.definition) {
    case FairnessDefinition::EgalitarianCurtailment:
      return f1_accumulative(profile, t);
    case FairnessDefinition::ProportionalCurtailment:
      return f2_accumulative(profile, fairness.epsilon_kw, fairness.ratio_cap,
                             fairness.strict_eligibility, t);
    case FairnessDefinition::EgalitarianOutput:
      return f3_accumulative(profile, fairness.strict_eligibility, t);
  }
  return 0.0;  // unreachable
}

// Mean-absolute-difference Gini index over a non-negative sample.
inline double gini_index(std::span<const double> values) {
  require(!values.empty(), "gini_index: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(values[i] >= 0.0, "gini_index: negative value at position " +
                                  std::to_string(i));
    sum += values[i];
  }
  if (sum == 0.0) return 0.0;  // all-zero sample counts as perfectly equal
  const double n = static_cast<double>(values.size());
  double abs_diff = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values.size(); ++j)
      abs_diff += std::abs(values[i] - values[j]);
  return abs_diff / (2.0 * n * sum);
}

}  // namespace fairfeeder
