#pragma once

#include <cstddef>
#include <string>

#include "fairfeeder/common.hpp"
#include "fairfeeder/fairness.hpp"

namespace fairfeeder {

// Time-of-use import prices plus a flat feed-in tariff, in $/kWh.
// Windows are half-open: peak [14:00, 19:30), off-peak [23:00, 7:00)
// wrapping midnight, shoulder everywhere else.
struct TariffSchedule {
  double offpeak_per_kwh = 0.12;
  double peak_per_kwh = 0.52;
  double shoulder_per_kwh = 0.22;
  double feed_in_per_kwh = 0.10;

  void validate() const {
    require(offpeak_per_kwh >= 0.0 && peak_per_kwh >= 0.0 &&
                shoulder_per_kwh >= 0.0 && feed_in_per_kwh >= 0.0,
            "tariff: prices must be non-negative");
  }
};

enum class TariffWindow { OffPeak, Peak, Shoulder };

inline TariffWindow tariff_window(std::size_t slot) {
  require(slot < kSlotsPerDay, "tariff: slot out of range");
  if (slot >= 46 || slot < 14) return TariffWindow::OffPeak;  // 23:00-7:00
  if (slot >= 28 && slot < 39) return TariffWindow::Peak;     // 14:00-19:30
  return TariffWindow::Shoulder;
}

inline double price_at(std::size_t slot, const TariffSchedule& schedule) {
  switch (tariff_window(slot)) {
    case TariffWindow::OffPeak: return schedule.offpeak_per_kwh;
    case TariffWindow::Peak: return schedule.peak_per_kwh;
    case TariffWindow::Shoulder: return schedule.shoulder_per_kwh;
  }
  return schedule.shoulder_per_kwh;  // unreachable
}

// SplitPrice bills imports at the ToU rate and pays exports the feed-in
// tariff. LiteralNet applies the ToU rate to the signed net quantity.
enum class PricingMode { SplitPrice, LiteralNet };

struct CostOptions {
  PricingMode mode = PricingMode::SplitPrice;
  bool include_step_hours = true;  // off: price powers instead of energies
  std::size_t slot_offset = 0;     // tariff slot of profile timestep 0
};

struct CostBreakdown {
  double import_cost = 0.0;
  double export_revenue = 0.0;
  double total() const { return import_cost - export_revenue; }
};

// Total electricity cost of a curtailment profile in $. Timesteps map onto
// tariff slots modulo 48, with step 0 at midnight.
inline CostBreakdown electricity_cost_breakdown(
    const CurtailmentProfile& profile, const TariffSchedule& schedule,
    const CostOptions& options = {}) {
  profile.validate();
  schedule.validate();
  CostBreakdown out;
  const double delta = options.include_step_hours ? profile.step_hours : 1.0;
  for (std::size_t t = 0; t < profile.timesteps; ++t) {
    const double price = price_at((t + options.slot_offset) % kSlotsPerDay, schedule);
    for (std::size_t h = 0; h < profile.households; ++h) {
      const double net = profile.gen_at(t, h) * (1.0 - profile.alpha_at(t, h)) -
                         profile.load_at(t, h);
      if (options.mode == PricingMode::LiteralNet) {
        out.import_cost += price * (-net) * delta;
      } else {
        if (net < 0.0) out.import_cost += price * (-net) * delta;
        else out.export_revenue += schedule.feed_in_per_kwh * net * delta;
      }
    }
  }
  return out;
}

inline double electricity_cost(const CurtailmentProfile& profile,
                               const TariffSchedule& schedule,
                               const CostOptions& options = {}) {
  return electricity_cost_breakdown(profile, schedule, options).total();
}

}  // namespace fairfeeder
