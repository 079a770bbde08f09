#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairfeeder/common.hpp"

namespace fairfeeder {

// One household's half-hourly metering history. Series run day-major:
// index = day * 48 + slot.
struct HouseholdTimeseries {
  std::string household_id;
  std::vector<double> load_kw;
  std::vector<double> generation_kw;
};

struct Dataset {
  std::vector<HouseholdTimeseries> households;

  std::size_t household_count() const { return households.size(); }
  std::size_t series_length() const {
    return households.empty() ? 0 : households.front().load_kw.size();
  }
  std::size_t days() const { return series_length() / kSlotsPerDay; }
};

// One midnight-aligned day for all households; matrices are [slot][household].
struct EpisodeBatch {
  std::size_t day_index = 0;
  std::size_t households = 0;
  std::vector<double> load_kw;
  std::vector<double> gen_kw;

  double load_at(std::size_t slot, std::size_t h) const {
    return load_kw[slot * households + h];
  }
  double gen_at(std::size_t slot, std::size_t h) const {
    return gen_kw[slot * households + h];
  }
  std::span<const double> load_row(std::size_t slot) const {
    return {load_kw.data() + slot * households, households};
  }
  std::span<const double> gen_row(std::size_t slot) const {
    return {gen_kw.data() + slot * households, households};
  }
};

inline EpisodeBatch extract_day(const Dataset& dataset, std::size_t day) {
  require(day < dataset.days(), "extract_day: day index out of range");
  EpisodeBatch batch;
  batch.day_index = day;
  batch.households = dataset.household_count();
  batch.load_kw.resize(kSlotsPerDay * batch.households);
  batch.gen_kw.resize(kSlotsPerDay * batch.households);
  for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
    for (std::size_t h = 0; h < batch.households; ++h) {
      const std::size_t src = day * kSlotsPerDay + slot;
      batch.load_kw[slot * batch.households + h] = dataset.households[h].load_kw[src];
      batch.gen_kw[slot * batch.households + h] =
          dataset.households[h].generation_kw[src];
    }
  }
  return batch;
}

namespace detail {

inline double parse_number(std::string_view field, std::size_t row,
                           const char* what) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("dataset: row " + std::to_string(row) +
                             ": malformed " + what + " value '" +
                             std::string(field) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

inline constexpr const char* kDatasetHeader = "day,slot,household_id,load_kw,gen_kw";

// Load the half-hourly CSV (header mandatory). Rows may arrive in any order;
// every household must cover the same day range with no gaps.
inline Dataset load_dataset(const std::string& path,
                            std::size_t household_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw std::runtime_error("dataset: no data rows in '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader)
    throw std::runtime_error("dataset: bad header, expected '" +
                             std::string(kDatasetHeader) + "'");

  struct Cell { double load, gen; };
  std::unordered_map<std::string, std::vector<std::pair<std::uint64_t, Cell>>> raw;
  std::vector<std::string> id_order;
  std::size_t row = 1;
  std::uint64_t max_index = 0;
  bool any_row = false;

  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 5)
      throw std::runtime_error("dataset: row " + std::to_string(row) +
                               ": expected 5 fields, got " +
                               std::to_string(fields.size()));
    const auto day = static_cast<std::uint64_t>(
        detail::parse_number(fields[0], row, "day"));
    const auto slot = static_cast<std::uint64_t>(
        detail::parse_number(fields[1], row, "slot"));
    if (slot >= kSlotsPerDay)
      throw std::runtime_error("dataset: row " + std::to_string(row) +
                               ": slot out of range");
    const double load = detail::parse_number(fields[3], row, "load_kw");
    const double gen = detail::parse_number(fields[4], row, "gen_kw");
    if (!(load >= 0.0) || !std::isfinite(load))
      throw std::runtime_error("dataset: row " + std::to_string(row) +
                               ": negative or non-finite load");
    if (!(gen >= 0.0) || !std::isfinite(gen))
      throw std::runtime_error("dataset: row " + std::to_string(row) +
                               ": negative or non-finite generation");
    std::string id(fields[2]);
    auto it = raw.find(id);
    if (it == raw.end()) {
      id_order.push_back(id);
      it = raw.emplace(std::move(id), decltype(raw)::mapped_type{}).first;
    }
    const std::uint64_t index = day * kSlotsPerDay + slot;
    max_index = std::max(max_index, index);
    it->second.push_back({index, Cell{load, gen}});
    any_row = true;
  }
  if (!any_row) throw std::runtime_error("dataset: no data rows in '" + path + "'");
  if (id_order.size() != household_count)
    throw std::runtime_error("dataset: expected " +
                             std::to_string(household_count) +
                             " households, found " +
                             std::to_string(id_order.size()));

  const std::size_t length = static_cast<std::size_t>(max_index) + 1;
  Dataset dataset;
  dataset.households.reserve(id_order.size());
  for (const auto& id : id_order) {
    HouseholdTimeseries series;
    series.household_id = id;
    series.load_kw.assign(length, -1.0);  // sentinel marks missing cells
    series.generation_kw.assign(length, -1.0);
    for (const auto& [index, cell] : raw[id]) {
      series.load_kw[index] = cell.load;
      series.generation_kw[index] = cell.gen;
    }
    for (std::size_t i = 0; i < length; ++i) {
      if (series.load_kw[i] < 0.0)
        throw std::runtime_error("dataset: household '" + id +
                                 "' is missing day " +
                                 std::to_string(i / kSlotsPerDay) + " slot " +
                                 std::to_string(i % kSlotsPerDay));
    }
    dataset.households.push_back(std::move(series));
  }
  if (length % kSlotsPerDay != 0)
    throw std::runtime_error("dataset: series length " + std::to_string(length) +
                             " is not a whole number of days");
  return dataset;
}

// Write the CSV with six fractional digits; load_dataset reads it back
// exactly when values are already quantized to 1e-6.
inline void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dataset: cannot write '" + path + "'");
  out << kDatasetHeader << '\n';
  char buffer[64];
  for (std::size_t day = 0; day < dataset.days(); ++day) {
    for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
      for (const auto& series : dataset.households) {
        const std::size_t i = day * kSlotsPerDay + slot;
        out << day << ',' << slot << ',' << series.household_id << ',';
        std::snprintf(buffer, sizeof(buffer), "%.6f,%.6f", series.load_kw[i],
                      series.generation_kw[i]);
        out << buffer << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("dataset: write failed for '" + path + "'");
}

enum class SplitMode { SeededRandom, Chronological };

struct TrainTestSplit {
  std::vector<std::size_t> train_days;
  std::vector<std::size_t> test_days;
};

inline TrainTestSplit split_train_test(std::size_t total_days,
                                       double train_fraction,
                                       std::uint64_t seed,
                                       SplitMode mode = SplitMode::SeededRandom) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split: train fraction must lie in (0, 1)");
  require(total_days >= 2, "split: need at least 2 days");
  std::vector<std::size_t> order(total_days);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == SplitMode::SeededRandom) {
    RandomStream rng(seed);
    for (std::size_t i = total_days - 1; i > 0; --i)
      std::swap(order[i], order[rng.index(i + 1)]);
  }
  std::size_t train_count =
      static_cast<std::size_t>(std::floor(train_fraction * total_days));
  train_count = std::clamp<std::size_t>(train_count, 1, total_days - 1);
  TrainTestSplit split;
  split.train_days.assign(order.begin(), order.begin() + train_count);
  split.test_days.assign(order.begin() + train_count, order.end());
  std::sort(split.train_days.begin(), split.train_days.end());
  std::sort(split.test_days.begin(), split.test_days.end());
  return split;
}

inline EpisodeBatch sample_episode(const Dataset& dataset,
                                   std::span<const std::size_t> day_pool,
                                   RandomStream& rng) {
  require(!day_pool.empty(), "sample_episode: empty day pool");
  return extract_day(dataset, day_pool[rng.index(day_pool.size())]);
}

namespace detail {

inline double quantize6(double x) { return std::round(x * 1e6) / 1e6; }

inline double gaussian_bump(double tod_hours, double center, double width) {
  const double z = (tod_hours - center) / width;
  return std::exp(-0.5 * z * z);
}

}  // namespace detail

// Synthetic residential data: a solar bell between 6:00 and 20:00 with
// per-day cloud attenuation, plus morning/evening load peaks over a small
// base load. Values are quantized to the CSV's six decimals.
inline Dataset synth_dataset(std::size_t households, std::size_t days,
                             std::uint64_t seed) {
  require(households > 0, "synth: need at least one household");
  require(days > 0, "synth: need at least one day");
  RandomStream rng(seed);
  Dataset dataset;
  dataset.households.resize(households);

  std::vector<double> pv_capacity(households);
  std::vector<double> base_load(households);
  std::vector<double> morning_amp(households);
  std::vector<double> evening_amp(households);
  for (std::size_t h = 0; h < households; ++h) {
    pv_capacity[h] = rng.uniform(4.0, 5.5);
    base_load[h] = rng.uniform(0.25, 0.45);
    morning_amp[h] = rng.uniform(0.3, 0.7);
    evening_amp[h] = rng.uniform(0.6, 1.2);
    char id[24];
    std::snprintf(id, sizeof(id), "h%02u", static_cast<unsigned>(h));
    dataset.households[h].household_id = id;
    dataset.households[h].load_kw.resize(days * kSlotsPerDay);
    dataset.households[h].generation_kw.resize(days * kSlotsPerDay);
  }

  for (std::size_t day = 0; day < days; ++day) {
    for (std::size_t h = 0; h < households; ++h) {
      const double cloud = rng.uniform(0.72, 1.0);
      for (std::size_t slot = 0; slot < kSlotsPerDay; ++slot) {
        const double tod = static_cast<double>(slot) * 0.5;
        double gen = 0.0;
        if (tod >= 6.0 && tod < 20.0) {
          const double phase = (tod - 6.0) / 14.0;  // 0..1 across daylight
          const double bell =
              std::pow(std::max(0.0, std::sin(phase * kTwoPi / 2.0)), 1.3);
          gen = pv_capacity[h] * cloud * bell;
        }
        double load = base_load[h] +
                      morning_amp[h] * detail::gaussian_bump(tod, 7.5, 1.2) +
                      evening_amp[h] * detail::gaussian_bump(tod, 18.5, 1.6) +
                      rng.uniform(0.0, 0.05);
        const std::size_t i = day * kSlotsPerDay + slot;
        dataset.households[h].generation_kw[i] =
            detail::quantize6(std::max(0.0, gen));
        dataset.households[h].load_kw[i] = detail::quantize6(std::max(0.0, load));
      }
    }
  }
  return dataset;
}

}  // namespace fairfeeder
