#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bridge/numerics.hpp"

namespace bridge {

inline constexpr int kHoursPerDay = 24;

struct Region {
  int id = 0;
  Vector context;
};

/// Anchor-time cutoffs: anchors t < train_end are train, t < val_end are
/// validation, the rest test.
struct SplitBoundaries {
  int train_end = 0;
  int val_end = 0;
};

struct CityDataset {
  std::string name;
  std::vector<Region> regions;
  Matrix demand;  // T_total x N, column i belongs to regions[i]
  int hour0 = 0;
  SplitBoundaries split;

  /// Generator ground truth; empty for datasets loaded from disk.
  std::vector<int> archetypes;

  int n_regions() const { return static_cast<int>(regions.size()); }
  int t_total() const { return static_cast<int>(demand.rows()); }
  int context_dim() const { return regions.empty() ? 0 : static_cast<int>(regions[0].context.size()); }
  int hour_at(int t) const { return (hour0 + t) % kHoursPerDay; }

  /// N x d_c, one row per region.
  Matrix contexts() const;
  Matrix contexts(const std::vector<int>& region_ids) const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;
};

struct ForecastInstance {
  int anchor = 0;
  Matrix history;  // W x N, rows anchor-W+1 .. anchor
  Matrix future;   // H x N, rows anchor+1 .. anchor+H
  std::vector<std::uint8_t> mask;
  int hour = 0;
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

template <typename T>
struct WindowSplit {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  int n_regions = 30;
  int d_c = 8;
  int n_archetypes = 4;
  int t_total = 4281;  // 4234 windows at W = H = 24
  double noise_scale = 0.3;
  std::uint64_t seed = 1;

  // Region scales are scale_mean * exp(scale_log_sd * N(0, 1)).
  double scale_mean = 10.0;
  double scale_log_sd = 0.2;
  double weekend_factor = 0.8;
  double context_jitter = 0.1;
  double location_extent = 0.25;
  int hour0 = 0;
  int window = 24;
  int horizon = 24;
  SplitRatios ratios;

  void validate() const;
};

/// Smooth 24-point daily curve for archetype `a`; peak hours differ per archetype.
std::array<double, kHoursPerDay> archetype_profile(int archetype, int n_archetypes);

/// 1 on weekdays, `weekend_factor` on the last two days of each 7-day week.
double weekday_factor(int hour0, int t, double weekend_factor);

CityDataset generate_synthetic_city(const SyntheticSpec& spec);

/// Number of windows of history W and horizon H over T intervals at stride 1.
inline int window_count(int t_total, int window, int horizon) {
  return t_total - window - horizon + 1;
}

/// Window anchored at t: history rows t-W+1..t, future rows t+1..t+H.
ForecastInstance make_instance(const CityDataset& city, int anchor, int window, int horizon);

std::vector<ForecastInstance> make_windows(const CityDataset& city, int window, int horizon,
                                           int stride = 1);

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios);

/// Chronological split: the first round(n*train) items, then round(n*val), then the rest.
template <typename T>
WindowSplit<T> split_windows(const std::vector<T>& items, const SplitRatios& ratios) {
  const SplitSizes sizes = split_sizes(items.size(), ratios);
  WindowSplit<T> out;
  const auto train_end = items.begin() + static_cast<std::ptrdiff_t>(sizes.train);
  const auto val_end = train_end + static_cast<std::ptrdiff_t>(sizes.val);
  out.train.assign(items.begin(), train_end);
  out.val.assign(train_end, val_end);
  out.test.assign(val_end, items.end());
  return out;
}

/// Copy with inactive regions' history columns zeroed and mask entries cleared.
ForecastInstance masked_view(const ForecastInstance& instance, const std::set<int>& inactive);

/// Anchors per split according to the dataset's boundaries.
WindowSplit<int> split_anchors(const CityDataset& city, int window, int horizon, int stride = 1);

/// Global z-score statistics.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  double forward(double v) const { return (v - mean) / std; }
  double inverse(double v) const { return v * std + mean; }
};

/// Statistics over demand rows [0, split.train_end) of the given regions.
Normalizer fit_normalizer(const CityDataset& city, const std::vector<int>& region_ids);

std::vector<int> all_region_ids(const CityDataset& city);

}  // namespace bridge
