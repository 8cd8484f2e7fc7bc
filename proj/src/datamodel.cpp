#include "bridge/datamodel.hpp"

#include <cmath>
#include <random>

namespace bridge {

namespace {

double circular_hour_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), static_cast<double>(kHoursPerDay));
  return std::min(d, kHoursPerDay - d);
}

}  // namespace

Matrix CityDataset::contexts() const { return contexts(all_region_ids(*this)); }

Matrix CityDataset::contexts(const std::vector<int>& region_ids) const {
  Matrix out(static_cast<Eigen::Index>(region_ids.size()), context_dim());
  for (std::size_t r = 0; r < region_ids.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = regions.at(static_cast<std::size_t>(region_ids[r])).context.transpose();
  }
  return out;
}

void CityDataset::validate() const {
  if (regions.empty()) throw DataError("dataset '" + name + "' has no regions");
  if (demand.cols() != n_regions()) {
    throw DataError("demand has " + std::to_string(demand.cols()) + " columns but there are " +
                    std::to_string(n_regions()) + " regions");
  }
  const int dc = context_dim();
  for (int i = 0; i < n_regions(); ++i) {
    const auto& r = regions[static_cast<std::size_t>(i)];
    if (r.id != i) throw DataError("region ids must equal their column index");
    if (r.context.size() != dc) throw DataError("context dimension differs across regions");
    if (!r.context.allFinite()) throw DataError("non-finite context entry");
  }
  if (!demand.allFinite()) throw DataError("non-finite demand entry");
  if (hour0 < 0 || hour0 >= kHoursPerDay) throw DataError("hour0 must lie in [0, 24)");
  if (!(0 <= split.train_end && split.train_end < split.val_end && split.val_end <= t_total())) {
    throw DataError("split boundaries must satisfy 0 <= train_end < val_end <= T_total");
  }
}

void SyntheticSpec::validate() const {
  if (n_regions < 1) throw ConfigError("synthetic: n_regions must be positive");
  if (n_archetypes < 2) throw ConfigError("synthetic: n_archetypes must be at least 2");
  if (d_c < n_archetypes) throw ConfigError("synthetic: d_c must be >= n_archetypes");
  if (window < 1 || horizon < 1) throw ConfigError("synthetic: window and horizon must be positive");
  if (t_total < window + horizon + 1) {
    throw ConfigError("synthetic: t_total must be at least window + horizon + 1");
  }
  if (noise_scale < 0) throw ConfigError("synthetic: noise_scale must be nonnegative");
  if (hour0 < 0 || hour0 >= kHoursPerDay) throw ConfigError("synthetic: hour0 must lie in [0, 24)");
}

std::array<double, kHoursPerDay> archetype_profile(int archetype, int n_archetypes) {
  const double primary = std::fmod(8.0 + archetype * static_cast<double>(kHoursPerDay) / n_archetypes,
                                   kHoursPerDay);
  const double secondary = std::fmod(primary + 5.0, kHoursPerDay);
  std::array<double, kHoursPerDay> profile{};
  for (int h = 0; h < kHoursPerDay; ++h) {
    const double d1 = circular_hour_distance(h, primary);
    const double d2 = circular_hour_distance(h, secondary);
    profile[static_cast<std::size_t>(h)] = 0.15 + std::exp(-d1 * d1 / (2.0 * 2.0 * 2.0)) +
                                           0.45 * std::exp(-d2 * d2 / (2.0 * 1.8 * 1.8));
  }
  return profile;
}

double weekday_factor(int hour0, int t, double weekend_factor) {
  const int day = (hour0 + t) / kHoursPerDay;
  return (day % 7) >= 5 ? weekend_factor : 1.0;
}

CityDataset generate_synthetic_city(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  CityDataset city;
  city.name = spec.name;
  city.hour0 = spec.hour0;

  const int n = spec.n_regions;
  std::vector<double> scales(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // Round-robin assignment keeps every archetype populated.
    const int archetype = (i < spec.n_archetypes) ? i : static_cast<int>(unit(rng) * spec.n_archetypes);
    city.archetypes.push_back(std::min(archetype, spec.n_archetypes - 1));
  }
  for (int i = 0; i < n; ++i) {
    Region region{i, Vector::Zero(spec.d_c)};
    region.context(city.archetypes[static_cast<std::size_t>(i)]) = 1.0;
    const int loc_begin = spec.n_archetypes;
    const int loc_end = std::min(spec.d_c, spec.n_archetypes + 2);
    for (int k = loc_begin; k < loc_end; ++k) {
      region.context(k) = spec.location_extent * unit(rng);
    }
    for (int k = 0; k < spec.d_c; ++k) {
      region.context(k) += spec.context_jitter * normal(rng);
    }
    city.regions.push_back(std::move(region));
    scales[static_cast<std::size_t>(i)] = spec.scale_mean * std::exp(spec.scale_log_sd * normal(rng));
  }

  std::vector<std::array<double, kHoursPerDay>> profiles;
  for (int a = 0; a < spec.n_archetypes; ++a) profiles.push_back(archetype_profile(a, spec.n_archetypes));

  city.demand.resize(spec.t_total, n);
  for (int t = 0; t < spec.t_total; ++t) {
    const double wf = weekday_factor(spec.hour0, t, spec.weekend_factor);
    const int hour = city.hour_at(t);
    for (int i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(city.archetypes[static_cast<std::size_t>(i)]);
      const double level = scales[static_cast<std::size_t>(i)] * profiles[a][static_cast<std::size_t>(hour)] * wf;
      // Over-dispersed count noise: standard deviation grows with sqrt(level).
      const double noise = spec.noise_scale * std::sqrt(level) * normal(rng);
      city.demand(t, i) = std::max(0.0, level + noise);
    }
  }

  const auto windows = static_cast<std::size_t>(window_count(spec.t_total, spec.window, spec.horizon));
  const SplitSizes sizes = split_sizes(windows, spec.ratios);
  const int first_anchor = spec.window - 1;
  city.split.train_end = first_anchor + static_cast<int>(sizes.train);
  city.split.val_end = city.split.train_end + static_cast<int>(sizes.val);
  city.validate();
  return city;
}

ForecastInstance make_instance(const CityDataset& city, int anchor, int window, int horizon) {
  if (anchor - window + 1 < 0 || anchor + horizon >= city.t_total()) {
    throw DataError("anchor " + std::to_string(anchor) + " out of range for window/horizon");
  }
  ForecastInstance inst;
  inst.anchor = anchor;
  inst.history = city.demand.middleRows(anchor - window + 1, window);
  inst.future = city.demand.middleRows(anchor + 1, horizon);
  inst.mask.assign(static_cast<std::size_t>(city.n_regions()), 1);
  inst.hour = city.hour_at(anchor);
  return inst;
}

std::vector<ForecastInstance> make_windows(const CityDataset& city, int window, int horizon, int stride) {
  if (window < 1 || horizon < 1 || stride < 1) {
    throw std::invalid_argument("make_windows: window, horizon and stride must be positive");
  }
  std::vector<ForecastInstance> out;
  for (int t = window - 1; t + horizon < city.t_total(); t += stride) {
    out.push_back(make_instance(city, t, window, horizon));
  }
  if (out.empty()) throw DataError("make_windows: no complete window fits the dataset");
  return out;
}

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  }
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train));
  s.val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.val));
  if (s.train + s.val >= n || s.train == 0 || s.val == 0) {
    throw DataError("split of " + std::to_string(n) + " windows leaves an empty partition");
  }
  s.test = n - s.train - s.val;
  return s;
}

ForecastInstance masked_view(const ForecastInstance& instance, const std::set<int>& inactive) {
  ForecastInstance out = instance;
  for (int r : inactive) {
    if (r < 0 || r >= out.history.cols()) throw std::out_of_range("masked_view: unknown region id");
    out.history.col(r).setZero();
    out.mask[static_cast<std::size_t>(r)] = 0;
  }
  return out;
}

WindowSplit<int> split_anchors(const CityDataset& city, int window, int horizon, int stride) {
  WindowSplit<int> out;
  for (int t = window - 1; t + horizon < city.t_total(); t += stride) {
    if (t < city.split.train_end) {
      out.train.push_back(t);
    } else if (t < city.split.val_end) {
      out.val.push_back(t);
    } else {
      out.test.push_back(t);
    }
  }
  if (out.train.empty() || out.val.empty() || out.test.empty()) {
    throw DataError("dataset '" + city.name + "' split leaves an empty partition");
  }
  return out;
}

Normalizer fit_normalizer(const CityDataset& city, const std::vector<int>& region_ids) {
  double sum = 0.0;
  double sq = 0.0;
  std::size_t count = 0;
  for (int t = 0; t < city.split.train_end; ++t) {
    for (int r : region_ids) {
      const double v = city.demand(t, r);
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  if (count == 0) throw DataError("fit_normalizer: no training rows");
  Normalizer norm;
  norm.mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sq / static_cast<double>(count) - norm.mean * norm.mean);
  norm.std = var > 1e-12 ? std::sqrt(var) : 1.0;
  return norm;
}

std::vector<int> all_region_ids(const CityDataset& city) {
  std::vector<int> ids(static_cast<std::size_t>(city.n_regions()));
  for (int i = 0; i < city.n_regions(); ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

}  // namespace bridge
