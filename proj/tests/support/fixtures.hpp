#pragma once

// Synthetic fraud-style datasets shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "leafdistill/data.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill::testing {

inline std::vector<std::string> numbered_features(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

// Independent Gaussian features; label 1 with probability `positive_rate`
// boosted where x0 + x1 is large.
inline Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed, double positive_rate = 0.1) {
  Rng rng(seed);
  Dataset ds;
  ds.feature_names = numbered_features(d);
  ds.features = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = rng.normal();
    const double signal = d >= 2 ? ds.features(i, 0) + ds.features(i, 1) : ds.features(i, 0);
    const double p = std::min(1.0, positive_rate * (signal > 1.0 ? 4.0 : 0.5));
    ds.labels.push_back(rng.uniform01() < p ? 1 : 0);
    ds.sample_ids.push_back("r" + std::to_string(i));
  }
  return ds;
}

struct ClusteredFixture {
  Dataset all;                       // every cluster, interleaved
  std::vector<std::size_t> cluster;  // generating cluster per row
};

// Institution-style fixture: `k` Gaussian blobs whose centres point in
// different directions, each with its own fraud rate. Fraud concentrates in
// a corner of each blob (large x[d-1]) with a little label noise elsewhere.
inline ClusteredFixture clustered_fixture(std::size_t n, std::size_t d, std::uint64_t seed, std::size_t k = 3,
                                          double separation = 5.0) {
  static const double kFraudInCorner[] = {0.55, 0.85, 0.40};
  static const double kBackgroundFraud[] = {0.003, 0.006, 0.002};
  Rng rng(seed);
  ClusteredFixture fx;
  fx.all.feature_names = numbered_features(d);
  fx.all.features = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = static_cast<std::size_t>(rng.index(k));
    for (std::size_t j = 0; j < d; ++j) {
      const double centre = (j % k == c) ? separation : 0.0;
      fx.all.features(i, j) = centre + rng.normal();
    }
    const bool corner = fx.all.features(i, d - 1) - ((d - 1) % k == c ? separation : 0.0) > 1.4;
    const double p = corner ? kFraudInCorner[c % 3] : kBackgroundFraud[c % 3];
    fx.all.labels.push_back(rng.uniform01() < p ? 1 : 0);
    fx.all.sample_ids.push_back("c" + std::to_string(c) + "-" + std::to_string(i));
    fx.cluster.push_back(c);
  }
  return fx;
}

}  // namespace leafdistill::testing
