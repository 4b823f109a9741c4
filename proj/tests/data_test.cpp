#include "leafdistill/data.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "leafdistill/error.hpp"

namespace leafdistill {
namespace {

const std::string kMiniFraud = std::string(LEAFDISTILL_FIXTURE_DIR) + "/mini_fraud.csv";

IngestOptions fraud_options() {
  IngestOptions o;
  o.label_column = "isFraud";
  o.id_column = "TransactionID";
  return o;
}

TEST(Csv, ParsesQuotedFieldsAndCrlf) {
  const CsvTable t = parse_csv("a,\"b,c\",d\r\n1,\"say \"\"hi\"\"\",3\r\n\r\n4,5,6");
  ASSERT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[1], "b,c");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "say \"hi\"");
  EXPECT_EQ(t.rows[1][2], "6");
}

TEST(Csv, FormatDoubleRoundTrips) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform01() - 0.5) * std::pow(10.0, static_cast<double>(rng.index(40)) - 20.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Ingest, DropsRowsWithMissingCells) {
  const CsvTable t = parse_csv("f0,f1,label\n1,2,0\n3,,1\n5,6,1\n");
  IngestOptions o;
  o.label_column = "label";
  const IngestResult r = ingest_table(t, o);
  EXPECT_EQ(r.dataset.size(), 2u);
  EXPECT_EQ(r.dropped_rows, 1u);
  EXPECT_EQ(r.dataset.sample_ids, (std::vector<std::string>{"1", "3"}));
  EXPECT_EQ(r.dataset.features(1, 0), 5.0);
}

TEST(Ingest, RejectsNonBinaryLabelNamingRow) {
  const CsvTable t = parse_csv("f0,label\n1,0\n2,2\n");
  IngestOptions o;
  o.label_column = "label";
  try {
    ingest_table(t, o);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(Ingest, RejectsNonNumericFeatureWithRowIndex) {
  const CsvTable t = parse_csv("f0,label\n1,0\n1,0\nabc,1\n");
  IngestOptions o;
  o.label_column = "label";
  try {
    ingest_table(t, o);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(Ingest, RejectsInfinity) {
  IngestOptions o;
  o.label_column = "label";
  EXPECT_THROW(ingest_table(parse_csv("f0,label\ninf,0\n"), o), ParseError);
}

TEST(Ingest, MissingLabelColumnIsSchemaError) {
  IngestOptions o;
  o.label_column = "isFraud";
  EXPECT_THROW(ingest_table(parse_csv("f0,label\n1,0\n"), o), SchemaError);
}

TEST(Ingest, ExpectedSchemaSelectsAndOrdersColumns) {
  IngestOptions o;
  o.label_column = "y";
  o.feature_columns = {"b", "a"};
  const auto r = ingest_table(parse_csv("a,b,c,y\n1,2,3,1\n"), o);
  EXPECT_EQ(r.dataset.feature_names, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(r.dataset.features(0, 0), 2.0);
  o.feature_columns = {"zzz"};
  EXPECT_THROW(ingest_table(parse_csv("a,b,c,y\n1,2,3,1\n"), o), SchemaError);
}

TEST(Ingest, MiniFraudFixtureMatchesIndependentCount) {
  // Independent recount straight from the file text.
  std::ifstream in(kMiniFraud);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0, positives = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.substr(line.rfind(',') + 1) == "1") ++positives;
  }
  const IngestResult r = ingest_csv(kMiniFraud, fraud_options());
  EXPECT_EQ(rows, 200u);
  EXPECT_EQ(positives, 10u);
  EXPECT_EQ(r.dataset.size(), rows);
  EXPECT_EQ(r.dataset.feature_count(), 5u);
  EXPECT_EQ(r.dataset.positives(), positives);
  EXPECT_EQ(r.dropped_rows, 0u);
  EXPECT_EQ(r.dataset.sample_ids.front(), "T100000");
  EXPECT_NO_THROW(r.dataset.validate());
}

TEST(Ingest, WriteThenReadReproducesDataset) {
  const Dataset ds = testing::random_dataset(50, 3, 11);
  const std::string path = ::testing::TempDir() + "/roundtrip.csv";
  write_dataset_csv(path, ds, "label");
  IngestOptions o;
  o.label_column = "label";
  EXPECT_EQ(ingest_csv(path, o).dataset, ds);
}

TEST(Standardize, TwoPointColumnMapsToMinusOnePlusOne) {
  Dataset ds;
  ds.feature_names = {"a"};
  ds.features = Matrix(2, 1, {1.0, 3.0});
  ds.labels = {0, 1};
  ds.sample_ids = {"0", "1"};
  const auto s = standardize(ds);
  EXPECT_DOUBLE_EQ(s.dataset.features(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(s.dataset.features(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.params.means[0], 2.0);
  EXPECT_DOUBLE_EQ(s.params.stddevs[0], 1.0);
}

TEST(Standardize, ConstantColumnPassesThroughFlagged) {
  Dataset ds;
  ds.feature_names = {"c", "v"};
  ds.features = Matrix(3, 2, {5, 1, 5, 2, 5, 3});
  ds.labels = {0, 0, 1};
  ds.sample_ids = {"a", "b", "c"};
  const auto s = standardize(ds);
  EXPECT_TRUE(s.params.constant[0]);
  EXPECT_FALSE(s.params.constant[1]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.dataset.features(i, 0), 5.0);
}

TEST(Standardize, RequiresTwoSamples) {
  Dataset ds = testing::random_dataset(1, 2, 1);
  EXPECT_THROW(standardize(ds), ArgumentError);
}

TEST(Standardize, RandomMatrixHasZeroMeanUnitStd) {
  Rng rng(99);
  Dataset ds = testing::random_dataset(1000, 4, 5);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) ds.features(i, j) = 1000.0 * j + (j + 1) * 37.0 * rng.normal();
  const auto s = standardize(ds);
  for (std::size_t j = 0; j < 4; ++j) {
    // Independent long-double Kahan summation.
    long double sum = 0, c = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const long double y = s.dataset.features(i, j) - c;
      const long double t = sum + y;
      c = (t - sum) - y;
      sum = t;
    }
    const long double mean = sum / ds.size();
    long double ss = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) ss += (s.dataset.features(i, j) - mean) * (s.dataset.features(i, j) - mean);
    EXPECT_LT(std::fabs(static_cast<double>(mean)), 1e-9);
    EXPECT_NEAR(static_cast<double>(std::sqrt(ss / ds.size())), 1.0, 1e-9);
  }
}

TEST(Standardize, InverseRoundTripWithinRelativeTolerance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Dataset ds = testing::random_dataset(200, 5, seed);
    Rng rng(seed);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.features(i, 2) = 1e6 + 1e3 * rng.normal();
    const auto s = standardize(ds);
    const Dataset back = inverse_standardize(s.dataset, s.params);
    for (std::size_t k = 0; k < ds.features.values().size(); ++k) {
      const double a = ds.features.values()[k], b = back.features.values()[k];
      EXPECT_LE(std::fabs(a - b), 1e-9 * std::max(1.0, std::fabs(a)));
    }
  }
}

TEST(Standardize, ParamsJsonRoundTrip) {
  const auto s = standardize(testing::random_dataset(30, 3, 2));
  const auto back = StandardizationParams::from_json(s.params.to_json());
  EXPECT_EQ(back.means, s.params.means);
  EXPECT_EQ(back.stddevs, s.params.stddevs);
  EXPECT_EQ(back.feature_names, s.params.feature_names);
}

TEST(Split, SizesFollowFraction) {
  const Dataset ds = testing::random_dataset(10, 2, 1);
  const Split s = train_test_split(ds, 0.2, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, PaperScaleSizes) {
  Dataset ds;
  ds.feature_names = {"x"};
  const std::size_t n = 590492;
  ds.features = Matrix(n, 1, 0.0);
  ds.labels.assign(n, 0);
  ds.sample_ids.assign(n, "");
  const Split s = train_test_split(ds, 0.2, 1);
  EXPECT_NEAR(static_cast<double>(s.train.size()), 472393.0, 1.0);
  EXPECT_NEAR(static_cast<double>(s.test.size()), 118099.0, 1.0);
}

TEST(Split, DeterministicExactPartition) {
  const Dataset ds = testing::random_dataset(137, 3, 4);
  const Split a = train_test_split(ds, 0.3, 42);
  const Split b = train_test_split(ds, 0.3, 42);
  EXPECT_EQ(a.train_indices, b.train_indices);
  EXPECT_EQ(a.test_indices, b.test_indices);
  std::set<std::size_t> all(a.train_indices.begin(), a.train_indices.end());
  for (std::size_t i : a.test_indices) EXPECT_TRUE(all.insert(i).second) << "overlap at " << i;
  EXPECT_EQ(all.size(), ds.size());
  EXPECT_NE(train_test_split(ds, 0.3, 43).test_indices, a.test_indices);
}

TEST(Split, RejectsFractionOutsideUnitInterval) {
  const Dataset ds = testing::random_dataset(10, 2, 1);
  EXPECT_THROW(train_test_split(ds, 0.0, 1), ArgumentError);
  EXPECT_THROW(train_test_split(ds, 1.0, 1), ArgumentError);
  EXPECT_THROW(train_test_split(ds, 0.01, 1), ArgumentError);
}

// Reference Lloyd loop: plain mean updates from a given initialization.
std::vector<std::size_t> reference_lloyd(const Matrix& x, Matrix centroids, int iters) {
  std::vector<std::size_t> assign(x.rows());
  for (int it = 0; it <= iters; ++it) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centroids.rows(); ++c) {
        double d = 0;
        for (std::size_t j = 0; j < x.cols(); ++j) d += (x(i, j) - centroids(c, j)) * (x(i, j) - centroids(c, j));
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    Matrix sum(centroids.rows(), x.cols(), 0.0);
    std::vector<double> count(centroids.rows(), 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) sum(assign[i], j) += x(i, j);
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < centroids.rows(); ++c)
      if (count[c] > 0)
        for (std::size_t j = 0; j < x.cols(); ++j) centroids(c, j) = sum(c, j) / count[c];
  }
  return assign;
}

TEST(KMeans, SeparatedBlobsRecoverMeans) {
  Rng rng(5);
  Matrix x;
  std::vector<int> truth;
  for (int i = 0; i < 200; ++i) {
    const int b = i % 2;
    const double row[2] = {(b ? 10.0 : -10.0) + rng.normal(), rng.normal()};
    x.append_row(row);
    truth.push_back(b);
  }
  const auto a = kmeans_partition(x, {2, 3, 300, 1e-6});
  const std::size_t label_of_blob1 = a.cluster_of[1];
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(a.cluster_of[i] == label_of_blob1, truth[i] == 1);
  for (std::size_t c = 0; c < 2; ++c) {
    double mx = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
      if (a.cluster_of[i] == c) {
        mx += x(i, 0);
        ++cnt;
      }
    EXPECT_NEAR(a.centroids(c, 0), mx / cnt, 1e-9);
  }
}

TEST(KMeans, SingleClusterIsGlobalMean) {
  const Dataset ds = testing::random_dataset(300, 3, 8);
  const auto a = kmeans_partition(ds.features, {1, 0, 300, 1e-6});
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) m += ds.features(i, j);
    EXPECT_NEAR(a.centroids(0, j), m / ds.size(), 1e-12);
  }
  EXPECT_EQ(a.sizes()[0], 300u);
}

TEST(KMeans, MatchesReferenceLloydOnMiniFraud) {
  const Dataset ds = standardize(ingest_csv(kMiniFraud, fraud_options()).dataset).dataset;
  const KMeansOptions opt{3, 17, 300, 1e-6};
  const auto a = kmeans_partition(ds.features, opt);
  const auto ref = reference_lloyd(ds.features, kmeans_plusplus_init(ds.features, 3, 17), 300);
  EXPECT_EQ(a.cluster_of, ref);
}

TEST(KMeans, NearestCentroidInvariantAndMonotoneObjective) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = testing::random_dataset(400, 4, seed);
    const auto a = kmeans_partition(ds.features, {5, seed, 300, 1e-6});
    std::size_t total = 0;
    for (auto s : a.sizes()) total += s;
    EXPECT_EQ(total, ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double own = squared_distance(ds.features.row(i), a.centroids.row(a.cluster_of[i]));
      for (std::size_t c = 0; c < a.k; ++c) EXPECT_LE(own, squared_distance(ds.features.row(i), a.centroids.row(c)));
    }
    for (std::size_t t = 1; t < a.objective_history.size(); ++t)
      EXPECT_LE(a.objective_history[t], a.objective_history[t - 1] * (1 + 1e-12));
  }
}

TEST(KMeans, DuplicatePointsTriggerEmptyClusterRepair) {
  Matrix x;
  for (int i = 0; i < 10; ++i) {
    const double row[1] = {static_cast<double>(i % 2)};
    x.append_row(row);
  }
  const auto a = kmeans_partition(x, {3, 1, 50, 1e-9});
  EXPECT_EQ(a.centroids.rows(), 3u);
  std::size_t total = 0;
  for (auto s : a.sizes()) total += s;
  EXPECT_EQ(total, 10u);
}

TEST(KMeans, DeterministicPerSeedAndRejectsOversizedK) {
  const Dataset ds = testing::random_dataset(100, 2, 3);
  EXPECT_EQ(kmeans_partition(ds.features, {3, 9, 300, 1e-6}).cluster_of,
            kmeans_partition(ds.features, {3, 9, 300, 1e-6}).cluster_of);
  EXPECT_THROW(kmeans_partition(ds.features, {101, 9, 300, 1e-6}), ArgumentError);
}

}  // namespace
}  // namespace leafdistill
