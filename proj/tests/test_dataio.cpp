#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "croptime/dataio.hpp"
#include "croptime/errors.hpp"
#include "test_support.hpp"

using namespace croptime;
using testsupport::tiny_synth;

namespace {

// Cloud cells sit far above any vegetation value, so a timestep whose
// weakest band still clears this level can only be a cloud event.
bool looks_cloudy(const TimeSeriesSample& s, int t) {
  return s.values.col(t).minCoeff() > 0.55;
}

Dataset blocks_dataset(int n_blocks, int per_block) {
  Dataset ds;
  ds.axis = DateAxis::even_grid(2019, 8);
  ds.class_names = default_class_names(2);
  ds.band_names = default_band_names(1);
  int i = 0;
  for (int b = 0; b < n_blocks; ++b) {
    for (int k = 0; k < per_block; ++k, ++i) {
      TimeSeriesSample s;
      s.parcel_id = "p" + std::to_string(i);
      s.label = i % 2;
      s.block_id = b;
      s.values = Eigen::MatrixXd::Constant(1, 8, 0.5);
      s.mask.assign(8, 1);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

double percentile95(std::vector<double> v) {
  REQUIRE(!v.empty());
  std::sort(v.begin(), v.end());
  const double pos = 0.95 * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - double(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

TEST_CASE("date helpers parse, format and count days") {
  const Date d = parse_iso_date("2019-01-06");
  CHECK(format_iso_date(d) == "2019-01-06");
  CHECK(date_year(d) == 2019);
  CHECK(day_of_year(d) == 6);
  CHECK(day_of_year(parse_iso_date("2019-12-31")) == 365);
  CHECK(day_of_year(parse_iso_date("2020-12-31")) == 366);
  CHECK_THROWS_AS(parse_iso_date("2019-02-30"), ParseError);
  CHECK_THROWS_AS(parse_iso_date("2019/01/06"), ParseError);
  CHECK_THROWS_AS(parse_iso_date("not-a-date"), ParseError);
}

TEST_CASE("DateAxis enforces ordering and single-year coverage") {
  const DateAxis axis = DateAxis::even_grid(2019, 52);
  CHECK(axis.size() == 52);
  CHECK(axis.year() == 2019);
  for (int i = 1; i < axis.size(); ++i) {
    CHECK(axis.date(i - 1) < axis.date(i));
    CHECK(date_year(axis.date(i)) == 2019);
  }
  CHECK(axis == DateAxis::even_grid(2019, 52));
  CHECK(axis.index_of(axis.date(10)) == 10);
  CHECK(!axis.index_of(parse_iso_date("2018-06-01")).has_value());

  const std::vector<Date> bad_order = {parse_iso_date("2019-05-01"),
                                       parse_iso_date("2019-04-01")};
  CHECK_THROWS_AS(DateAxis{bad_order}, ValidationError);
  const std::vector<Date> two_years = {parse_iso_date("2019-05-01"),
                                       parse_iso_date("2020-04-01")};
  CHECK_THROWS_AS(DateAxis{two_years}, ValidationError);
}

TEST_CASE("generator is deterministic and validates its config") {
  SynthConfig cfg = tiny_synth(60, 3, 12, 3, 7);
  const std::string once = serialize_dataset(generate_synthetic(cfg));
  const std::string twice = serialize_dataset(generate_synthetic(cfg));
  CHECK(once == twice);
  cfg.seed = 8;
  CHECK(serialize_dataset(generate_synthetic(cfg)) != once);

  SynthConfig bad = cfg;
  bad.n_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
  bad = cfg;
  bad.timesteps = 7;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
  bad = cfg;
  bad.cloud_probability = 1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
  bad = cfg;
  bad.imbalance_exponent = -0.1;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

TEST_CASE("imbalance_exponent 0 gives near-uniform class counts") {
  SynthConfig cfg = tiny_synth(205, 4, 10, 2, 3);
  cfg.imbalance_exponent = 0.0;
  const Dataset ds = generate_synthetic(cfg);
  const ClassDistribution dist = class_distribution(ds);
  const double uniform = 205.0 / 4.0;
  long long total = 0;
  for (long long c : dist.counts) {
    CHECK(std::abs(double(c) - uniform) <= 1.0);
    total += c;
  }
  CHECK(total == 205);
}

TEST_CASE("strong imbalance keeps every class non-empty and skews the head") {
  SynthConfig cfg = tiny_synth(500, 8, 10, 2, 5);
  cfg.imbalance_exponent = 1.5;
  const Dataset ds = generate_synthetic(cfg);
  const ClassDistribution dist = class_distribution(ds);
  long long top = 0, bottom = 1 << 30, total = 0;
  for (long long c : dist.counts) {
    CHECK(c >= 1);
    top = std::max(top, c);
    bottom = std::min(bottom, c);
    total += c;
  }
  CHECK(total == 500);
  CHECK(dist.shares[0] > 1.0 / 8.0);
  CHECK(top >= 5 * bottom);
}

TEST_CASE("class mean profiles are separated on the default-sized config") {
  SynthConfig cfg;
  cfg.n_classes = 8;
  cfg.n_samples = 2000;
  cfg.timesteps = 52;
  cfg.n_bands = 13;
  cfg.cloud_probability = 0.1;
  cfg.seed = 1;
  const Dataset ds = generate_synthetic(cfg);

  std::vector<Eigen::MatrixXd> mean(8, Eigen::MatrixXd::Zero(13, 52));
  std::vector<double> n(8, 0.0);
  for (const TimeSeriesSample& s : ds.samples) {
    mean[std::size_t(s.label)] += s.values;
    n[std::size_t(s.label)] += 1.0;
  }
  for (int c = 0; c < 8; ++c) mean[std::size_t(c)] /= n[std::size_t(c)];

  for (int a = 0; a < 8; ++a) {
    for (int b = a + 1; b < 8; ++b) {
      const double gap =
          (mean[std::size_t(a)] - mean[std::size_t(b)]).cwiseAbs().maxCoeff();
      CHECK(gap > 2.0 * cfg.jitter_std);
    }
  }
}

TEST_CASE("cloud timesteps exceed the per-class bright tail in every band") {
  SynthConfig cfg = tiny_synth(200, 4, 30, 5, 9);
  cfg.cloud_probability = 0.15;
  const Dataset ds = generate_synthetic(cfg);

  std::vector<std::vector<double>> clear_cells(4);
  long long cloudy = 0;
  for (const TimeSeriesSample& s : ds.samples) {
    for (int t = 0; t < s.timesteps(); ++t) {
      if (looks_cloudy(s, t)) {
        ++cloudy;
        continue;
      }
      for (int b = 0; b < s.bands(); ++b) {
        clear_cells[std::size_t(s.label)].push_back(s.values(b, t));
      }
    }
  }
  // Probability 0.15 over 200 * 30 timesteps leaves no room for zero hits.
  CHECK(cloudy > 400);

  std::vector<double> p95(4);
  for (int c = 0; c < 4; ++c) p95[std::size_t(c)] = percentile95(clear_cells[std::size_t(c)]);
  for (const TimeSeriesSample& s : ds.samples) {
    for (int t = 0; t < s.timesteps(); ++t) {
      if (!looks_cloudy(s, t)) continue;
      for (int b = 0; b < s.bands(); ++b) {
        CHECK(s.values(b, t) > p95[std::size_t(s.label)]);
      }
    }
  }
}

TEST_CASE("serialization round-trips and is byte-stable") {
  SynthConfig cfg = tiny_synth(40, 3, 10, 3, 21);
  cfg.cloud_probability = 0.2;
  const Dataset ds = generate_synthetic(cfg);

  const std::string text = serialize_dataset(ds);
  const Dataset back = parse_dataset(text);
  // Writing uses 9 significant digits, so the parsed dataset reproduces the
  // file exactly even though it may differ from the source in late digits.
  CHECK(serialize_dataset(back) == text);

  REQUIRE(back.size() == ds.size());
  CHECK(back.axis == ds.axis);
  CHECK(back.band_names == ds.band_names);
  CHECK(back.class_names == ds.class_names);
  for (int i = 0; i < ds.size(); ++i) {
    const TimeSeriesSample& a = ds.samples[std::size_t(i)];
    const TimeSeriesSample& b = back.samples[std::size_t(i)];
    CHECK(a.parcel_id == b.parcel_id);
    CHECK(a.label == b.label);
    CHECK(a.block_id == b.block_id);
    CHECK(a.mask == b.mask);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("empty dataset serializes to a header-only file") {
  Dataset ds;
  ds.class_names = default_class_names(2);
  ds.band_names = {"B01", "B02"};
  CHECK(serialize_dataset(ds) == "parcel_id,label,block_id,date,B01,B02\n");
}

TEST_CASE("parser builds the axis from the union of dates") {
  const std::string text =
      "parcel_id,label,block_id,date,B01,B02\n"
      "a,0,1,2019-03-01,0.1,0.2\n"
      "a,0,1,2019-05-01,0.3,0.4\n"
      "a,0,1,2019-07-01,0.5,0.6\n"
      "b,1,2,2019-07-01,0.55,0.65\n"
      "b,1,2,2019-03-01,0.15,0.25\n";
  const Dataset ds = parse_dataset(text);
  CHECK(ds.timesteps() == 3);
  CHECK(ds.n_bands() == 2);
  CHECK(ds.n_classes() == 2);
  REQUIRE(ds.size() == 2);

  const TimeSeriesSample& a = ds.samples[0];
  CHECK(a.parcel_id == "a");
  CHECK(a.mask == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(a.values(0, 1) == 0.3);

  // Parcel b misses 2019-05-01; the gap stays masked out.
  const TimeSeriesSample& b = ds.samples[1];
  CHECK(b.mask == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(b.values(1, 2) == 0.65);
  CHECK(b.values(0, 1) == 0.0);
}

TEST_CASE("parser reports malformed rows with their line numbers") {
  const std::string base = "parcel_id,label,block_id,date,B01\n";
  SUBCASE("non-numeric reflectance") {
    const std::string text =
        base + "a,0,1,2019-03-01,0.5\n" + "a,0,1,2019-04-01,oops\n";
    CHECK_THROWS_WITH_AS(parse_dataset(text),
                         doctest::Contains("line 3"), ParseError);
  }
  SUBCASE("wrong field count") {
    const std::string text = base + "a,0,1,2019-03-01\n";
    CHECK_THROWS_WITH_AS(parse_dataset(text),
                         doctest::Contains("line 2"), ParseError);
  }
  SUBCASE("bad date") {
    const std::string text = base + "a,0,1,2019-13-01,0.5\n";
    CHECK_THROWS_WITH_AS(parse_dataset(text),
                         doctest::Contains("line 2"), ParseError);
  }
  SUBCASE("negative reflectance") {
    const std::string text = base + "a,0,1,2019-03-01,-0.5\n";
    CHECK_THROWS_WITH_AS(parse_dataset(text),
                         doctest::Contains("line 2"), ParseError);
  }
  SUBCASE("negative label") {
    const std::string text = base + "a,-1,1,2019-03-01,0.5\n";
    CHECK_THROWS_WITH_AS(parse_dataset(text),
                         doctest::Contains("line 2"), ParseError);
  }
  SUBCASE("repeated date within a parcel") {
    const std::string text =
        base + "a,0,1,2019-03-01,0.5\n" + "a,0,1,2019-03-01,0.6\n";
    CHECK_THROWS_AS(parse_dataset(text), SchemaError);
  }
  SUBCASE("parcel changing label") {
    const std::string text =
        base + "a,0,1,2019-03-01,0.5\n" + "a,1,1,2019-04-01,0.6\n";
    CHECK_THROWS_AS(parse_dataset(text), SchemaError);
  }
  SUBCASE("wrong header") {
    CHECK_THROWS_AS(parse_dataset("parcel,label,block_id,date,B01\n"),
                    SchemaError);
    CHECK_THROWS_AS(parse_dataset(""), ParseError);
  }
}

TEST_CASE("dataset validation catches broken invariants") {
  Dataset ds = blocks_dataset(2, 2);
  SUBCASE("duplicate parcel id") {
    ds.samples[1].parcel_id = ds.samples[0].parcel_id;
    CHECK_THROWS_AS(validate_dataset(ds), SchemaError);
  }
  SUBCASE("label outside the class list") {
    ds.samples[2].label = 9;
    CHECK_THROWS_AS(validate_dataset(ds), SchemaError);
  }
  SUBCASE("fully masked sample") {
    ds.samples[0].mask.assign(8, 0);
    CHECK_THROWS_AS(validate_dataset(ds), SchemaError);
  }
  SUBCASE("negative reflectance") {
    ds.samples[3].values(0, 4) = -0.01;
    CHECK_THROWS_AS(validate_dataset(ds), SchemaError);
  }
  SUBCASE("non-finite reflectance") {
    ds.samples[3].values(0, 4) = std::nan("");
    CHECK_THROWS_AS(validate_dataset(ds), SchemaError);
  }
}

TEST_CASE("ten equal blocks at fraction 0.2 put exactly two in test") {
  const Dataset ds = blocks_dataset(10, 12);
  for (std::uint64_t seed : {0, 1, 2, 3, 4, 5, 6, 7}) {
    const SplitResult split = split_spatial(ds, 0.2, seed);
    CHECK(split.test_blocks.size() == 2);
    CHECK(split.train_blocks.size() == 8);
    CHECK(split.test.size() == 24);
    CHECK(split.train.size() == 96);
  }
}

TEST_CASE("split sides are block-disjoint and cover the input") {
  const Dataset ds = generate_synthetic(tiny_synth(300, 4, 10, 3, 31));
  const SplitResult split = split_spatial(ds, 0.25, 11);
  CHECK(split.train.size() + split.test.size() == ds.size());

  std::set<int> train_blocks, test_blocks;
  for (const TimeSeriesSample& s : split.train.samples) train_blocks.insert(s.block_id);
  for (const TimeSeriesSample& s : split.test.samples) test_blocks.insert(s.block_id);
  for (int b : test_blocks) CHECK(train_blocks.count(b) == 0);
  CHECK(std::vector<int>(train_blocks.begin(), train_blocks.end()) ==
        split.train_blocks);
  CHECK(std::vector<int>(test_blocks.begin(), test_blocks.end()) ==
        split.test_blocks);

  std::set<std::string> seen;
  for (const TimeSeriesSample& s : split.train.samples) seen.insert(s.parcel_id);
  for (const TimeSeriesSample& s : split.test.samples) seen.insert(s.parcel_id);
  CHECK(static_cast<long long>(seen.size()) == static_cast<long long>(ds.size()));

  // Same seed, same partition.
  const SplitResult again = split_spatial(ds, 0.25, 11);
  CHECK(again.test_blocks == split.test_blocks);
}

TEST_CASE("default config split lands near the requested share") {
  SynthConfig cfg;
  cfg.n_classes = 8;
  cfg.n_samples = 2000;
  cfg.timesteps = 52;
  cfg.n_bands = 13;
  cfg.cloud_probability = 0.1;
  cfg.seed = 2;
  const Dataset ds = generate_synthetic(cfg);
  for (std::uint64_t seed : {1, 2, 3}) {
    const SplitResult split = split_spatial(ds, 0.2, seed);
    const double share = double(split.test.size()) / double(ds.size());
    CHECK(share >= 0.15);
    CHECK(share <= 0.25);
  }
}

TEST_CASE("split refuses a single block") {
  const Dataset ds = blocks_dataset(1, 10);
  CHECK_THROWS_AS(split_spatial(ds, 0.2, 1), SplitError);
  CHECK_THROWS_AS(split_spatial(blocks_dataset(4, 5), 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_spatial(blocks_dataset(4, 5), 1.0, 1), ConfigError);
}

TEST_CASE("class_distribution counts labels") {
  Dataset ds = blocks_dataset(2, 2);
  ds.samples[0].label = 0;
  ds.samples[1].label = 0;
  ds.samples[2].label = 1;
  ds.samples[3].label = 1;
  ds.samples.pop_back();
  const ClassDistribution dist = class_distribution(ds);
  CHECK(dist.counts == std::vector<long long>{2, 1});
  CHECK(dist.shares[0] == doctest::Approx(2.0 / 3.0));

  Dataset empty;
  empty.class_names = default_class_names(3);
  const ClassDistribution zeros = class_distribution(empty);
  CHECK(zeros.counts == std::vector<long long>{0, 0, 0});
}

TEST_CASE("naming and number formatting helpers") {
  CHECK(default_band_names(13)[8] == "B8A");
  CHECK(default_band_names(3) == std::vector<std::string>{"B01", "B02", "B03"});
  CHECK(default_class_names(2) == std::vector<std::string>{"class_0", "class_1"});
  CHECK(format_real(0.25, 9) == "0.25");
  CHECK(format_real(1.0 / 3.0, 9) == "0.333333333");
  CHECK(format_real(0.1, 17) == "0.10000000000000001");
  CHECK(format_real(-2.0, 9) == "-2");
}
