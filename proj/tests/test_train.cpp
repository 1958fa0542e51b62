#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "croptime/errors.hpp"
#include "croptime/rng.hpp"
#include "croptime/train.hpp"
#include "test_support.hpp"

using namespace croptime;
using testsupport::random_sample;
using testsupport::tiny_model;
using testsupport::tiny_synth;

namespace {

// Two classes with well-separated constant reflectance levels; any model
// that learns at all reaches perfect accuracy here.
Dataset separable_toy(int n, std::uint64_t seed) {
  Dataset ds;
  ds.axis = DateAxis::even_grid(2019, 8);
  ds.class_names = default_class_names(2);
  ds.band_names = default_band_names(2);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    TimeSeriesSample s;
    s.parcel_id = "toy" + std::to_string(i);
    s.label = i % 2;
    s.block_id = i % 4;
    const double level = s.label == 0 ? 0.1 : 0.6;
    s.values.resize(2, 8);
    for (int b = 0; b < 2; ++b) {
      for (int t = 0; t < 8; ++t) {
        s.values(b, t) = level + rng.uniform(-0.02, 0.02);
      }
    }
    s.mask.assign(8, 1);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<const TimeSeriesSample*> as_batch(const Dataset& ds) {
  std::vector<const TimeSeriesSample*> batch;
  for (const TimeSeriesSample& s : ds.samples) batch.push_back(&s);
  return batch;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate_train_config(cfg));
  TrainConfig bad = cfg;
  bad.epochs = -1;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.validation_fraction = 0.6;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
  bad = cfg;
  bad.validation_fraction = -0.1;
  CHECK_THROWS_AS(validate_train_config(bad), ConfigError);
}

TEST_CASE("zeroed final layer yields the uniform-logits loss ln C") {
  const Dataset ds = generate_synthetic(tiny_synth(12, 3, 10, 3, 3));
  Parameters p = init_model(tiny_model(ds), 1);
  p.decoder.back().weight.setZero();
  p.decoder.back().bias.setZero();
  const LossAndGrad lg = loss_and_grad(p, as_batch(ds), ds.axis);
  CHECK(lg.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("final-layer gradient matches the softmax closed form") {
  const Dataset ds = generate_synthetic(tiny_synth(6, 3, 10, 3, 5));
  const Parameters p = init_model(tiny_model(ds), 2);
  const TimeSeriesSample& s = ds.samples[0];
  const LossAndGrad lg = loss_and_grad(p, {&s}, ds.axis);

  const ForwardTrace tr = forward(p, s, ds.axis);
  Eigen::VectorXd sm = (tr.logits.array() - tr.logits.maxCoeff()).exp();
  sm /= sm.sum();
  Eigen::VectorXd delta = sm;
  delta(s.label) -= 1.0;

  // Input to the final linear layer is the last hidden decoder activation.
  const Eigen::VectorXd& h = tr.decoder_act[tr.decoder_act.size() - 2];
  const Eigen::MatrixXd expected_w = delta * h.transpose();
  CHECK((lg.grad.decoder.back().weight - expected_w).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((lg.grad.decoder.back().bias - delta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duplicating the batch changes neither loss nor gradients") {
  const Dataset ds = generate_synthetic(tiny_synth(8, 3, 10, 3, 7));
  const Parameters p = init_model(tiny_model(ds), 3);
  std::vector<const TimeSeriesSample*> batch = as_batch(ds);
  std::vector<const TimeSeriesSample*> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());

  const LossAndGrad a = loss_and_grad(p, batch, ds.axis);
  const LossAndGrad b = loss_and_grad(p, doubled, ds.axis);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  double max_diff = 0.0;
  std::vector<double> flat_a, flat_b;
  visit_params(a.grad, [&](const auto& arr) {
    for (long long i = 0; i < arr.size(); ++i) flat_a.push_back(arr(i));
  });
  visit_params(b.grad, [&](const auto& arr) {
    for (long long i = 0; i < arr.size(); ++i) flat_b.push_back(arr(i));
  });
  REQUIRE(flat_a.size() == flat_b.size());
  for (std::size_t i = 0; i < flat_a.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(flat_a[i] - flat_b[i]));
  }
  CHECK(max_diff < 1e-12);
  CHECK(b.n_correct == 2 * a.n_correct);
}

TEST_CASE("loss_and_grad rejects an empty batch") {
  const Dataset ds = generate_synthetic(tiny_synth(4, 2, 10, 2, 9));
  const Parameters p = init_model(tiny_model(ds), 4);
  CHECK_THROWS_AS(loss_and_grad(p, {}, ds.axis), ValidationError);
}

TEST_CASE("analytic gradients agree with central differences") {
  ModelConfig cfg;  // default-sized architecture
  const DateAxis axis = DateAxis::even_grid(2019, 52);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Parameters p = init_model(cfg, seed);
    const TimeSeriesSample s = random_sample(13, 52, seed, {seed % 52});
    const GradCheckResult res = grad_check(p, s, axis, 1e-5, 200, seed);
    CHECK(res.checked >= 200);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("zero input still passes the finite-difference check") {
  const ModelConfig cfg = tiny_model(3, 3, 8, 16, 2);
  const Parameters p = init_model(cfg, 11);
  TimeSeriesSample s = random_sample(3, 8, 41);
  s.values.setZero();
  const DateAxis axis = DateAxis::even_grid(2019, 8);

  // First-layer weight gradients vanish because every input is zero.
  const LossAndGrad lg = loss_and_grad(p, {&s}, axis);
  CHECK(lg.grad.encoder.front().weight.cwiseAbs().maxCoeff() == 0.0);
  const GradCheckResult res = grad_check(p, s, axis, 1e-5, 200, 1);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("a corrupted gradient entry would fail the comparison") {
  const ModelConfig cfg = tiny_model(3, 3, 8, 16, 2);
  Parameters p = init_model(cfg, 12);
  const TimeSeriesSample s = random_sample(3, 8, 43);
  const DateAxis axis = DateAxis::even_grid(2019, 8);

  const LossAndGrad lg = loss_and_grad(p, {&s}, axis);
  // Largest-magnitude final-layer entry keeps the test far from the noise
  // floor of the finite differences.
  int r = 0, c = 0;
  lg.grad.decoder.back().weight.cwiseAbs().maxCoeff(&r, &c);
  const double g = lg.grad.decoder.back().weight(r, c);
  REQUIRE(std::abs(g) > 1e-6);

  const double fd_eps = 1e-5;
  const double kept = p.decoder.back().weight(r, c);
  p.decoder.back().weight(r, c) = kept + fd_eps;
  const double up = batch_loss(p, {&s}, axis);
  p.decoder.back().weight(r, c) = kept - fd_eps;
  const double down = batch_loss(p, {&s}, axis);
  p.decoder.back().weight(r, c) = kept;
  const double fd = (up - down) / (2.0 * fd_eps);

  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
  };
  CHECK(rel(fd, g) < 1e-4);
  CHECK(rel(fd, 1.1 * g) > 1e-4);
}

TEST_CASE("a separable toy problem trains to perfect accuracy") {
  const Dataset toy = separable_toy(40, 1);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.learning_rate = 5e-3;
  cfg.validation_fraction = 0.0;
  cfg.seed = 2;
  const TrainResult fit = train(tiny_model(toy), toy, cfg);
  CHECK(evaluate(fit.params, toy).overall_accuracy == 1.0);
  CHECK(fit.history.size() == 30);
  CHECK(fit.history.back().train_accuracy == 1.0);
  // No validation split: the val columns stay NaN and the last epoch wins.
  CHECK(std::isnan(fit.history.back().val_loss));
  CHECK(fit.best_epoch == 30);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const Dataset ds = generate_synthetic(tiny_synth(60, 3, 10, 3, 13));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.validation_fraction = 0.25;
  cfg.seed = 5;
  const TrainResult a = train(tiny_model(ds), ds, cfg);
  const TrainResult b = train(tiny_model(ds), ds, cfg);
  CHECK(serialize_history(a.history) == serialize_history(b.history));
  CHECK(serialize_params(a.params) == serialize_params(b.params));
  CHECK(a.best_epoch == b.best_epoch);

  cfg.seed = 6;
  const TrainResult c = train(tiny_model(ds), ds, cfg);
  CHECK(serialize_history(c.history) != serialize_history(a.history));
}

TEST_CASE("best epoch picks the earliest maximum validation accuracy") {
  const Dataset ds = generate_synthetic(tiny_synth(80, 3, 10, 3, 15));
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.validation_fraction = 0.25;
  cfg.seed = 3;
  const TrainResult fit = train(tiny_model(ds), ds, cfg);
  REQUIRE(fit.history.size() == 6);
  int expected = 1;
  double best = -1.0;
  for (const EpochStats& e : fit.history) {
    if (e.val_accuracy > best) {
      best = e.val_accuracy;
      expected = e.epoch;
    }
  }
  CHECK(fit.best_epoch == expected);
}

TEST_CASE("zero epochs return the initial parameters untouched") {
  const Dataset ds = generate_synthetic(tiny_synth(12, 2, 10, 2, 17));
  const Parameters p0 = init_model(tiny_model(ds), 21);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult fit = train_from(p0, ds, cfg);
  CHECK(fit.history.empty());
  CHECK(fit.best_epoch == 0);
  CHECK(serialize_params(fit.params) == serialize_params(p0));
}

TEST_CASE("full-batch loss is non-increasing early for most seeds") {
  const Dataset ds = separable_toy(16, 3);
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 16;  // one step per epoch
    cfg.learning_rate = 1e-3;
    cfg.validation_fraction = 0.0;
    cfg.seed = seed;
    const TrainResult fit = train_from(init_model(tiny_model(ds), seed), ds, cfg);
    bool ok = true;
    for (std::size_t i = 1; i < fit.history.size(); ++i) {
      ok = ok && fit.history[i].train_loss <= fit.history[i - 1].train_loss + 1e-12;
    }
    monotone += ok;
  }
  CHECK(monotone >= 9);
}

TEST_CASE("exploding learning rate raises a training error naming the epoch") {
  const Dataset ds = generate_synthetic(tiny_synth(24, 2, 10, 2, 19));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e154;
  cfg.validation_fraction = 0.0;
  cfg.seed = 1;
  CHECK_THROWS_WITH_AS(train(tiny_model(ds), ds, cfg),
                       doctest::Contains("epoch"), TrainingError);
}

TEST_CASE("metrics match the hand-counted example") {
  const Metrics m = metrics_from_labels({0, 0, 1}, {0, 1, 1}, 2);
  CHECK(m.overall_accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(m.n_samples == 3);
  CHECK(m.confusion(0, 0) == 1);
  CHECK(m.confusion(0, 1) == 1);
  CHECK(m.confusion(1, 0) == 0);
  CHECK(m.confusion(1, 1) == 1);
  CHECK(m.producer_accuracy(0) == doctest::Approx(0.5));
  CHECK(m.producer_accuracy(1) == doctest::Approx(1.0));
  CHECK(m.user_accuracy(0) == doctest::Approx(1.0));
  CHECK(m.user_accuracy(1) == doctest::Approx(0.5));
}

TEST_CASE("metrics flag classes that never occur as undefined") {
  const Metrics m = metrics_from_labels({0, 0}, {0, 0}, 2);
  CHECK(m.overall_accuracy == 1.0);
  CHECK(std::isnan(m.producer_accuracy(1)));
  CHECK(std::isnan(m.user_accuracy(1)));
  CHECK(m.producer_accuracy(0) == 1.0);
}

TEST_CASE("confusion margins count truths and predictions") {
  Rng rng(7);
  std::vector<int> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(int(rng.uniform_index(4)));
    pred.push_back(int(rng.uniform_index(4)));
  }
  const Metrics m = metrics_from_labels(truth, pred, 4);
  CHECK(m.confusion.sum() == 200);
  for (int c = 0; c < 4; ++c) {
    long long row = 0, col = 0, in_truth = 0, in_pred = 0;
    for (int k = 0; k < 4; ++k) {
      row += m.confusion(c, k);
      col += m.confusion(k, c);
    }
    for (int i = 0; i < 200; ++i) {
      in_truth += truth[std::size_t(i)] == c;
      in_pred += pred[std::size_t(i)] == c;
    }
    CHECK(row == in_truth);
    CHECK(col == in_pred);
  }
}

TEST_CASE("perfect predictions give an identity-patterned confusion") {
  const Metrics m = metrics_from_labels({2, 1, 0, 1}, {2, 1, 0, 1}, 3);
  CHECK(m.overall_accuracy == 1.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(m.confusion(i, j) == 0);
    }
    CHECK(m.producer_accuracy(i) == 1.0);
    CHECK(m.user_accuracy(i) == 1.0);
  }
}

TEST_CASE("history serializes to the documented columns") {
  EpochStats e;
  e.epoch = 1;
  e.train_loss = 0.5;
  e.train_accuracy = 0.25;
  e.val_loss = std::nan("");
  e.val_accuracy = std::nan("");
  CHECK(serialize_history({e}) ==
        "epoch,train_loss,train_acc,val_loss,val_acc\n"
        "1,0.5,0.25,nan,nan\n");
  CHECK(serialize_history({}) ==
        "epoch,train_loss,train_acc,val_loss,val_acc\n");
}
