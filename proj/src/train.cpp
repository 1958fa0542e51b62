#include "croptime/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "croptime/errors.hpp"
#include "croptime/rng.hpp"

namespace croptime {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = std::log((logits.array() - m).exp().sum()) + m;
  return lse - logits(label);
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

// Accumulates one sample's gradient, scaled by `scale`, into g.
void backward_sample(const Parameters& p, const ForwardTrace& tr,
                     const Eigen::VectorXd& dlogits_scaled, Parameters& g) {
  const ModelConfig& cfg = p.config;
  const int T = int(tr.input.rows());
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = d / H;
  std::vector<int> present;
  for (int t = 0; t < T; ++t) {
    if (tr.mask[std::size_t(t)]) present.push_back(t);
  }

  // Decoder.
  Eigen::VectorXd delta = dlogits_scaled;
  for (int i = int(p.decoder.size()) - 1; i >= 0; --i) {
    const Eigen::VectorXd& input =
        (i == 0) ? tr.pooled : tr.decoder_act[std::size_t(i - 1)];
    g.decoder[std::size_t(i)].weight.noalias() += delta * input.transpose();
    g.decoder[std::size_t(i)].bias += delta;
    if (i > 0) {
      delta = p.decoder[std::size_t(i)].weight.transpose() * delta;
      delta.array() *=
          (tr.decoder_pre[std::size_t(i - 1)].array() > 0.0).cast<double>();
    } else {
      delta = p.decoder[0].weight.transpose() * delta;
    }
  }
  const Eigen::VectorXd dpooled = delta;  // d_model

  // Pooling: pooled = attn_out^T * alpha, alpha = softmax(present scores).
  const double pool_scale = 1.0 / std::sqrt(double(d));
  Eigen::VectorXd dalpha = Eigen::VectorXd::Zero(T);
  for (int t : present) dalpha(t) = tr.attn_out.row(t).dot(dpooled);
  double mixed = 0.0;
  for (int t : present) mixed += tr.pool_weights(t) * dalpha(t);
  Eigen::VectorXd dscore = Eigen::VectorXd::Zero(T);
  for (int t : present) {
    dscore(t) = tr.pool_weights(t) * (dalpha(t) - mixed);
  }
  Eigen::MatrixXd dattn_out = Eigen::MatrixXd::Zero(T, d);
  for (int t : present) {
    g.pool_query.noalias() +=
        dscore(t) * pool_scale * tr.attn_out.row(t).transpose();
    dattn_out.row(t) = tr.pool_weights(t) * dpooled.transpose() +
                       dscore(t) * pool_scale * p.pool_query.transpose();
  }

  // Output projection.
  g.wo.weight.noalias() += dattn_out.transpose() * tr.head_mix;
  g.wo.bias += dattn_out.colwise().sum().transpose();
  Eigen::MatrixXd dmix = dattn_out * p.wo.weight;

  // Attention heads; the mixing weights are softmax rows over present keys.
  Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(T, d);
  Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(T, d);
  Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(T, d);
  const double scale = 1.0 / std::sqrt(double(dh));
  for (int h = 0; h < H; ++h) {
    const Eigen::MatrixXd& a = tr.attention[std::size_t(h)];
    const auto vh = tr.v.middleCols(h * dh, dh);
    const auto dzh = dmix.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh).noalias() = a.transpose() * dzh;
    const Eigen::MatrixXd da = dzh * vh.transpose();
    Eigen::MatrixXd ds = Eigen::MatrixXd::Zero(T, T);
    for (int t : present) {
      const double dot = a.row(t).dot(da.row(t));
      ds.row(t) = (a.row(t).array() * (da.row(t).array() - dot)).matrix();
    }
    dq.middleCols(h * dh, dh).noalias() =
        ds * tr.k.middleCols(h * dh, dh) * scale;
    dk.middleCols(h * dh, dh).noalias() =
        ds.transpose() * tr.q.middleCols(h * dh, dh) * scale;
  }

  g.wq.weight.noalias() += dq.transpose() * tr.embedded;
  g.wq.bias += dq.colwise().sum().transpose();
  g.wk.weight.noalias() += dk.transpose() * tr.embedded;
  g.wk.bias += dk.colwise().sum().transpose();
  g.wv.weight.noalias() += dv.transpose() * tr.embedded;
  g.wv.bias += dv.colwise().sum().transpose();

  // The positional code is additive, so the encoder sees dE unchanged.
  Eigen::MatrixXd ddelta = dq * p.wq.weight + dk * p.wk.weight + dv * p.wv.weight;

  for (int i = int(p.encoder.size()) - 1; i >= 0; --i) {
    const Eigen::MatrixXd& input =
        (i == 0) ? tr.input : tr.encoder_act[std::size_t(i - 1)];
    g.encoder[std::size_t(i)].weight.noalias() += ddelta.transpose() * input;
    g.encoder[std::size_t(i)].bias += ddelta.colwise().sum().transpose();
    if (i > 0) {
      ddelta = ddelta * p.encoder[std::size_t(i)].weight;
      ddelta.array() *=
          (tr.encoder_pre[std::size_t(i - 1)].array() > 0.0).cast<double>();
    }
  }
}

std::vector<Eigen::Map<Eigen::VectorXd>> flat_views(Parameters& p) {
  std::vector<Eigen::Map<Eigen::VectorXd>> views;
  visit_params(p, [&](auto& arr) {
    views.emplace_back(arr.data(), arr.size());
  });
  return views;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(cfg.adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction <= 0.5)) {
    throw ConfigError("validation_fraction must be in [0, 0.5]");
  }
}

LossAndGrad loss_and_grad(const Parameters& p,
                          const std::vector<const TimeSeriesSample*>& batch,
                          const DateAxis& axis) {
  if (batch.empty()) throw ValidationError("loss_and_grad needs a non-empty batch");
  LossAndGrad out;
  out.grad = zeros_like(p);
  const double inv = 1.0 / double(batch.size());
  for (const TimeSeriesSample* s : batch) {
    const ForwardTrace tr = forward(p, *s, axis);
    const double loss = cross_entropy(tr.logits, s->label);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss for parcel '" + s->parcel_id + "'");
    }
    out.loss += loss * inv;
    out.n_correct += (argmax_lowest(tr.logits) == s->label);

    const double m = tr.logits.maxCoeff();
    Eigen::VectorXd soft = (tr.logits.array() - m).exp();
    soft /= soft.sum();
    soft(s->label) -= 1.0;
    backward_sample(p, tr, soft * inv, out.grad);
  }
  return out;
}

double batch_loss(const Parameters& p,
                  const std::vector<const TimeSeriesSample*>& batch,
                  const DateAxis& axis) {
  if (batch.empty()) throw ValidationError("batch_loss needs a non-empty batch");
  double loss = 0.0;
  for (const TimeSeriesSample* s : batch) {
    const ForwardTrace tr = forward(p, *s, axis);
    loss += cross_entropy(tr.logits, s->label);
  }
  return loss / double(batch.size());
}

GradCheckResult grad_check(const Parameters& p, const TimeSeriesSample& sample,
                           const DateAxis& axis, double fd_epsilon,
                           int min_params, std::uint64_t seed) {
  if (!(fd_epsilon >= 1e-7 && fd_epsilon <= 1e-3)) {
    throw ConfigError("fd_epsilon must be in [1e-7, 1e-3]");
  }
  const std::vector<const TimeSeriesSample*> batch = {&sample};
  const LossAndGrad analytic = loss_and_grad(p, batch, axis);

  Parameters work = p;
  auto views = flat_views(work);
  Parameters grad_copy = analytic.grad;
  auto grad_views = flat_views(grad_copy);

  const long long total = p.parameter_count();
  const long long n_check = std::min<long long>(total, std::max(min_params, 1));
  std::vector<long long> indices(static_cast<std::size_t>(total));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(mix_seed(seed, 0x6c, 0x47));
  rng.shuffle(indices);

  // Central differences below this carry nothing but float roundoff of the
  // loss itself; comparing them against an exact zero gradient would only
  // measure noise. Such draws are skipped and replaced from the shuffled
  // pool, as are draws whose second difference shows the step straddles a
  // ReLU kink (the two-sided slope is not the derivative there).
  const double f0 = batch_loss(work, batch, axis);
  const double noise =
      64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0));
  const double fd_floor = noise / (2.0 * fd_epsilon);

  GradCheckResult res;
  for (long long flat : indices) {
    if (res.checked >= n_check) break;
    long long offset = flat;
    std::size_t vi = 0;
    while (offset >= views[vi].size()) {
      offset -= views[vi].size();
      ++vi;
    }
    const double saved = views[vi](offset);
    views[vi](offset) = saved + fd_epsilon;
    const double lp = batch_loss(work, batch, axis);
    views[vi](offset) = saved - fd_epsilon;
    const double lm = batch_loss(work, batch, axis);
    views[vi](offset) = saved;

    const double fd = (lp - lm) / (2.0 * fd_epsilon);
    const double an = grad_views[vi](offset);
    if (std::abs(fd) <= fd_floor && std::abs(an) <= fd_floor) continue;
    if (std::abs(lp + lm - 2.0 * f0) > 0.5 * std::abs(lp - lm) + noise) continue;

    ++res.checked;
    const double rel =
        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_flat_index = flat;
    }
  }
  return res;
}

Metrics metrics_from_labels(const std::vector<int>& truth,
                            const std::vector<int>& predicted, int n_classes) {
  if (truth.size() != predicted.size()) {
    throw ValidationError("truth and prediction lengths differ");
  }
  Metrics m;
  m.n_samples = (long long)truth.size();
  m.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  long long hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], pr = predicted[i];
    if (t < 0 || t >= n_classes || pr < 0 || pr >= n_classes) {
      throw ValidationError("label outside [0, n_classes) in metrics input");
    }
    m.confusion(t, pr) += 1;
    hit += (t == pr);
  }
  m.overall_accuracy = truth.empty() ? 0.0 : double(hit) / double(truth.size());
  m.producer_accuracy = Eigen::VectorXd::Constant(n_classes, kNaN);
  m.user_accuracy = Eigen::VectorXd::Constant(n_classes, kNaN);
  for (int c = 0; c < n_classes; ++c) {
    const long long row = m.confusion.row(c).sum();
    const long long col = m.confusion.col(c).sum();
    if (row > 0) m.producer_accuracy(c) = double(m.confusion(c, c)) / double(row);
    if (col > 0) m.user_accuracy(c) = double(m.confusion(c, c)) / double(col);
  }
  return m;
}

Metrics evaluate(const Parameters& p, const Dataset& ds) {
  std::vector<int> truth, pred;
  truth.reserve(ds.samples.size());
  pred.reserve(ds.samples.size());
  for (const TimeSeriesSample& s : ds.samples) {
    truth.push_back(s.label);
    pred.push_back(predict(p, s, ds.axis).label);
  }
  return metrics_from_labels(truth, pred, p.config.n_classes);
}

TrainResult train(const ModelConfig& model_cfg, const Dataset& train_data,
                  const TrainConfig& cfg) {
  return train_from(init_model(model_cfg, cfg.seed), train_data, cfg);
}

TrainResult train_from(Parameters params, const Dataset& train_data,
                       const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_model_config(params.config);
  if (train_data.samples.empty()) {
    throw ValidationError("training needs at least one sample");
  }
  if (train_data.n_bands() != params.config.bands) {
    throw ValidationError("dataset band count does not match the model");
  }
  if (train_data.n_classes() > params.config.n_classes) {
    throw ValidationError("dataset has more classes than the model");
  }

  const long long n = train_data.size();
  std::vector<long long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  {
    Rng rng(mix_seed(cfg.seed, 0x51));  // validation split stream
    rng.shuffle(order);
  }
  const long long n_val = llround(cfg.validation_fraction * double(n));
  std::vector<long long> val_idx(order.begin(), order.begin() + n_val);
  std::vector<long long> train_idx(order.begin() + n_val, order.end());
  if (train_idx.empty()) {
    throw ConfigError("validation split leaves no training samples");
  }

  TrainResult result;
  result.history.reserve(std::size_t(cfg.epochs));
  if (cfg.epochs == 0) {
    result.params = std::move(params);
    return result;
  }

  Parameters m_state = zeros_like(params);
  Parameters v_state = zeros_like(params);
  auto theta = flat_views(params);
  auto mviews = flat_views(m_state);
  auto vviews = flat_views(v_state);
  long long step = 0;

  double best_val_acc = -1.0;
  Parameters best_params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 0xe9, std::uint64_t(epoch)));
    rng.shuffle(train_idx);

    double epoch_loss = 0.0;
    long long epoch_correct = 0;
    try {
      for (std::size_t start = 0; start < train_idx.size();
           start += std::size_t(cfg.batch_size)) {
        const std::size_t stop =
            std::min(train_idx.size(), start + std::size_t(cfg.batch_size));
        std::vector<const TimeSeriesSample*> batch;
        batch.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
          batch.push_back(&train_data.samples[std::size_t(train_idx[i])]);
        }
        LossAndGrad lg = loss_and_grad(params, batch, train_data.axis);
        epoch_loss += lg.loss * double(batch.size());
        epoch_correct += lg.n_correct;

        ++step;
        auto gviews = flat_views(lg.grad);
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(step));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(step));
        for (std::size_t a = 0; a < theta.size(); ++a) {
          mviews[a] = cfg.adam_beta1 * mviews[a] + (1.0 - cfg.adam_beta1) * gviews[a];
          vviews[a] = cfg.adam_beta2 * vviews[a] +
                      (1.0 - cfg.adam_beta2) * gviews[a].cwiseProduct(gviews[a]);
          theta[a].array() -=
              cfg.learning_rate * (mviews[a].array() / bc1) /
              ((vviews[a].array() / bc2).sqrt() + cfg.adam_eps);
        }
      }
    } catch (const NumericError& e) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                          ": " + e.what());
    }
    epoch_loss /= double(train_idx.size());
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch));
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss;
    stats.train_accuracy = double(epoch_correct) / double(train_idx.size());
    stats.val_loss = kNaN;
    stats.val_accuracy = kNaN;
    if (n_val > 0) {
      double vloss = 0.0;
      long long vcorrect = 0;
      for (long long i : val_idx) {
        const TimeSeriesSample& s = train_data.samples[std::size_t(i)];
        const ForwardTrace tr = forward(params, s, train_data.axis);
        vloss += cross_entropy(tr.logits, s.label);
        vcorrect += (argmax_lowest(tr.logits) == s.label);
      }
      stats.val_loss = vloss / double(n_val);
      stats.val_accuracy = double(vcorrect) / double(n_val);
      if (stats.val_accuracy > best_val_acc) {
        best_val_acc = stats.val_accuracy;
        best_params = params;
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(stats);
  }

  if (n_val > 0) {
    result.params = std::move(best_params);
  } else {
    result.params = std::move(params);
    result.best_epoch = cfg.epochs;
  }
  return result;
}

std::string serialize_history(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const EpochStats& e : history) {
    out += std::to_string(e.epoch);
    out += ',';
    out += format_real(e.train_loss, 9);
    out += ',';
    out += format_real(e.train_accuracy, 9);
    out += ',';
    out += format_real(e.val_loss, 9);
    out += ',';
    out += format_real(e.val_accuracy, 9);
    out += '\n';
  }
  return out;
}

void save_history(const std::vector<EpochStats>& history,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  const std::string text = serialize_history(history);
  out.write(text.data(), std::streamsize(text.size()));
}

}  // namespace croptime
