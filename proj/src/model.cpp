#include "croptime/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "croptime/errors.hpp"
#include "croptime/rng.hpp"

namespace croptime {

namespace {

constexpr const char* kModelFormat = "croptime-model";
constexpr int kModelVersion = 1;

std::vector<int> decoder_layer_widths(const ModelConfig& cfg) {
  std::vector<int> widths = cfg.decoder_dims;
  widths.push_back(cfg.n_classes);
  return widths;
}

// Names aligned with visit_params order; the model file is keyed on them.
std::vector<std::string> canonical_param_names(const Parameters& p) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    names.push_back("encoder." + std::to_string(i) + ".weight");
    names.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (const char* stem :
       {"attention.query", "attention.key", "attention.value",
        "attention.output"}) {
    names.push_back(std::string(stem) + ".weight");
    names.push_back(std::string(stem) + ".bias");
  }
  names.emplace_back("pool.query");
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    names.push_back("decoder." + std::to_string(i) + ".weight");
    names.push_back("decoder." + std::to_string(i) + ".bias");
  }
  return names;
}

// Softmax over the present entries of a score vector; absent entries get
// an exact zero weight.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& scores,
                               const std::vector<int>& present) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(scores.size());
  double m = -std::numeric_limits<double>::infinity();
  for (int i : present) m = std::max(m, scores(i));
  double sum = 0.0;
  for (int i : present) {
    const double e = std::exp(scores(i) - m);
    out(i) = e;
    sum += e;
  }
  for (int i : present) out(i) /= sum;
  return out;
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.bands < 1) throw ConfigError("bands must be >= 1");
  if (cfg.n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (cfg.t_max < 1) throw ConfigError("t_max must be >= 1");
  if (cfg.d_model < 1) throw ConfigError("d_model must be >= 1");
  if (cfg.n_heads < 1) throw ConfigError("n_heads must be >= 1");
  if (cfg.d_model % cfg.n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(cfg.d_model) +
                      ") must be divisible by n_heads (" +
                      std::to_string(cfg.n_heads) + ")");
  }
  if (cfg.encoder_dims.empty()) {
    throw ConfigError("encoder_dims must hold at least one layer width");
  }
  for (int w : cfg.encoder_dims) {
    if (w < 1) throw ConfigError("encoder layer widths must be >= 1");
  }
  if (cfg.encoder_dims.back() != cfg.d_model) {
    throw ConfigError("the last encoder width must equal d_model");
  }
  for (int w : cfg.decoder_dims) {
    if (w < 1) throw ConfigError("decoder layer widths must be >= 1");
  }
  if (cfg.positional_encoding != "sinusoidal-day-of-year") {
    throw ConfigError("unknown positional encoding '" +
                      cfg.positional_encoding + "'");
  }
}

long long Parameters::parameter_count() const {
  long long n = 0;
  visit_params(*this, [&](const auto& arr) { n += arr.size(); });
  return n;
}

Parameters zeros_like(const Parameters& p) {
  Parameters z = p;
  visit_params(z, [](auto& arr) { arr.setZero(); });
  return z;
}

Parameters init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate_model_config(cfg);
  Rng rng(seed);

  auto glorot = [&rng](int out, int in) {
    LinearLayer l;
    l.weight.resize(out, in);
    const double w = std::sqrt(6.0 / double(in + out));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weight(r, c) = rng.uniform(-w, w);
    }
    l.bias = Eigen::VectorXd::Zero(out);
    return l;
  };

  Parameters p;
  p.config = cfg;
  int in = cfg.bands;
  for (int width : cfg.encoder_dims) {
    p.encoder.push_back(glorot(width, in));
    in = width;
  }
  p.wq = glorot(cfg.d_model, cfg.d_model);
  p.wk = glorot(cfg.d_model, cfg.d_model);
  p.wv = glorot(cfg.d_model, cfg.d_model);
  p.wo = glorot(cfg.d_model, cfg.d_model);
  {
    const double w = std::sqrt(6.0 / double(cfg.d_model + 1));
    p.pool_query.resize(cfg.d_model);
    for (int i = 0; i < cfg.d_model; ++i) p.pool_query(i) = rng.uniform(-w, w);
  }
  in = cfg.d_model;
  for (int width : decoder_layer_widths(cfg)) {
    p.decoder.push_back(glorot(width, in));
    in = width;
  }
  return p;
}

Eigen::MatrixXd positional_code(const std::vector<double>& days, int d_model) {
  const int T = int(days.size());
  Eigen::MatrixXd pe(T, d_model);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < d_model; ++i) {
      const int pair = i / 2;
      const double freq = std::pow(10000.0, -2.0 * double(pair) / double(d_model));
      const double angle = days[std::size_t(t)] * freq;
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

ForwardTrace forward_days(const Parameters& p, const Eigen::MatrixXd& values,
                          const std::vector<std::uint8_t>& mask,
                          const std::vector<double>& days) {
  const ModelConfig& cfg = p.config;
  const int T = int(values.cols());
  const int B = int(values.rows());
  if (B != cfg.bands) {
    throw ValidationError("sample has " + std::to_string(B) +
                          " bands, model expects " + std::to_string(cfg.bands));
  }
  if (int(mask.size()) != T || int(days.size()) != T) {
    throw ValidationError("values, mask and days disagree on the timestep count");
  }
  if (T < 1 || T > cfg.t_max) {
    throw ValidationError("sequence length " + std::to_string(T) +
                          " outside [1, t_max=" + std::to_string(cfg.t_max) + "]");
  }
  std::vector<int> present;
  present.reserve(std::size_t(T));
  for (int t = 0; t < T; ++t) {
    if (mask[std::size_t(t)]) present.push_back(t);
  }
  if (present.empty()) {
    throw InferenceError("every timestep of the sample is masked");
  }

  ForwardTrace tr;
  tr.mask = mask;
  tr.days = days;
  tr.input = values.transpose();  // T x B

  // Per-timestep encoder; hidden layers ReLU, final layer linear.
  Eigen::MatrixXd h = tr.input;
  const std::size_t n_enc = p.encoder.size();
  tr.encoder_pre.reserve(n_enc);
  tr.encoder_act.reserve(n_enc);
  for (std::size_t i = 0; i < n_enc; ++i) {
    Eigen::MatrixXd pre =
        (h * p.encoder[i].weight.transpose()).rowwise() +
        p.encoder[i].bias.transpose();
    tr.encoder_pre.push_back(pre);
    if (i + 1 < n_enc) {
      tr.encoder_act.push_back(pre.cwiseMax(0.0));
    } else {
      tr.encoder_act.push_back(std::move(pre));
    }
    h = tr.encoder_act.back();
  }

  tr.pos_code = positional_code(days, cfg.d_model);
  tr.embedded = tr.encoder_act.back() + tr.pos_code;

  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = d / H;
  tr.q = (tr.embedded * p.wq.weight.transpose()).rowwise() + p.wq.bias.transpose();
  tr.k = (tr.embedded * p.wk.weight.transpose()).rowwise() + p.wk.bias.transpose();
  tr.v = (tr.embedded * p.wv.weight.transpose()).rowwise() + p.wv.bias.transpose();
  // Masked timesteps contribute nothing anywhere downstream.
  for (int t = 0; t < T; ++t) {
    if (!mask[std::size_t(t)]) {
      tr.embedded.row(t).setZero();
      tr.q.row(t).setZero();
      tr.k.row(t).setZero();
      tr.v.row(t).setZero();
    }
  }

  tr.attention.assign(std::size_t(H), Eigen::MatrixXd::Zero(T, T));
  tr.head_mix.resize(T, d);
  tr.head_mix.setZero();
  const double scale = 1.0 / std::sqrt(double(dh));
  for (int hh = 0; hh < H; ++hh) {
    const auto qh = tr.q.middleCols(hh * dh, dh);
    const auto kh = tr.k.middleCols(hh * dh, dh);
    const Eigen::MatrixXd scores = qh * kh.transpose() * scale;
    Eigen::MatrixXd& a = tr.attention[std::size_t(hh)];
    for (int t : present) {
      a.row(t) = masked_softmax(scores.row(t).transpose(), present).transpose();
    }
    tr.head_mix.middleCols(hh * dh, dh) = a * tr.v.middleCols(hh * dh, dh);
  }

  tr.attn_out =
      (tr.head_mix * p.wo.weight.transpose()).rowwise() + p.wo.bias.transpose();
  for (int t = 0; t < T; ++t) {
    if (!mask[std::size_t(t)]) tr.attn_out.row(t).setZero();
  }

  // Temporal pooling with a learned query.
  tr.pool_scores = Eigen::VectorXd::Zero(T);
  const double pool_scale = 1.0 / std::sqrt(double(d));
  for (int t : present) {
    tr.pool_scores(t) = p.pool_query.dot(tr.attn_out.row(t)) * pool_scale;
  }
  tr.pool_weights = masked_softmax(tr.pool_scores, present);
  tr.pooled = tr.attn_out.transpose() * tr.pool_weights;

  Eigen::VectorXd a = tr.pooled;
  const std::size_t n_dec = p.decoder.size();
  tr.decoder_pre.reserve(n_dec);
  tr.decoder_act.reserve(n_dec);
  for (std::size_t i = 0; i < n_dec; ++i) {
    Eigen::VectorXd pre = p.decoder[i].weight * a + p.decoder[i].bias;
    tr.decoder_pre.push_back(pre);
    if (i + 1 < n_dec) {
      tr.decoder_act.push_back(pre.cwiseMax(0.0));
    } else {
      tr.decoder_act.push_back(std::move(pre));
    }
    a = tr.decoder_act.back();
  }
  tr.logits = tr.decoder_act.back();
  if (!tr.logits.allFinite()) {
    throw NumericError("forward pass produced non-finite logits");
  }
  return tr;
}

ForwardTrace forward(const Parameters& p, const TimeSeriesSample& sample,
                     const DateAxis& axis) {
  if (axis.size() != sample.timesteps()) {
    throw ValidationError("sample '" + sample.parcel_id +
                          "' does not match the date axis length");
  }
  return forward_days(p, sample.values, sample.mask, axis.days_of_year());
}

Prediction predict(const Parameters& p, const TimeSeriesSample& sample,
                   const DateAxis& axis) {
  ForwardTrace tr = forward(p, sample, axis);
  Prediction pred;
  pred.logits = std::move(tr.logits);
  pred.label = 0;
  for (int c = 1; c < pred.logits.size(); ++c) {
    if (pred.logits(c) > pred.logits(pred.label)) pred.label = c;
  }
  return pred;
}

std::string serialize_params(const Parameters& p) {
  validate_model_config(p.config);
  const std::vector<std::string> names = canonical_param_names(p);

  std::string out;
  out.reserve(std::size_t(p.parameter_count()) * 24 + 1024);
  out += "{\n";
  out += "  \"format\": \"";
  out += kModelFormat;
  out += "\",\n  \"version\": ";
  out += std::to_string(kModelVersion);
  out += ",\n  \"config\": {\n";
  out += "    \"bands\": " + std::to_string(p.config.bands) + ",\n";
  out += "    \"n_classes\": " + std::to_string(p.config.n_classes) + ",\n";
  out += "    \"t_max\": " + std::to_string(p.config.t_max) + ",\n";
  out += "    \"d_model\": " + std::to_string(p.config.d_model) + ",\n";
  out += "    \"n_heads\": " + std::to_string(p.config.n_heads) + ",\n";
  auto int_list = [](const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(v[i]);
    }
    return s + "]";
  };
  out += "    \"encoder_dims\": " + int_list(p.config.encoder_dims) + ",\n";
  out += "    \"decoder_dims\": " + int_list(p.config.decoder_dims) + ",\n";
  out += "    \"positional_encoding\": \"" + p.config.positional_encoding +
         "\"\n  },\n";
  out += "  \"layers\": [\n";

  std::size_t idx = 0;
  visit_params(p, [&](const auto& arr) {
    using Arr = std::decay_t<decltype(arr)>;
    out += "    {\"name\": \"" + names[idx] + "\", \"shape\": [";
    if constexpr (std::is_same_v<Arr, Eigen::MatrixXd>) {
      out += std::to_string(arr.rows()) + ", " + std::to_string(arr.cols());
    } else {
      out += std::to_string(arr.size());
    }
    out += "], \"data\": [";
    // Row-major traversal; 17 significant digits round-trip binary64.
    bool first = true;
    if constexpr (std::is_same_v<Arr, Eigen::MatrixXd>) {
      for (Eigen::Index r = 0; r < arr.rows(); ++r) {
        for (Eigen::Index c = 0; c < arr.cols(); ++c) {
          if (!first) out += ", ";
          first = false;
          out += format_real(arr(r, c), 17);
        }
      }
    } else {
      for (Eigen::Index i = 0; i < arr.size(); ++i) {
        if (!first) out += ", ";
        first = false;
        out += format_real(arr(i), 17);
      }
    }
    out += "]}";
    ++idx;
    out += (idx == names.size()) ? "\n" : ",\n";
  });
  out += "  ]\n}\n";
  return out;
}

void save_params(const Parameters& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  const std::string text = serialize_params(p);
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw ValidationError("short write to '" + path + "'");
}

Parameters parse_params(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model file is not valid JSON: ") +
                           e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kModelFormat) {
      throw ModelFormatError("unexpected model format tag");
    }
    if (doc.at("version").get<int>() != kModelVersion) {
      throw ModelFormatError("unsupported model file version");
    }
    const nlohmann::json& jc = doc.at("config");
    ModelConfig cfg;
    cfg.bands = jc.at("bands").get<int>();
    cfg.n_classes = jc.at("n_classes").get<int>();
    cfg.t_max = jc.at("t_max").get<int>();
    cfg.d_model = jc.at("d_model").get<int>();
    cfg.n_heads = jc.at("n_heads").get<int>();
    cfg.encoder_dims = jc.at("encoder_dims").get<std::vector<int>>();
    cfg.decoder_dims = jc.at("decoder_dims").get<std::vector<int>>();
    cfg.positional_encoding = jc.at("positional_encoding").get<std::string>();
    validate_model_config(cfg);

    Parameters p = init_model(cfg, 0);
    visit_params(p, [](auto& arr) { arr.setZero(); });
    const std::vector<std::string> names = canonical_param_names(p);
    const nlohmann::json& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != names.size()) {
      throw ModelFormatError("model file holds " +
                             std::to_string(layers.size()) +
                             " arrays, expected " +
                             std::to_string(names.size()));
    }
    std::size_t idx = 0;
    visit_params(p, [&](auto& arr) {
      using Arr = std::decay_t<decltype(arr)>;
      const nlohmann::json& entry = layers.at(idx);
      if (entry.at("name").get<std::string>() != names[idx]) {
        throw ModelFormatError("array " + std::to_string(idx) +
                               " is named '" +
                               entry.at("name").get<std::string>() +
                               "', expected '" + names[idx] + "'");
      }
      const auto shape = entry.at("shape").get<std::vector<long long>>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if constexpr (std::is_same_v<Arr, Eigen::MatrixXd>) {
        if (shape.size() != 2 || shape[0] != arr.rows() || shape[1] != arr.cols()) {
          throw ModelFormatError("shape mismatch for '" + names[idx] + "'");
        }
        if (static_cast<long long>(data.size()) != arr.size()) {
          throw ModelFormatError("data length mismatch for '" + names[idx] + "'");
        }
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < arr.rows(); ++r) {
          for (Eigen::Index c = 0; c < arr.cols(); ++c) arr(r, c) = data[k++];
        }
      } else {
        if (shape.size() != 1 || shape[0] != arr.size()) {
          throw ModelFormatError("shape mismatch for '" + names[idx] + "'");
        }
        if (data.size() != std::size_t(arr.size())) {
          throw ModelFormatError("data length mismatch for '" + names[idx] + "'");
        }
        for (Eigen::Index i = 0; i < arr.size(); ++i) arr(i) = data[std::size_t(i)];
      }
      for (double v : data) {
        if (!std::isfinite(v)) {
          throw ModelFormatError("non-finite value in '" + names[idx] + "'");
        }
      }
      ++idx;
    });
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model file structure: ") + e.what());
  }
}

Parameters load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str());
}

}  // namespace croptime
