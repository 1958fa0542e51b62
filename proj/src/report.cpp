#include "croptime/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "croptime/errors.hpp"

namespace croptime {

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt3g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const char* kPalette[13] = {
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860",
    "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd", "#39556e", "#8a4a2f",
    "#356a41"};

const char* band_color(std::size_t i) { return kPalette[i % 13]; }

// Maps data coordinates into one plot rectangle. y grows downward in SVG,
// so mapy flips.
struct Frame {
  double x0, y0, w, h;
  double xmin, xmax, ymin, ymax;

  double mapx(double x) const {
    return x0 + (x - xmin) / (xmax - xmin) * w;
  }
  double mapy(double y) const {
    return y0 + h - (y - ymin) / (ymax - ymin) * h;
  }
};

Frame make_frame(double x0, double y0, double w, double h, double xmin,
                 double xmax, double ymin, double ymax) {
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) {
    ymin -= 0.5;
    ymax = ymin + 1.0;
  }
  const double pad = 0.05 * (ymax - ymin);
  return Frame{x0, y0, w, h, xmin, xmax, ymin - pad, ymax + pad};
}

std::string polyline(const Frame& f, const std::vector<double>& xs,
                     const std::vector<double>& ys, const std::string& color,
                     double width) {
  std::string out = "<polyline fill=\"none\" stroke=\"" + color +
                    "\" stroke-width=\"" + fmt2(width) + "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += fmt2(f.mapx(xs[i])) + "," + fmt2(f.mapy(ys[i]));
  }
  out += "\"/>\n";
  return out;
}

std::string band_polygon(const Frame& f, const std::vector<double>& xs,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         const std::string& color) {
  std::string out = "<polygon fill=\"" + color +
                    "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += fmt2(f.mapx(xs[i])) + "," + fmt2(f.mapy(hi(Eigen::Index(i))));
  }
  for (std::size_t i = xs.size(); i-- > 0;) {
    out += ' ';
    out += fmt2(f.mapx(xs[i])) + "," + fmt2(f.mapy(lo(Eigen::Index(i))));
  }
  out += "\"/>\n";
  return out;
}

std::string text(double x, double y, const std::string& s, int size,
                 const std::string& anchor = "start",
                 const std::string& weight = "normal") {
  return "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) +
         "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) +
         "\" font-weight=\"" + weight + "\" text-anchor=\"" + anchor + "\">" +
         s + "</text>\n";
}

// Axes box plus y range labels and month-start ticks along x.
std::string frame_box(const Frame& f, const DateAxis& axis) {
  std::string out;
  out += "<rect x=\"" + fmt2(f.x0) + "\" y=\"" + fmt2(f.y0) + "\" width=\"" +
         fmt2(f.w) + "\" height=\"" + fmt2(f.h) +
         "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  out += text(f.x0 - 6, f.y0 + 10, fmt3g(f.ymax), 10, "end");
  out += text(f.x0 - 6, f.y0 + f.h, fmt3g(f.ymin), 10, "end");
  static const char* names[12] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                  "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  static const int starts[12] = {1,   32,  60,  91,  121, 152,
                                 182, 213, 244, 274, 305, 335};
  for (int m = 0; m < 12; ++m) {
    const double d = starts[m];
    if (d < f.xmin || d > f.xmax) continue;
    const double px = f.mapx(d);
    out += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(f.y0 + f.h) +
           "\" x2=\"" + fmt2(px) + "\" y2=\"" + fmt2(f.y0 + f.h + 4) +
           "\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    out += text(px, f.y0 + f.h + 14, names[m], 9, "middle");
  }
  (void)axis;
  return out;
}

std::string svg_open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
}

// Blue-white-red ramp for signed relevance, v in [-1, 1].
std::string diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  int r, g, b;
  if (v < 0) {
    r = int(std::lround(255 * (1.0 + v)));
    g = int(std::lround(255 * (1.0 + 0.6 * v)));
    b = 255;
  } else {
    r = 255;
    g = int(std::lround(255 * (1.0 - 0.6 * v)));
    b = int(std::lround(255 * (1.0 - v)));
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
  return buf;
}

}  // namespace

SeriesQuartiles column_quartiles(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) throw ValidationError("no rows to aggregate");
  const Eigen::Index T = rows[0].size();
  SeriesQuartiles q;
  q.q25.resize(T);
  q.median.resize(T);
  q.q75.resize(T);
  std::vector<double> col(rows.size());
  auto quantile = [&](double p) {
    const double pos = p * double(col.size() - 1);
    const std::size_t lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::size_t(std::ceil(pos));
    return col[lo] + (col[hi] - col[lo]) * (pos - double(lo));
  };
  for (Eigen::Index t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != T) throw ValidationError("ragged rows");
      col[i] = rows[i](t);
    }
    std::sort(col.begin(), col.end());
    q.q25(t) = quantile(0.25);
    q.median(t) = quantile(0.50);
    q.q75(t) = quantile(0.75);
  }
  return q;
}

std::string svg_class_panel(const std::string& class_name,
                            const DateAxis& axis,
                            const std::vector<Eigen::VectorXd>& band_medians,
                            const std::vector<std::string>& band_names,
                            const SeriesQuartiles& relevance) {
  const int W = 780, H = 460;
  std::vector<double> xs;
  for (double d : axis.days_of_year()) xs.push_back(d);

  double in_min = 0.0, in_max = 0.0;
  for (const auto& m : band_medians) {
    in_min = std::min(in_min, m.minCoeff());
    in_max = std::max(in_max, m.maxCoeff());
  }
  const Frame top =
      make_frame(60, 30, 560, 170, xs.front(), xs.back(), in_min, in_max);
  const double r_min = std::min(0.0, relevance.q25.minCoeff());
  const double r_max = std::max(relevance.q75.maxCoeff(), 1e-12);
  const Frame bot =
      make_frame(60, 250, 560, 170, xs.front(), xs.back(), r_min, r_max);

  std::string out = svg_open(W, H);
  out += text(60, 18, class_name + " (" +
                          std::to_string(band_medians.empty()
                                             ? 0
                                             : int(band_medians[0].size())) +
                          " timesteps)",
              13, "start", "bold");
  out += frame_box(top, axis);
  for (std::size_t b = 0; b < band_medians.size(); ++b) {
    std::vector<double> ys(band_medians[b].data(),
                           band_medians[b].data() + band_medians[b].size());
    out += polyline(top, xs, ys, band_color(b), 1.2);
    const double ly = 40.0 + 13.0 * double(b);
    out += "<line x1=\"640\" y1=\"" + fmt2(ly - 3) + "\" x2=\"660\" y2=\"" +
           fmt2(ly - 3) + "\" stroke=\"" + std::string(band_color(b)) +
           "\" stroke-width=\"2\"/>\n";
    out += text(666, ly, band_names[b], 9);
  }
  out += text(60, 225, "median reflectance per band", 10);

  out += frame_box(bot, axis);
  out += band_polygon(bot, xs, relevance.q25, relevance.q75, "#4c72b0");
  {
    std::vector<double> ys(relevance.median.data(),
                           relevance.median.data() + relevance.median.size());
    out += polyline(bot, xs, ys, "#20344c", 1.6);
  }
  out += text(60, 445, "relevance r_t: median and 25..75 percentile band", 10);
  out += "</svg>\n";
  return out;
}

std::string svg_parcel_panel(const std::string& parcel_id,
                             const DateAxis& axis,
                             const Eigen::MatrixXd& values,
                             const std::vector<std::string>& band_names,
                             const Eigen::VectorXd& r_t,
                             const Eigen::MatrixXd& r_bt) {
  const int B = int(values.rows());
  const int T = int(values.cols());
  const int W = 780, H = 640;
  std::vector<double> xs;
  for (double d : axis.days_of_year()) xs.push_back(d);

  const Frame top = make_frame(60, 30, 560, 150, xs.front(), xs.back(),
                               std::min(0.0, values.minCoeff()),
                               values.maxCoeff());
  const Frame mid = make_frame(60, 220, 560, 130, xs.front(), xs.back(),
                               std::min(r_t.minCoeff(), 0.0),
                               std::max(r_t.maxCoeff(), 1e-12));

  std::string out = svg_open(W, H);
  out += text(60, 18, "parcel " + parcel_id, 13, "start", "bold");
  out += frame_box(top, axis);
  for (int b = 0; b < B; ++b) {
    std::vector<double> ys;
    for (int t = 0; t < T; ++t) ys.push_back(values(b, t));
    out += polyline(top, xs, ys, band_color(std::size_t(b)), 1.0);
    const double ly = 40.0 + 13.0 * double(b);
    out += "<line x1=\"640\" y1=\"" + fmt2(ly - 3) + "\" x2=\"660\" y2=\"" +
           fmt2(ly - 3) + "\" stroke=\"" +
           std::string(band_color(std::size_t(b))) +
           "\" stroke-width=\"2\"/>\n";
    out += text(666, ly, band_names[std::size_t(b)], 9);
  }
  out += text(60, 198, "input reflectance", 10);

  out += frame_box(mid, axis);
  {
    std::vector<double> ys(r_t.data(), r_t.data() + r_t.size());
    out += polyline(mid, xs, ys, "#20344c", 1.6);
  }
  out += text(60, 370, "timestep relevance r_t", 10);

  // Heatmap: one cell per (band, timestep), signed diverging colors.
  const double cell_w = 560.0 / double(T);
  const double cell_h = 200.0 / double(B);
  const double peak = std::max(r_bt.cwiseAbs().maxCoeff(), 1e-12);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      out += "<rect x=\"" + fmt2(60 + cell_w * t) + "\" y=\"" +
             fmt2(400 + cell_h * b) + "\" width=\"" + fmt2(cell_w + 0.2) +
             "\" height=\"" + fmt2(cell_h + 0.2) + "\" fill=\"" +
             diverging_color(r_bt(b, t) / peak) + "\"/>\n";
    }
    out += text(54, 400 + cell_h * (b + 0.5) + 3, band_names[std::size_t(b)],
                8, "end");
  }
  out += text(60, 622, "relevance per band and timestep", 10);
  out += "</svg>\n";
  return out;
}

std::string svg_table(const std::string& title,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::vector<double> col_w(header.size(), 0.0);
  for (std::size_t j = 0; j < header.size(); ++j) {
    col_w[j] = double(header[j].size());
  }
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw ValidationError("ragged table row");
    for (std::size_t j = 0; j < row.size(); ++j) {
      col_w[j] = std::max(col_w[j], double(row[j].size()));
    }
  }
  std::vector<double> col_x(header.size(), 20.0);
  for (std::size_t j = 1; j < header.size(); ++j) {
    col_x[j] = col_x[j - 1] + col_w[j - 1] * 7.5 + 24.0;
  }
  const int W = int(col_x.back() + col_w.back() * 7.5 + 40.0);
  const int H = int(70 + 18 * rows.size());

  std::string out = svg_open(W, H);
  out += text(20, 22, title, 13, "start", "bold");
  for (std::size_t j = 0; j < header.size(); ++j) {
    out += text(col_x[j], 46, header[j], 11, "start", "bold");
  }
  out += "<line x1=\"20\" y1=\"52\" x2=\"" + std::to_string(W - 20) +
         "\" y2=\"52\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      out += text(col_x[j], 70.0 + 18.0 * double(i), rows[i][j], 11);
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace croptime
