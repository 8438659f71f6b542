#include "tabdistill/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tabdistill {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 360.0;
constexpr double kMargin = 40.0;
constexpr const char* kClassColor[] = {"#1f77b4", "#d62728"};
constexpr const char* kSeriesColor[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
  double x_min, x_max, y_min, y_max;
  double sx(double x) const { return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin); }
  double sy(double y) const { return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin); }
};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void header(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape(title) << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f) {
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
      << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 14 << "\">" << f.x_min << "</text>\n";
  out << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 14 << "\" text-anchor=\"end\">" << f.x_max
      << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin << "\" text-anchor=\"end\">" << f.y_min
      << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 8 << "\" text-anchor=\"end\">" << f.y_max << "</text>\n";
}

}  // namespace

std::string scatter_svg(const Dataset* data, const SyntheticData* syn, const DecisionGrid* grid,
                        const std::string& title) {
  Frame f{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  auto extend = [&f](double x, double y) {
    f.x_min = std::min(f.x_min, x);
    f.x_max = std::max(f.x_max, x);
    f.y_min = std::min(f.y_min, y);
    f.y_max = std::max(f.y_max, y);
  };
  if (grid) {
    extend(grid->bounds.x1_min, grid->bounds.x2_min);
    extend(grid->bounds.x1_max, grid->bounds.x2_max);
  } else {
    if (data) {
      for (Eigen::Index i = 0; i < data->features.rows(); ++i) extend(data->features(i, 0), data->features(i, 1));
    }
    if (syn) {
      for (const auto& b : syn->step_batches) {
        for (Eigen::Index i = 0; i < b.features.rows(); ++i) extend(b.features(i, 0), b.features(i, 1));
      }
    }
  }
  if (!(f.x_min < f.x_max)) f = {-1, 1, -1, 1};

  std::ostringstream out;
  out.precision(5);
  header(out, title);
  if (grid && grid->resolution >= 2) {
    const double cw = (kWidth - 2 * kMargin) / (grid->resolution - 1);
    const double ch = (kHeight - 2 * kMargin) / (grid->resolution - 1);
    for (const auto& p : grid->points) {
      out << "<rect x=\"" << f.sx(p.x1) - cw / 2 << "\" y=\"" << f.sy(p.x2) - ch / 2 << "\" width=\"" << cw
          << "\" height=\"" << ch << "\" fill=\"" << kClassColor[p.predicted == 1] << "\" fill-opacity=\""
          << 0.08 + 0.2 * std::abs(p.p1 - 0.5) << "\"/>\n";
    }
  }
  if (data) {
    for (Eigen::Index i = 0; i < data->features.rows(); ++i) {
      out << "<circle cx=\"" << f.sx(data->features(i, 0)) << "\" cy=\"" << f.sy(data->features(i, 1))
          << "\" r=\"1.8\" fill=\"" << kClassColor[data->labels[static_cast<std::size_t>(i)] == 1]
          << "\" fill-opacity=\"0.45\"/>\n";
    }
  }
  if (syn) {
    for (const auto& b : syn->step_batches) {
      for (Eigen::Index i = 0; i < b.features.rows(); ++i) {
        const double x = f.sx(b.features(i, 0));
        const double y = f.sy(b.features(i, 1));
        out << "<rect x=\"" << x - 3 << "\" y=\"" << y - 3 << "\" width=\"6\" height=\"6\" fill=\""
            << kClassColor[b.labels[static_cast<std::size_t>(i)] == 1] << "\" stroke=\"black\" stroke-width=\"0.6\"/>\n";
      }
    }
  }
  axes(out, f);
  out << "</svg>\n";
  return out.str();
}

std::string lines_svg(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  Frame f{0.0, 1.0, std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  for (const auto& s : series) {
    f.x_max = std::max(f.x_max, static_cast<double>(s.y.size() > 1 ? s.y.size() - 1 : 1));
    for (double y : s.y) {
      if (!std::isfinite(y)) continue;
      f.y_min = std::min(f.y_min, y);
      f.y_max = std::max(f.y_max, y);
    }
  }
  if (!(f.y_min < f.y_max)) {
    const double c = f.y_min == std::numeric_limits<double>::max() ? 0.0 : f.y_min;
    f.y_min = c - 1.0;
    f.y_max = c + 1.0;
  }

  std::ostringstream out;
  out.precision(5);
  header(out, title);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kSeriesColor[k % std::size(kSeriesColor)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < series[k].y.size(); ++i) {
      if (!std::isfinite(series[k].y[i])) continue;
      out << f.sx(static_cast<double>(i)) << ',' << f.sy(series[k].y[i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kWidth - kMargin - 4 << "\" y=\"" << kMargin + 14 + 13 * static_cast<double>(k)
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(series[k].name) << "</text>\n";
  }
  axes(out, f);
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"12\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 12 " << kHeight / 2
      << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace tabdistill
