// Copyright (c) 2026 The singvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "singvc/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace singvc {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 320.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 32.0;
constexpr double kBottom = 40.0;

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void Header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
     << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" "
     << "font-size=\"13\">" << Escape(title) << "</text>\n";
}

// Frame axis along the bottom and a value axis on the left.
void Axes(std::ostringstream& os, long frames, double y_lo, double y_hi,
          const std::string& y_label) {
  const double x0 = kLeft, x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom, y1 = kTop;
  os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0
     << "\" height=\"" << y0 - y1 << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 - (y0 - y1) * i / 4.0;
    os << "<text x=\"" << fx << "\" y=\"" << y0 + 14
       << "\" text-anchor=\"middle\">" << Num(frames * i / 4.0) << "</text>\n";
    os << "<text x=\"" << x0 - 4 << "\" y=\"" << fy + 4
       << "\" text-anchor=\"end\">" << Num(y_lo + (y_hi - y_lo) * i / 4.0)
       << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 6
     << "\" text-anchor=\"middle\">frame</text>\n";
  os << "<text x=\"14\" y=\"" << (y0 + y1) / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << (y0 + y1) / 2
     << ")\">" << Escape(y_label) << "</text>\n";
}

// Grey-to-blue ramp on [0, 1].
std::string Shade(double u) {
  u = std::clamp(u, 0.0, 1.0);
  const int r = static_cast<int>(255 * (1.0 - u));
  const int g = static_cast<int>(255 * (1.0 - 0.8 * u));
  const int b = static_cast<int>(255 * (1.0 - 0.3 * u));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

fs::path PrepareDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir);
  return fs::path(dir);
}

}  // namespace

std::string LinePlotSvg(const std::string& title, const std::string& y_label,
                        const std::vector<PlotSeries>& series) {
  long frames = 0;
  double lo = 1e300, hi = -1e300;
  for (const PlotSeries& s : series) {
    frames = std::max<long>(frames, static_cast<long>(s.values.size()));
    for (double v : s.values) {
      if (v <= s.gap_at_or_below || !std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (frames == 0) throw ValidationError("nothing to plot for " + title);
  if (lo > hi) lo = hi = 0.0;
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::ostringstream os;
  Header(os, title);
  Axes(os, frames, lo, hi, y_label);
  const double x0 = kLeft, x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom, y1 = kTop;
  const double dx = frames > 1 ? (x1 - x0) / (frames - 1) : 0.0;
  for (size_t k = 0; k < series.size(); ++k) {
    const PlotSeries& s = series[k];
    std::string points;
    auto flush = [&] {
      if (!points.empty()) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color
           << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
      }
      points.clear();
    };
    for (size_t t = 0; t < s.values.size(); ++t) {
      const double v = s.values[t];
      if (v <= s.gap_at_or_below || !std::isfinite(v)) {
        flush();
        continue;
      }
      const double px = x0 + dx * t;
      const double py = y0 - (y0 - y1) * (v - lo) / (hi - lo);
      points += Num(px) + "," + Num(py) + " ";
    }
    flush();
    os << "<text x=\"" << x1 - 4 << "\" y=\"" << y1 + 14 + 14 * k
       << "\" text-anchor=\"end\" fill=\"" << s.color << "\">"
       << Escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string HeatmapSvg(const std::string& title, const Matrix& values) {
  if (values.size() == 0) throw ValidationError("nothing to plot for " + title);
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  std::ostringstream os;
  Header(os, title);
  const double x0 = kLeft, x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom, y1 = kTop;
  const double cw = (x1 - x0) / values.rows();
  const double ch = (y0 - y1) / values.cols();
  for (long t = 0; t < values.rows(); ++t) {
    for (long b = 0; b < values.cols(); ++b) {
      os << "<rect x=\"" << Num(x0 + cw * t) << "\" y=\""
         << Num(y0 - ch * (b + 1)) << "\" width=\"" << Num(cw + 0.05)
         << "\" height=\"" << Num(ch + 0.05) << "\" fill=\""
         << Shade((values(t, b) - lo) / span) << "\"/>\n";
    }
  }
  Axes(os, values.rows(), 0.0, static_cast<double>(values.cols()), "bin");
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> PlotFeatureRecord(const FeatureRecord& record,
                                           const std::string& dir,
                                           const std::string& prefix) {
  const fs::path root = PrepareDir(dir);
  const std::string id = record.utterance_id;
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& svg) {
    const fs::path path = root / (prefix + "_" + name + ".svg");
    WriteFile(path, svg);
    written.push_back(path.string());
  };
  emit("mel", HeatmapSvg(id + " log-mel", record.mel.frames));
  PlotSeries f0{"f0", record.f0.values, "#d62728", 0.0};
  emit("f0", LinePlotSvg(id + " F0", "Hz", {f0}));
  emit("rmse", LinePlotSvg(id + " RMSE", "rms", {{"rmse", record.rmse.values}}));
  return written;
}

std::vector<std::string> PlotConversionDiagnostics(
    const std::string& diagnostics_path, const std::string& dir,
    const std::string& prefix) {
  std::ifstream in(diagnostics_path);
  if (!in) throw IoError("cannot read " + diagnostics_path);
  nlohmann::json j;
  std::vector<double> source, converted;
  std::string target;
  double nu = 1.0;
  try {
    j = nlohmann::json::parse(in);
    source = j.at("source_f0").get<std::vector<double>>();
    converted = j.at("converted_f0").get<std::vector<double>>();
    target = j.at("target_speaker").get<std::string>();
    nu = j.at("nu").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed diagnostics " + diagnostics_path + ": " +
                  e.what());
  }
  const fs::path root = PrepareDir(dir);
  const fs::path path = root / (prefix + "_f0_overlay.svg");
  WriteFile(path, LinePlotSvg("F0 to " + target + " (nu " + Num(nu) + ")", "Hz",
                              {{"source", source, "#7f7f7f", 0.0},
                               {"converted", converted, "#d62728", 0.0}}));
  return {path.string()};
}

}  // namespace singvc
