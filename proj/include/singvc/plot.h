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

// Static SVG figures for inspecting features and conversions.

#ifndef SINGVC_PLOT_H_
#define SINGVC_PLOT_H_

#include <string>
#include <vector>

#include "singvc/common.h"
#include "singvc/corpus.h"

namespace singvc {

struct PlotSeries {
  std::string label;
  std::vector<double> values;
  std::string color = "#1f77b4";
  // Values at or below this are drawn as gaps (unvoiced F0 frames).
  double gap_at_or_below = -1e300;
};

// Frame-indexed line chart. Throws ValidationError when every series is
// empty.
std::string LinePlotSvg(const std::string& title, const std::string& y_label,
                        const std::vector<PlotSeries>& series);

// T x bins matrix drawn with time on x and bin 0 at the bottom.
std::string HeatmapSvg(const std::string& title, const Matrix& values);

// Writes `<dir>/<prefix>_mel.svg`, `_f0.svg` and `_rmse.svg`; returns the
// paths written.
std::vector<std::string> PlotFeatureRecord(const FeatureRecord& record,
                                           const std::string& dir,
                                           const std::string& prefix);

// Reads a conversion diagnostics JSON file and writes
// `<dir>/<prefix>_f0_overlay.svg` with the source and converted contours.
std::vector<std::string> PlotConversionDiagnostics(
    const std::string& diagnostics_path, const std::string& dir,
    const std::string& prefix);

}  // namespace singvc

#endif  // SINGVC_PLOT_H_
