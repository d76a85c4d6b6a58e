// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#include "fuda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fuda::metrics {

namespace {

void require_same_shape(const LabelMask& a, const LabelMask& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": prediction and truth shapes differ");
}

// Largest nearest-neighbour distance from any point of `from` to `to`.
double directed(const std::vector<std::pair<int, int>>& from,
                const std::vector<std::pair<int, int>>& to, const Spacing& sp) {
  double worst = 0.0;
  for (const auto& [r0, c0] : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [r1, c1] : to) {
      const double dy = (r0 - r1) * sp.row_mm;
      const double dx = (c0 - c1) * sp.col_mm;
      best = std::min(best, dy * dy + dx * dx);
      if (best == 0.0) break;
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace

double dice(const LabelMask& pred, const LabelMask& truth, int cls) {
  require_same_shape(pred, truth, "dice");
  std::size_t p = 0, t = 0, both = 0;
  const auto pv = pred.values(), tv = truth.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const bool in_p = pv[i] == cls, in_t = tv[i] == cls;
    p += in_p;
    t += in_t;
    both += in_p && in_t;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMask& mask, int cls) {
  std::vector<std::pair<int, int>> out;
  auto outside = [&](int r, int c) { return !mask.contains(r, c) || mask(r, c) != cls; };
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      if (mask(r, c) == cls &&
          (outside(r - 1, c) || outside(r + 1, c) || outside(r, c - 1) || outside(r, c + 1)))
        out.emplace_back(r, c);
  return out;
}

double hausdorff(const LabelMask& pred, const LabelMask& truth, int cls,
                 const Spacing& spacing) {
  require_same_shape(pred, truth, "hausdorff");
  if (!(spacing.row_mm > 0) || !(spacing.col_mm > 0))
    throw ConfigError("hausdorff: spacing must be positive");
  const auto bp = boundary_pixels(pred, cls);
  const auto bt = boundary_pixels(truth, cls);
  if (bp.empty() && bt.empty()) return 0.0;
  if (bp.empty() || bt.empty()) {
    const double h = pred.rows() * spacing.row_mm, w = pred.cols() * spacing.col_mm;
    return std::sqrt(h * h + w * w);
  }
  return std::max(directed(bp, bt, spacing), directed(bt, bp, spacing));
}

MetricsReport evaluate(const std::vector<PatientMasks>& patients, Aggregation aggregation) {
  MetricsReport report;
  if (patients.empty()) return report;
  for (const auto& pt : patients) {
    if (pt.pred.size() != pt.truth.size() || pt.pred.empty())
      throw DimensionError("evaluate: patient " + pt.patient_id +
                           " needs equal, non-zero prediction and truth slice counts");
    std::array<ClassScore, 3> scores{};
    for (std::size_t k = 0; k < kForegroundClasses.size(); ++k) {
      const int cls = kForegroundClasses[k];
      double dice_sum = 0.0, hd_sum = 0.0;
      std::size_t p = 0, t = 0, both = 0;
      for (std::size_t s = 0; s < pt.pred.size(); ++s) {
        dice_sum += dice(pt.pred[s], pt.truth[s], cls);
        hd_sum += hausdorff(pt.pred[s], pt.truth[s], cls, pt.spacing);
        const auto pv = pt.pred[s].values(), tv = pt.truth[s].values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          p += pv[i] == cls;
          t += tv[i] == cls;
          both += pv[i] == cls && tv[i] == cls;
        }
      }
      const double n = static_cast<double>(pt.pred.size());
      scores[k].dice = aggregation == Aggregation::kSliceMean
                           ? dice_sum / n
                           : (p + t == 0 ? 1.0 : 2.0 * static_cast<double>(both) /
                                                     static_cast<double>(p + t));
      scores[k].hd_mm = hd_sum / n;
    }
    report.per_patient[pt.patient_id] = scores;
    for (std::size_t k = 0; k < 3; ++k) {
      report.per_class[k].dice += scores[k].dice;
      report.per_class[k].hd_mm += scores[k].hd_mm;
    }
  }
  const double n = static_cast<double>(patients.size());
  for (auto& c : report.per_class) {
    c.dice /= n;
    c.hd_mm /= n;
  }
  report.avg.dice =
      (report.per_class[0].dice + report.per_class[1].dice + report.per_class[2].dice) / 3.0;
  report.avg.hd_mm =
      (report.per_class[0].hd_mm + report.per_class[1].hd_mm + report.per_class[2].hd_mm) / 3.0;
  return report;
}

std::string report_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "method";
  for (const char* metric : {"DC", "HD"}) {
    for (const char* name : kClassNames) os << ',' << metric << '_' << name;
    os << ',' << metric << "_AVG";
  }
  os << '\n';
  char buf[64];
  for (const auto& [name, r] : rows) {
    os << name;
    for (const auto& c : r.per_class) {
      std::snprintf(buf, sizeof(buf), ",%.6f", c.dice);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f", r.avg.dice);
    os << buf;
    for (const auto& c : r.per_class) {
      std::snprintf(buf, sizeof(buf), ",%.4f", c.hd_mm);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.4f", r.avg.hd_mm);
    os << buf << '\n';
  }
  return os.str();
}

std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s | %-31s | %-31s\n", "", "DC (higher is better)",
                "HD [mm] (lower is better)");
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-14s | %7s %7s %7s %7s | %7s %7s %7s %7s\n", "Method",
                "Myo", "LV", "RV", "AVG", "Myo", "LV", "RV", "AVG");
  os << buf << std::string(82, '-') << '\n';
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%-14s | %7.3f %7.3f %7.3f %7.3f | %7.2f %7.2f %7.2f %7.2f\n",
                  name.c_str(), r.per_class[0].dice, r.per_class[1].dice, r.per_class[2].dice,
                  r.avg.dice, r.per_class[0].hd_mm, r.per_class[1].hd_mm,
                  r.per_class[2].hd_mm, r.avg.hd_mm);
    os << buf;
  }
  return os.str();
}

}  // namespace fuda::metrics
