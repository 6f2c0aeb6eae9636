// include/mcbeam/metrics.h

// Copyright 2026  mcbeam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLENESS OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef MCBEAM_METRICS_H_
#define MCBEAM_METRICS_H_

#include <array>
#include <string>
#include <vector>

#include "mcbeam/common.h"

namespace mcbeam {

// Scale-invariant SNR in dB. The estimate is projected onto the reference
// (alpha = <e,r>/<r,r>); signal = |alpha r|, residual = |e - alpha r|. Both
// norms carry a 1e-8 relative guard, so the value saturates at +-160 dB; a
// zero-energy reference is a parameter error; zero signal and zero residual
// give 0 dB.
double si_snr_db(const Vec &estimate, const Vec &reference);

// Plain SNR in dB against the unscaled reference, same guard structure.
double snr_db(const Vec &estimate, const Vec &reference);

// SNR after least-squares projection onto the reference. This is NOT the
// BSS-eval SDR (no distortion filter); with a single projection coefficient
// it coincides with si_snr_db and is reported alongside the unprojected SNR
// so the scale/distortion split stays visible.
double sdr_proxy_db(const Vec &estimate, const Vec &reference);

// Bucket index for the closest-interferer angle, boundaries {15, 45, 90,
// 180}: [0,15) -> 0, [15,45) -> 1, [45,90) -> 2, [90,180] -> 3.
int angle_bucket(double angle_deg);

struct MetricRow {
  std::string scene_id;
  std::string mode;
  double si_snr_db = 0.0;
  double snr_db = 0.0;
  double sdr_proxy_db = 0.0;
  int speaker_count = 1;
  // Negative means no interferer; such rows skip the angle buckets.
  double min_interferer_angle_deg = -1.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_si_snr_db = 0.0;
  double mean_snr_db = 0.0;
  double mean_sdr_proxy_db = 0.0;
  std::array<int, 4> bucket_count = {0, 0, 0, 0};
  std::array<double, 4> bucket_mean_si_snr_db = {0.0, 0.0, 0.0, 0.0};
};

MetricReport aggregate_report(const std::vector<MetricRow> &rows);

// CSV with a fixed header:
// scene_id,mode,si_snr_db,snr_db,sdr_proxy_db,speaker_count,min_interferer_angle_deg
void write_report_csv(const MetricReport &report, const std::string &path);

// Human-readable summary: per-row lines, overall means, angle-bucket means.
std::string render_report(const MetricReport &report);

}  // namespace mcbeam

#endif  // MCBEAM_METRICS_H_
