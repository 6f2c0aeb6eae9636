// src/metrics.cc

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

#include "mcbeam/metrics.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mcbeam {

namespace {

constexpr double kGuard = 1e-8;

// 20 log10 of a guarded norm ratio; 0 dB when both norms vanish.
double guarded_ratio_db(double signal, double residual) {
  if (signal <= 0.0 && residual <= 0.0) return 0.0;
  double num = std::max(signal, kGuard * residual);
  double den = std::max(residual, kGuard * signal);
  return db20(num / den);
}

}  // namespace

double si_snr_db(const Vec &estimate, const Vec &reference) {
  if (estimate.size() != reference.size())
    throw DimensionError("si_snr_db: length mismatch");
  double ref_energy = reference.squaredNorm();
  if (ref_energy <= 0.0)
    throw ConfigError("si_snr_db: reference has zero energy");
  double alpha = estimate.dot(reference) / ref_energy;
  double signal = std::abs(alpha) * std::sqrt(ref_energy);
  double residual = (estimate - alpha * reference).norm();
  return guarded_ratio_db(signal, residual);
}

double snr_db(const Vec &estimate, const Vec &reference) {
  if (estimate.size() != reference.size())
    throw DimensionError("snr_db: length mismatch");
  double ref_energy = reference.squaredNorm();
  if (ref_energy <= 0.0) throw ConfigError("snr_db: reference has zero energy");
  double signal = std::sqrt(ref_energy);
  double residual = (estimate - reference).norm();
  return guarded_ratio_db(signal, residual);
}

double sdr_proxy_db(const Vec &estimate, const Vec &reference) {
  return si_snr_db(estimate, reference);
}

int angle_bucket(double angle_deg) {
  if (angle_deg < 0.0 || angle_deg > 180.0)
    throw ConfigError("angle_bucket: angle must lie in [0, 180] degrees");
  if (angle_deg < 15.0) return 0;
  if (angle_deg < 45.0) return 1;
  if (angle_deg < 90.0) return 2;
  return 3;
}

MetricReport aggregate_report(const std::vector<MetricRow> &rows) {
  MetricReport rep;
  rep.rows = rows;
  if (rows.empty()) return rep;
  std::array<double, 4> bucket_sum = {0.0, 0.0, 0.0, 0.0};
  for (const MetricRow &r : rows) {
    rep.mean_si_snr_db += r.si_snr_db;
    rep.mean_snr_db += r.snr_db;
    rep.mean_sdr_proxy_db += r.sdr_proxy_db;
    if (r.min_interferer_angle_deg >= 0.0) {
      int b = angle_bucket(r.min_interferer_angle_deg);
      bucket_sum[b] += r.si_snr_db;
      ++rep.bucket_count[b];
    }
  }
  double n = static_cast<double>(rows.size());
  rep.mean_si_snr_db /= n;
  rep.mean_snr_db /= n;
  rep.mean_sdr_proxy_db /= n;
  for (int b = 0; b < 4; ++b)
    if (rep.bucket_count[b] > 0)
      rep.bucket_mean_si_snr_db[b] = bucket_sum[b] / rep.bucket_count[b];
  return rep;
}

void write_report_csv(const MetricReport &report, const std::string &path) {
  std::ofstream os(path);
  if (!os) throw IoError("write_report_csv: cannot open " + path);
  os << "scene_id,mode,si_snr_db,snr_db,sdr_proxy_db,speaker_count,"
        "min_interferer_angle_deg\n";
  char buf[64];
  for (const MetricRow &r : report.rows) {
    os << r.scene_id << ',' << r.mode << ',';
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,", r.si_snr_db, r.snr_db,
                  r.sdr_proxy_db);
    os << buf << r.speaker_count << ',';
    std::snprintf(buf, sizeof(buf), "%.3f", r.min_interferer_angle_deg);
    os << buf << '\n';
  }
  if (!os) throw IoError("write_report_csv: write failed for " + path);
}

std::string render_report(const MetricReport &report) {
  std::ostringstream os;
  char buf[256];
  static const char *bucket_names[4] = {"0-15", "15-45", "45-90", "90-180"};
  for (const MetricRow &r : report.rows) {
    std::snprintf(buf, sizeof(buf),
                  "%-24s %-14s si_snr %8.3f dB  snr %8.3f dB  sdr %8.3f dB\n",
                  r.scene_id.c_str(), r.mode.c_str(), r.si_snr_db, r.snr_db,
                  r.sdr_proxy_db);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "mean over %zu rows: si_snr %8.3f dB  snr %8.3f dB  sdr %8.3f dB\n",
                report.rows.size(), report.mean_si_snr_db, report.mean_snr_db,
                report.mean_sdr_proxy_db);
  os << buf;
  for (int b = 0; b < 4; ++b) {
    if (report.bucket_count[b] == 0) continue;
    std::snprintf(buf, sizeof(buf), "angle %-7s deg: %3d rows, mean si_snr %8.3f dB\n",
                  bucket_names[b], report.bucket_count[b],
                  report.bucket_mean_si_snr_db[b]);
    os << buf;
  }
  return os.str();
}

}  // namespace mcbeam
