// src/features.cc

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

#include "mcbeam/features.h"

#include <cmath>

namespace mcbeam {

std::vector<ChannelPair> default_pairs() {
  return {{0, 14}, {1, 13}, {2, 11}, {4, 11}, {6, 8}};
}

double wrap_phase(double x) {
  x = std::fmod(x, 2.0 * kPi);
  if (x > kPi) x -= 2.0 * kPi;
  if (x <= -kPi) x += 2.0 * kPi;
  return x;
}

Mat compute_lps(const MultiChannelSpectrogram &spec, int channel) {
  if (channel < 0 || channel >= spec.channel_count())
    throw ConfigError("compute_lps: channel out of range");
  const CMat &ch = spec.channels[channel];
  return (ch.array().abs2() + 1e-12).log().matrix();
}

std::vector<Mat> compute_ipd(const MultiChannelSpectrogram &spec,
                             const std::vector<ChannelPair> &pairs) {
  const int T = spec.frame_count(), F = spec.bin_count();
  std::vector<Mat> out;
  out.reserve(pairs.size());
  for (const auto &[a, b] : pairs) {
    if (a < 0 || b < 0 || a >= spec.channel_count() || b >= spec.channel_count())
      throw ConfigError("compute_ipd: pair index out of range");
    Mat ipd(T, F);
    const CMat &ca = spec.channels[a], &cb = spec.channels[b];
    for (int t = 0; t < T; ++t)
      for (int f = 0; f < F; ++f)
        ipd(t, f) = wrap_phase(std::arg(ca(t, f)) - std::arg(cb(t, f)));
    out.push_back(std::move(ipd));
  }
  return out;
}

Vec compute_tpd(double theta_deg, const ArrayGeometry &geometry,
                const std::vector<ChannelPair> &pairs, double f_hz) {
  if (theta_deg < 0.0 || theta_deg > 180.0)
    throw ConfigError("compute_tpd: theta must lie in [0, 180] degrees");
  Vec tpd(static_cast<Eigen::Index>(pairs.size()));
  double cs = std::cos(theta_deg * kPi / 180.0);
  for (size_t p = 0; p < pairs.size(); ++p) {
    double spacing = geometry.pair_spacing(pairs[p].first, pairs[p].second);
    tpd[static_cast<Eigen::Index>(p)] = 2.0 * kPi * f_hz * spacing * cs / kSoundSpeed;
  }
  return tpd;
}

Mat compute_df(const MultiChannelSpectrogram &spec, double theta_deg,
               const ArrayGeometry &geometry, const std::vector<ChannelPair> &pairs) {
  if (theta_deg < 0.0 || theta_deg > 180.0)
    throw ConfigError("compute_df: theta must lie in [0, 180] degrees");
  const int T = spec.frame_count(), F = spec.bin_count();
  const double bin_hz = static_cast<double>(spec.cfg.sample_rate) / spec.cfg.fft_size;
  std::vector<Mat> ipd = compute_ipd(spec, pairs);
  Mat df = Mat::Zero(T, F);
  for (size_t p = 0; p < pairs.size(); ++p) {
    double spacing = geometry.pair_spacing(pairs[p].first, pairs[p].second);
    double cs = std::cos(theta_deg * kPi / 180.0);
    for (int f = 0; f < F; ++f) {
      double tpd = 2.0 * kPi * (f * bin_hz) * spacing * cs / kSoundSpeed;
      for (int t = 0; t < T; ++t) df(t, f) += std::cos(tpd - ipd[p](t, f));
    }
  }
  return df;
}

FeaturePack compute_features(const MultiChannelSpectrogram &spec, double theta_deg,
                             const ArrayGeometry &geometry,
                             const std::vector<ChannelPair> &pairs, int lps_channel) {
  FeaturePack pack;
  pack.pair_list = pairs;
  pack.lps = compute_lps(spec, lps_channel);
  pack.ipd = compute_ipd(spec, pairs);
  pack.df = compute_df(spec, theta_deg, geometry, pairs);
  return pack;
}

}  // namespace mcbeam
