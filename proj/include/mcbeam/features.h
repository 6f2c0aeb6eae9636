// include/mcbeam/features.h

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

#ifndef MCBEAM_FEATURES_H_
#define MCBEAM_FEATURES_H_

#include <utility>
#include <vector>

#include "mcbeam/common.h"
#include "mcbeam/room.h"
#include "mcbeam/signal.h"

namespace mcbeam {

using ChannelPair = std::pair<int, int>;

// Default phase-difference pairs for the 15-element linear preset.
std::vector<ChannelPair> default_pairs();

struct FeaturePack {
  Mat lps;                       // T x F, reference channel
  std::vector<Mat> ipd;          // per pair, T x F, radians in (-pi, pi]
  Mat df;                        // T x F, in [-P, P]
  std::vector<ChannelPair> pair_list;
};

// log(|Y|^2 + eps), eps = 1e-12.
Mat compute_lps(const MultiChannelSpectrogram &spec, int channel);

// Per-pair phase difference angle(Y_a) - angle(Y_b), wrapped to (-pi, pi].
std::vector<Mat> compute_ipd(const MultiChannelSpectrogram &spec,
                             const std::vector<ChannelPair> &pairs);

// Target-dependent phase difference per pair at one frequency:
// 2 pi f_hz spacing cos(theta) / c.
Vec compute_tpd(double theta_deg, const ArrayGeometry &geometry,
                const std::vector<ChannelPair> &pairs, double f_hz);

// Directional feature sum_p cos(TPD_p - IPD_p), T x F.
Mat compute_df(const MultiChannelSpectrogram &spec, double theta_deg,
               const ArrayGeometry &geometry, const std::vector<ChannelPair> &pairs);

FeaturePack compute_features(const MultiChannelSpectrogram &spec, double theta_deg,
                             const ArrayGeometry &geometry,
                             const std::vector<ChannelPair> &pairs, int lps_channel);

double wrap_phase(double x);  // to (-pi, pi]

}  // namespace mcbeam

#endif  // MCBEAM_FEATURES_H_
