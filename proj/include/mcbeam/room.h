// include/mcbeam/room.h

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

#ifndef MCBEAM_ROOM_H_
#define MCBEAM_ROOM_H_

#include <vector>

#include "mcbeam/common.h"
#include "mcbeam/signal.h"

namespace mcbeam {

// Microphone coordinates in the array's local frame, meters. The array axis
// is local +x; pair spacings for phase features are signed x differences.
struct ArrayGeometry {
  Mat mic_positions;  // M x 3
  int reference_channel = 0;

  int channels() const { return static_cast<int>(mic_positions.rows()); }

  // Signed along-axis spacing x_a - x_b in meters.
  double pair_spacing(int a, int b) const;

  // Uniform linear array on the x axis, centered on its middle element.
  static ArrayGeometry linear(int mics, double pitch_m);
  // 15 elements, 2 cm pitch, reference channel 7 (center).
  static ArrayGeometry linear15();
};

// Room, sources and mixing levels. Angles in degrees; orientation rotates the
// array's local +x axis about world z. snr_db = +inf disables the noise
// component entirely.
struct ArrayScene {
  Eigen::Vector3d room_dims{6.0, 5.0, 3.0};
  double rt60 = 0.3;
  std::vector<Eigen::Vector3d> source_positions;
  Eigen::Vector3d array_center{3.0, 2.5, 1.5};
  double orientation_deg = 0.0;
  int target_index = 0;
  double snr_db = std::numeric_limits<double>::infinity();
  double sir_db = 0.0;
  uint64_t seed = 0;

  int source_count() const { return static_cast<int>(source_positions.size()); }
  Mat mic_world_positions(const ArrayGeometry &geometry) const;  // M x 3
  void validate(const ArrayGeometry &geometry) const;
};

// One impulse-response matrix (mics x taps) per source.
struct RirSet {
  std::vector<Mat> rirs;
  int sample_rate = 16000;
};

// Image-method simulation with 8-tap Hann-windowed-sinc fractional delays,
// uniform wall reflection coefficient from rt60 (Eyring), direct-path
// amplitude 1/(4 pi d). max_order = -1 means unlimited (length-bounded).
RirSet simulate_rir(const ArrayScene &scene, const ArrayGeometry &geometry,
                    int sample_rate = 16000, int max_order = -1);

struct MixtureComponents {
  TimeSignal mixture;       // M x n, exact sum of the three parts
  TimeSignal target;        // reverberant target image at the array
  TimeSignal interference;  // summed non-target sources, SIR-scaled
  TimeSignal noise;         // SNR-scaled noise, zero when snr_db = +inf
};

// Convolves dry sources (mono each) with their RIRs, scales summed
// interference to scene.sir_db and noise to scene.snr_db, both measured
// against the reverberant target at the reference channel. Pass an empty
// noise signal to use the seeded white-Gaussian fallback.
MixtureComponents synthesize_mixture(const ArrayScene &scene, const ArrayGeometry &geometry,
                                     const std::vector<TimeSignal> &dry_sources,
                                     const TimeSignal &noise = TimeSignal{},
                                     const RirSet *precomputed_rirs = nullptr);

// Ground-truth azimuth per source: angle between the world-frame array axis
// and the source direction, in [0, 180] degrees.
Vec scene_doa(const ArrayScene &scene, const ArrayGeometry &geometry);

// Synthetic voiced-speech-like test source: drifting-pitch harmonic stack
// with amplitude modulation and a noise floor, peak-normalized.
TimeSignal make_test_source(Rng &rng, double seconds, int sample_rate = 16000);

// Seeded white Gaussian noise, independent per channel, unit RMS.
TimeSignal make_white_noise(Rng &rng, int channels, Eigen::Index length, int sample_rate = 16000);

}  // namespace mcbeam

#endif  // MCBEAM_ROOM_H_
