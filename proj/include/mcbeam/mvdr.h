// include/mcbeam/mvdr.h

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

#ifndef MCBEAM_MVDR_H_
#define MCBEAM_MVDR_H_

#include <vector>

#include "mcbeam/common.h"
#include "mcbeam/estimators.h"
#include "mcbeam/room.h"
#include "mcbeam/signal.h"

namespace mcbeam {

// Per-frequency weight matrices, one column per frame; a single column means
// chunk-level weights broadcast over all frames.
struct BeamformerWeights {
  std::vector<CMat> w;  // [f], each dim x frames
  CovLayout layout = CovLayout::kMC;
  int dim = 0;

  int bins() const { return static_cast<int>(w.size()); }
  int frames() const { return w.empty() ? 0 : static_cast<int>(w[0].cols()); }
  bool chunk() const { return frames() == 1; }
};

// Unit-norm steering vector per frequency (column f).
struct SteeringVector {
  CMat v;  // dim x bins
  int dim() const { return static_cast<int>(v.rows()); }
  int bins() const { return static_cast<int>(v.cols()); }
};

// Interframe-correlation vectors, one column per frame; the current frame
// sits at row current_index.
struct IfcVector {
  std::vector<CMat> g;  // [f], each L x frames
  int current_index = 0;
  int bins() const { return static_cast<int>(g.size()); }
  int frames() const { return g.empty() ? 0 : static_cast<int>(g[0].cols()); }
};

struct EigResult {
  CVec vec;       // unit norm, first nonzero component real positive
  double value = 0.0;
  bool converged = false;
};

// Power iteration with a Gershgorin shift (handles indefinite Hermitian
// input), deterministic start e1 + 1e-6 tie-break perturbation, tolerance
// 1e-10, at most 500 iterations. Non-convergence returns the last iterate
// with converged = false.
EigResult principal_eigenvector(const CMat &H);

// Inverse of H + delta I, delta = loading * Re(trace) / D, by Gaussian
// elimination with partial pivoting.
CMat regularized_inverse(const CMat &H, double loading = 1e-5);

// h(f) = P v / (v^H P v), P the loaded inverse of the noise covariance.
// Distortionless: h^H v = 1.
BeamformerWeights mvdr_steering(const CovarianceSequence &noise_cov,
                                const SteeringVector &steering,
                                double loading = 1e-5);

// h(f) = P Phi_xx u / trace(P Phi_xx), u the one-hot reference selector.
BeamformerWeights mvdr_reference_channel(const CovarianceSequence &noise_cov,
                                         const CovarianceSequence &speech_cov,
                                         int reference_channel,
                                         double loading = 1e-5);

// Multi-frame weights per (t, f): h = P gamma / (gamma^H P gamma).
BeamformerWeights mf_mvdr(const CovarianceSequence &undesired_cov,
                          const IfcVector &ifc, double loading = 1e-5);

// gamma(t,f) = Phi(t,f) e_cur / max(power, 1e-12); the expectation in the
// denominator is approximated by the stacked current-frame power
// Phi(t,f)[cur,cur].
IfcVector ifc_vector(const CovarianceSequence &mf_speech_cov, int current_index);

// Single-channel output: out(t,f) = w(:,t or 0)^H input(:,t,f).
MultiChannelSpectrogram apply_weights(const BeamformerWeights &weights,
                                      const MultiChannelSpectrogram &input);

// Far-field plane-wave steering vector for a linear array, gauge: element 0
// has zero phase. a_m = exp(j 2 pi f (x_m - x_0) cos(theta) / c).
CVec far_field_steering(const ArrayGeometry &geometry, double theta_deg, double f_hz);

// |h^H a(theta, f)|^2 in dB per grid angle, chunk weights or frame t of
// per-frame weights, at the frequency bin nearest f_hz.
Vec beam_pattern(const BeamformerWeights &weights, const ArrayGeometry &geometry,
                 double f_hz, int frame, const Vec &angles_deg,
                 const StftConfig &cfg);

}  // namespace mcbeam

#endif  // MCBEAM_MVDR_H_
