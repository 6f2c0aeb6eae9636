// include/mcbeam/adl.h

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

#ifndef MCBEAM_ADL_H_
#define MCBEAM_ADL_H_

#include <string>
#include <utility>
#include <vector>

#include "mcbeam/common.h"
#include "mcbeam/estimators.h"
#include "mcbeam/gru.h"
#include "mcbeam/mvdr.h"
#include "mcbeam/signal.h"

namespace mcbeam {

// Network-estimated beamformer configuration. dim() is the weight-vector
// length per (t,f): channels for kMC, l1+l2 frames for kMF, their product
// for kMCMF. Both nets read packed covariances of size 2*dim^2; the inverse
// net emits 2*dim^2 reals, the vector net 2*dim.
struct AdlMvdrConfig {
  CovLayout mode = CovLayout::kMC;
  int channels = 2;
  int l1 = 1;  // current frame plus past frames in the stack
  int l2 = 0;  // future frames in the stack
  int reference_channel = 0;
  // cRF extents used by the estimator stage feeding this beamformer.
  int crf_j1 = 0, crf_j2 = 0, crf_k1 = 0, crf_k2 = 0;
  std::vector<int> inv_hidden = {64, 64};
  std::vector<int> v_hidden = {64, 32};

  int frames() const { return l1 + l2; }
  int dim() const;
  int input_size() const { return 2 * dim() * dim(); }
  int inv_output_size() const { return 2 * dim() * dim(); }
  int v_output_size() const { return 2 * dim(); }
  void validate() const;

  // Named presets: "mc-15ch" (15 channels, hidden 500/500 and 500/250),
  // "mf-l5" (5 causal frames, hidden 128/128 twice), "mcmf-9ch-3fr"
  // (9 channels x 3 frames, hidden 500/500 and 500/250).
  static AdlMvdrConfig preset(const std::string &name);
};

// Frame-level coefficient estimates: a vector and an inverse matrix per
// (t, f). Entries at frame t depend only on inputs at frames <= t.
struct CoefficientStream {
  std::vector<CMat> vhat;              // [f], dim x frames
  std::vector<std::vector<CMat>> inv;  // [f][t], dim x dim
  int bins() const { return static_cast<int>(vhat.size()); }
  int frames() const { return vhat.empty() ? 0 : static_cast<int>(vhat[0].cols()); }
  int dim() const { return vhat.empty() ? 0 : static_cast<int>(vhat[0].rows()); }
};

// Packing between complex covariances and real net features: [real of the
// column-major flattening; imaginary of the same].
Vec pack_covariance(const CMat &m);
Vec pack_vector(const CVec &v);
CMat unpack_matrix(const Vec &x, int dim);
CVec unpack_vector(const Vec &x);

// Runs one net over a materialized covariance stream, batching frequencies;
// hidden state is independent per frequency. Output size selects the shape:
// 2*dim reals per step -> vectors, 2*dim^2 -> matrices.
std::vector<CMat> gru_net_vector_stream(const GruNetParams &params,
                                        const CovarianceSequence &cov);
std::vector<std::vector<CMat>> gru_net_matrix_stream(const GruNetParams &params,
                                                     const CovarianceSequence &cov);

// Vector net reads the speech stream, inverse net the undesired stream.
CoefficientStream run_coefficient_nets(const GruNetParams &inv_net,
                                       const GruNetParams &v_net,
                                       const CovarianceSequence &speech_cov,
                                       const CovarianceSequence &undesired_cov);

// Frame-level weights h(t,f) = P v / (v^H P v). A denominator smaller than
// 1e-8 * |P v| * |v| marks the frame degenerate: its weights repeat the
// previous frame (zero at t = 0) and (f, t) is appended to *flagged.
BeamformerWeights adl_weights(const CoefficientStream &coeffs, CovLayout layout,
                              std::vector<std::pair<int, int>> *flagged = nullptr);

// End-to-end network-estimated separation. speech_est / undesired_est are
// component estimates (mask or filter already applied); the three
// spectrograms share channel count and shape. Per mode the weights apply to
// the stacked mixture: channels (kMC), stacked reference-channel frames
// (kMF), or channel-major frame stacks (kMCMF). Framewise covariances are
// normalized per frequency by the frame count. Streams frame by frame, so
// nothing quadratic in the sequence length is materialized.
MultiChannelSpectrogram adl_mvdr_separate(const MultiChannelSpectrogram &mixture,
                                          const MultiChannelSpectrogram &speech_est,
                                          const MultiChannelSpectrogram &undesired_est,
                                          const GruNetParams &inv_net,
                                          const GruNetParams &v_net,
                                          const AdlMvdrConfig &cfg);

// Stacks a spectrogram for the configured mode: kMC passes through, kMF
// stacks reference-channel frames, kMCMF stacks frames channel-major.
MultiChannelSpectrogram stack_for_mode(const MultiChannelSpectrogram &spec,
                                       const AdlMvdrConfig &cfg);

// Negative scale-invariant SNR (training objective form of the metric).
double si_snr_loss(const Vec &estimate, const Vec &reference);
double si_snr_loss(const TimeSignal &estimate, const TimeSignal &reference);

// Scalar loss plus analytic parameter gradients for the full chain
// nets -> weights -> beamformed spectrogram -> synthesis -> si_snr_loss.
// Degenerate frames propagate gradient through the fallback. DC and Nyquist
// imaginary parts are zeroed before synthesis, so the chain is exactly the
// production one for real spectra. Intended for toy scales (dim <= 3).
double adl_end_to_end_loss(const GruNetParams &inv_net, const GruNetParams &v_net,
                           const std::vector<Mat> &speech_inputs,
                           const std::vector<Mat> &undesired_inputs,
                           const MultiChannelSpectrogram &stacked_mix,
                           const Vec &reference, const StftConfig &cfg,
                           GruGradients *inv_grads, GruGradients *v_grads);

struct AdlFineTuneResult {
  GruNetParams inv_net;
  GruNetParams v_net;
  std::vector<double> loss_history;
};

// Gradient descent with momentum on adl_end_to_end_loss; inputs are the
// packed covariance sequences (one column per frequency).
AdlFineTuneResult adl_fine_tune(const GruNetParams &inv_net, const GruNetParams &v_net,
                                const std::vector<Mat> &speech_inputs,
                                const std::vector<Mat> &undesired_inputs,
                                const MultiChannelSpectrogram &stacked_mix,
                                const Vec &reference, const StftConfig &cfg,
                                const GruTrainConfig &train);

// Packed framewise-covariance inputs for the nets, one column per frequency
// bin: pack_covariance of stacked(t,f) outer products over the frame count.
std::vector<Mat> packed_covariance_inputs(const MultiChannelSpectrogram &stacked);

// Synthetic covariance-stream sampler for supervised operator training. Each
// stream draws a random unitary basis (first entry kept away from zero so
// the eigenvector gauge stays stable), an eigenvalue spread 1 +- g with
// g ~ U[gap_lo, gap_hi], then emits frames C^(1/2) (G G^H / K) C^(H/2) +
// diag_load I with fresh K-column standard complex Gaussian G per frame.
// Targets follow the exponentially smoothed running covariance: its loaded
// inverse and its gauge-fixed principal eigenvector.
struct SyntheticCovConfig {
  int dim = 2;
  int frames = 24;
  int k_snapshots = 256;
  double diag_load = 0.5;
  double gap_lo = 0.5;
  double gap_hi = 0.7;
  double forgetting = 0.9;
  double loading = 1e-5;
};

struct CovStreamSample {
  std::vector<CMat> phis;         // [t], dim x dim inputs
  std::vector<CMat> inv_targets;  // [t], loaded inverse of the running mean
  std::vector<CVec> vec_targets;  // [t], principal eigenvector, gauge-fixed
};

CovStreamSample make_synthetic_cov_stream(const SyntheticCovConfig &cfg, Rng *rng);

}  // namespace mcbeam

#endif  // MCBEAM_ADL_H_
