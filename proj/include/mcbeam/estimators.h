// include/mcbeam/estimators.h

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

#ifndef MCBEAM_ESTIMATORS_H_
#define MCBEAM_ESTIMATORS_H_

#include <vector>

#include "mcbeam/common.h"
#include "mcbeam/signal.h"

namespace mcbeam {

enum class CovLayout { kMC, kMF, kMCMF };
enum class EstimatorSource { kOracle, kLoadedFilter, kPassthrough };

const char *to_string(CovLayout layout);
const char *to_string(EstimatorSource source);

// Complex ratio filter over a (time, frequency) tap neighborhood.
// Tap (dt, df) with dt in [-j1, j2], df in [-k1, k2]; a mask is the
// (0,0,0,0)-extent special case. taps[tap_index(dt,df)] holds the complex
// gain per (t, f).
struct ComplexRatioFilter {
  int j1 = 0, j2 = 0, k1 = 0, k2 = 0;
  std::vector<CMat> taps;

  int time_taps() const { return j1 + j2 + 1; }
  int freq_taps() const { return k1 + k2 + 1; }
  int tap_count() const { return time_taps() * freq_taps(); }
  int tap_index(int dt, int df) const { return (dt + j1) * freq_taps() + (df + k1); }
  bool is_mask() const { return j1 == 0 && j2 == 0 && k1 == 0 && k2 == 0; }
  const CMat &center() const { return taps[tap_index(0, 0)]; }
  void validate() const;
};

// Per-frequency covariance matrices; frames() == 1 means one chunk-level
// matrix per frequency. normalizer holds the mask-power denominator used,
// degenerate flags frequencies whose normalizer vanished.
struct CovarianceSequence {
  std::vector<std::vector<CMat>> mats;  // [f][t], each dim x dim
  CovLayout layout = CovLayout::kMC;
  int dim = 0;
  Vec normalizer;
  std::vector<uint8_t> degenerate;

  int bins() const { return static_cast<int>(mats.size()); }
  int frames() const { return mats.empty() ? 0 : static_cast<int>(mats[0].size()); }
};

// Mask X/Y at the reference channel with epsilon-regularized division and a
// magnitude clamp (default 10).
ComplexRatioFilter oracle_crm(const MultiChannelSpectrogram &mixture,
                              const MultiChannelSpectrogram &target,
                              double clamp = 10.0, int reference_channel = 0);

// Ridge least-squares filter taps per frequency bin mapping the mixture tap
// neighborhood at the reference channel onto the target (lambda = 1e-6);
// the fitted taps are constant over t.
ComplexRatioFilter oracle_crf(const MultiChannelSpectrogram &mixture,
                              const MultiChannelSpectrogram &target,
                              int j1, int j2, int k1, int k2,
                              double lambda = 1e-6, int reference_channel = 0);

// X_hat(t,f) = sum_{dt,df} taps(t,f,dt,df) Y(t+dt, f+df), zero padding at
// edges, the same filter applied to every channel.
MultiChannelSpectrogram apply_crf(const MultiChannelSpectrogram &spec,
                                  const ComplexRatioFilter &filt);

// Chunk covariance per frequency: sum_t s s^H / sum_t |mask|^2. An empty
// mask (0 x 0) divides by the frame count instead. Zero normalizers produce
// an epsilon-scaled identity and set the degenerate flag.
CovarianceSequence chunk_covariance(const MultiChannelSpectrogram &component,
                                    const CMat &center_mask,
                                    CovLayout layout = CovLayout::kMC);

// Frame-wise outer products sharing the chunk-level normalizer.
CovarianceSequence framewise_covariance(const MultiChannelSpectrogram &component,
                                        const CMat &center_mask,
                                        CovLayout layout = CovLayout::kMC);

// Mini-block recursion: per-block chunk covariances blended as
// state = beta * state + (1 - beta) * block, state initialized with the
// first block. Output is frame-aligned and block-constant: each frame holds
// the state of the most recent completed block (the first block's state
// before that).
CovarianceSequence recursive_covariance(const MultiChannelSpectrogram &component,
                                        const CMat &center_mask,
                                        int block_frames = 30, int hop_frames = 10,
                                        double forgetting = 0.9,
                                        CovLayout layout = CovLayout::kMC);

// Frame stacking for the multi-frame paths. Output channel d holds frame
// t - l1 + 1 + d; the current frame sits at index l1 - 1; edges zero-padded.
MultiChannelSpectrogram stack_multiframe(const MultiChannelSpectrogram &spec_single_channel,
                                         int l1, int l2);

// Channel-major within frame: output index d = frame_block * M + channel.
MultiChannelSpectrogram stack_mcmf(const MultiChannelSpectrogram &spec_multichannel,
                                   int l1, int l2);

// Elementwise difference, used for the undesired component stacked(Y) -
// stacked(X_hat).
MultiChannelSpectrogram subtract(const MultiChannelSpectrogram &a,
                                 const MultiChannelSpectrogram &b);

}  // namespace mcbeam

#endif  // MCBEAM_ESTIMATORS_H_
