// src/estimators.cc

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

#include "mcbeam/estimators.h"

#include <cmath>

namespace mcbeam {

const char *to_string(CovLayout layout) {
  switch (layout) {
    case CovLayout::kMC: return "MC";
    case CovLayout::kMF: return "MF";
    case CovLayout::kMCMF: return "MCMF";
  }
  return "?";
}

const char *to_string(EstimatorSource source) {
  switch (source) {
    case EstimatorSource::kOracle: return "oracle";
    case EstimatorSource::kLoadedFilter: return "loaded-filter";
    case EstimatorSource::kPassthrough: return "passthrough";
  }
  return "?";
}

void ComplexRatioFilter::validate() const {
  if (j1 < 0 || j2 < 0 || k1 < 0 || k2 < 0)
    throw ConfigError("crf: extents must be nonnegative");
  if (static_cast<int>(taps.size()) != tap_count())
    throw DimensionError("crf: tap storage does not match extents");
  for (const CMat &m : taps) {
    if (m.rows() != taps[0].rows() || m.cols() != taps[0].cols())
      throw DimensionError("crf: inconsistent tap matrix shapes");
    if (!m.allFinite()) throw NumericError("crf: non-finite taps");
  }
}

namespace {

void check_aligned(const MultiChannelSpectrogram &a, const MultiChannelSpectrogram &b,
                   const char *what) {
  if (a.channel_count() != b.channel_count() || a.frame_count() != b.frame_count() ||
      a.bin_count() != b.bin_count())
    throw DimensionError(std::string(what) + ": spectrogram shapes differ");
}

}  // namespace

ComplexRatioFilter oracle_crm(const MultiChannelSpectrogram &mixture,
                              const MultiChannelSpectrogram &target,
                              double clamp, int reference_channel) {
  check_aligned(mixture, target, "oracle_crm");
  if (reference_channel < 0 || reference_channel >= mixture.channel_count())
    throw ConfigError("oracle_crm: reference channel out of range");
  const CMat &Y = mixture.channels[reference_channel];
  const CMat &X = target.channels[reference_channel];
  ComplexRatioFilter f;
  f.taps.resize(1);
  CMat mask(Y.rows(), Y.cols());
  for (Eigen::Index t = 0; t < Y.rows(); ++t) {
    for (Eigen::Index k = 0; k < Y.cols(); ++k) {
      cplx y = Y(t, k);
      cplx m = X(t, k) * std::conj(y) / (std::norm(y) + 1e-12);
      double mag = std::abs(m);
      if (mag > clamp) m *= clamp / mag;
      mask(t, k) = m;
    }
  }
  f.taps[0] = std::move(mask);
  return f;
}

ComplexRatioFilter oracle_crf(const MultiChannelSpectrogram &mixture,
                              const MultiChannelSpectrogram &target,
                              int j1, int j2, int k1, int k2,
                              double lambda, int reference_channel) {
  check_aligned(mixture, target, "oracle_crf");
  if (j1 < 0 || j2 < 0 || k1 < 0 || k2 < 0)
    throw ConfigError("oracle_crf: extents must be nonnegative");
  if (reference_channel < 0 || reference_channel >= mixture.channel_count())
    throw ConfigError("oracle_crf: reference channel out of range");
  const CMat &Y = mixture.channels[reference_channel];
  const CMat &X = target.channels[reference_channel];
  const int T = static_cast<int>(Y.rows()), F = static_cast<int>(Y.cols());

  ComplexRatioFilter filt;
  filt.j1 = j1; filt.j2 = j2; filt.k1 = k1; filt.k2 = k2;
  const int P = filt.tap_count();
  filt.taps.assign(P, CMat::Zero(T, F));

  CMat A(T, P);
  for (int f = 0; f < F; ++f) {
    for (int t = 0; t < T; ++t) {
      int p = 0;
      for (int dt = -j1; dt <= j2; ++dt) {
        for (int df = -k1; df <= k2; ++df, ++p) {
          int tt = t + dt, ff = f + df;
          A(t, p) = (tt >= 0 && tt < T && ff >= 0 && ff < F) ? Y(tt, ff) : cplx(0, 0);
        }
      }
    }
    CMat gram = A.adjoint() * A;
    gram.diagonal().array() += lambda;
    CVec rhs = A.adjoint() * X.col(f);
    CVec c = gram.ldlt().solve(rhs);
    for (int p = 0; p < P; ++p) filt.taps[p].col(f).setConstant(c[p]);
  }
  return filt;
}

MultiChannelSpectrogram apply_crf(const MultiChannelSpectrogram &spec,
                                  const ComplexRatioFilter &filt) {
  filt.validate();
  const int T = spec.frame_count(), F = spec.bin_count();
  if (filt.taps[0].rows() != T || filt.taps[0].cols() != F)
    throw DimensionError("apply_crf: filter shape does not match spectrogram");
  MultiChannelSpectrogram out;
  out.cfg = spec.cfg;
  out.channels.reserve(spec.channel_count());
  for (const CMat &Y : spec.channels) {
    if (filt.is_mask()) {
      out.channels.push_back(filt.taps[0].cwiseProduct(Y));
      continue;
    }
    CMat acc = CMat::Zero(T, F);
    for (int dt = -filt.j1; dt <= filt.j2; ++dt) {
      for (int df = -filt.k1; df <= filt.k2; ++df) {
        const CMat &c = filt.taps[filt.tap_index(dt, df)];
        int t0 = std::max(0, -dt), t1 = std::min(T, T - dt);
        int f0 = std::max(0, -df), f1 = std::min(F, F - df);
        if (t0 >= t1 || f0 >= f1) continue;
        acc.block(t0, f0, t1 - t0, f1 - f0) +=
            c.block(t0, f0, t1 - t0, f1 - f0)
                .cwiseProduct(Y.block(t0 + dt, f0 + df, t1 - t0, f1 - f0));
      }
    }
    out.channels.push_back(std::move(acc));
  }
  return out;
}

namespace {

// Shared by chunk/framewise: mask-power normalizer per frequency, or frame
// count when no mask given.
Vec mask_normalizer(const CMat &center_mask, int T, int F) {
  Vec norm(F);
  if (center_mask.size() == 0) {
    norm.setConstant(static_cast<double>(T));
    return norm;
  }
  if (center_mask.rows() != T || center_mask.cols() != F)
    throw DimensionError("covariance: mask shape does not match spectrogram");
  for (int f = 0; f < F; ++f) norm[f] = center_mask.col(f).squaredNorm();
  return norm;
}

constexpr double kDegenerateLoad = 1e-12;

}  // namespace

CovarianceSequence chunk_covariance(const MultiChannelSpectrogram &component,
                                    const CMat &center_mask, CovLayout layout) {
  const int D = component.channel_count(), T = component.frame_count(), F = component.bin_count();
  if (D == 0 || T == 0) throw DimensionError("chunk_covariance: empty spectrogram");
  CovarianceSequence seq;
  seq.layout = layout;
  seq.dim = D;
  seq.normalizer = mask_normalizer(center_mask, T, F);
  seq.degenerate.assign(F, 0);
  seq.mats.resize(F);
  CVec s(D);
  for (int f = 0; f < F; ++f) {
    CMat acc = CMat::Zero(D, D);
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) s[d] = component.channels[d](t, f);
      acc.noalias() += s * s.adjoint();
    }
    if (seq.normalizer[f] > 0.0) {
      acc /= seq.normalizer[f];
    } else {
      acc = kDegenerateLoad * CMat::Identity(D, D);
      seq.degenerate[f] = 1;
    }
    seq.mats[f].push_back(std::move(acc));
  }
  return seq;
}

CovarianceSequence framewise_covariance(const MultiChannelSpectrogram &component,
                                        const CMat &center_mask, CovLayout layout) {
  const int D = component.channel_count(), T = component.frame_count(), F = component.bin_count();
  if (D == 0 || T == 0) throw DimensionError("framewise_covariance: empty spectrogram");
  CovarianceSequence seq;
  seq.layout = layout;
  seq.dim = D;
  seq.normalizer = mask_normalizer(center_mask, T, F);
  seq.degenerate.assign(F, 0);
  seq.mats.resize(F);
  CVec s(D);
  for (int f = 0; f < F; ++f) {
    seq.mats[f].reserve(T);
    bool ok = seq.normalizer[f] > 0.0;
    if (!ok) seq.degenerate[f] = 1;
    for (int t = 0; t < T; ++t) {
      if (ok) {
        for (int d = 0; d < D; ++d) s[d] = component.channels[d](t, f);
        seq.mats[f].push_back((s * s.adjoint()) / seq.normalizer[f]);
      } else {
        seq.mats[f].push_back(kDegenerateLoad * CMat::Identity(D, D));
      }
    }
  }
  return seq;
}

CovarianceSequence recursive_covariance(const MultiChannelSpectrogram &component,
                                        const CMat &center_mask,
                                        int block_frames, int hop_frames,
                                        double forgetting, CovLayout layout) {
  const int D = component.channel_count(), T = component.frame_count(), F = component.bin_count();
  if (D == 0 || T == 0) throw DimensionError("recursive_covariance: empty spectrogram");
  if (block_frames < 1 || hop_frames < 1)
    throw ConfigError("recursive_covariance: block and hop must be >= 1");
  if (forgetting < 0.0 || forgetting >= 1.0)
    throw ConfigError("recursive_covariance: forgetting must lie in [0, 1)");

  // Block starts: 0, hop, 2 hop, ... while a full block fits; always at
  // least one block (short signals collapse to one truncated block).
  std::vector<int> starts;
  for (int s = 0; s + block_frames <= T; s += hop_frames) starts.push_back(s);
  if (starts.empty()) starts.push_back(0);
  const int B = static_cast<int>(starts.size());

  CovarianceSequence seq;
  seq.layout = layout;
  seq.dim = D;
  seq.normalizer = Vec::Zero(F);
  seq.degenerate.assign(F, 0);
  seq.mats.resize(F);
  CVec s(D);
  for (int f = 0; f < F; ++f) {
    std::vector<CMat> states;
    states.reserve(B);
    CMat state;
    for (int b = 0; b < B; ++b) {
      int lo = starts[b], hi = std::min(T, starts[b] + block_frames);
      CMat acc = CMat::Zero(D, D);
      double norm = 0.0;
      for (int t = lo; t < hi; ++t) {
        for (int d = 0; d < D; ++d) s[d] = component.channels[d](t, f);
        acc.noalias() += s * s.adjoint();
        norm += (center_mask.size() == 0) ? 1.0 : std::norm(center_mask(t, f));
      }
      if (norm > 0.0) {
        acc /= norm;
      } else {
        acc = kDegenerateLoad * CMat::Identity(D, D);
        seq.degenerate[f] = 1;
      }
      state = (b == 0) ? acc : CMat(forgetting * state + (1.0 - forgetting) * acc);
      states.push_back(state);
      if (b == B - 1) seq.normalizer[f] = norm;
    }
    // Frame t holds the state of the most recent completed block.
    seq.mats[f].reserve(T);
    int b = 0;
    for (int t = 0; t < T; ++t) {
      while (b + 1 < B && starts[b + 1] + block_frames - 1 <= t) ++b;
      seq.mats[f].push_back(states[b]);
    }
  }
  return seq;
}

MultiChannelSpectrogram stack_multiframe(const MultiChannelSpectrogram &spec, int l1, int l2) {
  if (spec.channel_count() != 1)
    throw DimensionError("stack_multiframe: expects a single-channel spectrogram");
  if (l1 < 1 || l2 < 0) throw ConfigError("stack_multiframe: need l1 >= 1, l2 >= 0");
  const CMat &Y = spec.channels[0];
  const int T = static_cast<int>(Y.rows()), F = static_cast<int>(Y.cols());
  const int L = l1 + l2;
  MultiChannelSpectrogram out;
  out.cfg = spec.cfg;
  out.channels.assign(L, CMat::Zero(T, F));
  for (int d = 0; d < L; ++d) {
    int off = d - (l1 - 1);  // frame offset for stack slot d
    for (int t = 0; t < T; ++t) {
      int tt = t + off;
      if (tt >= 0 && tt < T) out.channels[d].row(t) = Y.row(tt);
    }
  }
  return out;
}

MultiChannelSpectrogram stack_mcmf(const MultiChannelSpectrogram &spec, int l1, int l2) {
  if (spec.channel_count() < 1) throw DimensionError("stack_mcmf: empty spectrogram");
  if (l1 < 1 || l2 < 0) throw ConfigError("stack_mcmf: need l1 >= 1, l2 >= 0");
  const int M = spec.channel_count();
  const int T = spec.frame_count(), F = spec.bin_count();
  const int L = l1 + l2;
  MultiChannelSpectrogram out;
  out.cfg = spec.cfg;
  out.channels.assign(static_cast<size_t>(M) * L, CMat::Zero(T, F));
  for (int d = 0; d < L; ++d) {
    int off = d - (l1 - 1);
    for (int m = 0; m < M; ++m) {
      CMat &dst = out.channels[static_cast<size_t>(d) * M + m];
      for (int t = 0; t < T; ++t) {
        int tt = t + off;
        if (tt >= 0 && tt < T) dst.row(t) = spec.channels[m].row(tt);
      }
    }
  }
  return out;
}

MultiChannelSpectrogram subtract(const MultiChannelSpectrogram &a,
                                 const MultiChannelSpectrogram &b) {
  check_aligned(a, b, "subtract");
  MultiChannelSpectrogram out;
  out.cfg = a.cfg;
  out.channels.reserve(a.channel_count());
  for (int m = 0; m < a.channel_count(); ++m)
    out.channels.push_back(a.channels[m] - b.channels[m]);
  return out;
}

}  // namespace mcbeam
