// src/adl.cc

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

#include "mcbeam/adl.h"

#include <cmath>

#include "mcbeam/metrics.h"

namespace mcbeam {

namespace {

constexpr double kDenomGuard = 1e-8;

bool denominator_degenerate(const cplx &den, double num_norm, double v_norm) {
  return std::abs(den) < kDenomGuard * num_norm * v_norm || num_norm == 0.0 ||
         v_norm == 0.0;
}

}  // namespace

int AdlMvdrConfig::dim() const {
  switch (mode) {
    case CovLayout::kMC:
      return channels;
    case CovLayout::kMF:
      return l1 + l2;
    case CovLayout::kMCMF:
      return channels * (l1 + l2);
  }
  throw ConfigError("AdlMvdrConfig: unknown mode");
}

void AdlMvdrConfig::validate() const {
  if (channels <= 0) throw ConfigError("AdlMvdrConfig: channels must be positive");
  if (l1 <= 0 || l2 < 0)
    throw ConfigError("AdlMvdrConfig: need l1 >= 1 (current frame) and l2 >= 0");
  if (reference_channel < 0 || reference_channel >= channels)
    throw ConfigError("AdlMvdrConfig: reference channel out of range");
  if (crf_j1 < 0 || crf_j2 < 0 || crf_k1 < 0 || crf_k2 < 0)
    throw ConfigError("AdlMvdrConfig: filter extents must be non-negative");
  if (inv_hidden.empty() || v_hidden.empty())
    throw ConfigError("AdlMvdrConfig: hidden sizes must be nonempty");
  for (int h : inv_hidden)
    if (h <= 0) throw ConfigError("AdlMvdrConfig: hidden sizes must be positive");
  for (int h : v_hidden)
    if (h <= 0) throw ConfigError("AdlMvdrConfig: hidden sizes must be positive");
}

AdlMvdrConfig AdlMvdrConfig::preset(const std::string &name) {
  AdlMvdrConfig cfg;
  if (name == "mc-15ch") {
    cfg.mode = CovLayout::kMC;
    cfg.channels = 15;
    cfg.l1 = 1;
    cfg.l2 = 0;
    cfg.reference_channel = 7;
    cfg.inv_hidden = {500, 500};
    cfg.v_hidden = {500, 250};
  } else if (name == "mf-l5") {
    cfg.mode = CovLayout::kMF;
    cfg.channels = 1;
    cfg.l1 = 3;
    cfg.l2 = 2;
    cfg.reference_channel = 0;
    cfg.inv_hidden = {128, 128};
    cfg.v_hidden = {128, 128};
  } else if (name == "mcmf-9ch-3fr") {
    cfg.mode = CovLayout::kMCMF;
    cfg.channels = 9;
    cfg.l1 = 2;
    cfg.l2 = 1;
    cfg.reference_channel = 4;
    cfg.inv_hidden = {500, 500};
    cfg.v_hidden = {500, 250};
  } else {
    throw ConfigError("AdlMvdrConfig: unknown preset " + name);
  }
  cfg.validate();
  return cfg;
}

Vec pack_covariance(const CMat &m) {
  const int d = static_cast<int>(m.rows());
  if (m.cols() != d) throw DimensionError("pack_covariance: square matrix required");
  Vec out(2 * d * d);
  int idx = 0;
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r, ++idx) {
      out(idx) = m(r, c).real();
      out(idx + d * d) = m(r, c).imag();
    }
  return out;
}

Vec pack_vector(const CVec &v) {
  const int d = static_cast<int>(v.size());
  Vec out(2 * d);
  for (int i = 0; i < d; ++i) {
    out(i) = v(i).real();
    out(i + d) = v(i).imag();
  }
  return out;
}

CMat unpack_matrix(const Vec &x, int dim) {
  if (x.size() != 2 * dim * dim)
    throw DimensionError("unpack_matrix: packed size mismatch");
  CMat m(dim, dim);
  int idx = 0;
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r, ++idx)
      m(r, c) = cplx(x(idx), x(idx + dim * dim));
  return m;
}

CVec unpack_vector(const Vec &x) {
  if (x.size() % 2 != 0) throw DimensionError("unpack_vector: odd packed size");
  const int d = static_cast<int>(x.size()) / 2;
  CVec v(d);
  for (int i = 0; i < d; ++i) v(i) = cplx(x(i), x(i + d));
  return v;
}

namespace {

// Packed inputs for a materialized covariance stream: [t], 2*D^2 x F.
std::vector<Mat> pack_stream(const CovarianceSequence &cov) {
  const int F = cov.bins();
  const int T = cov.frames();
  const int D = cov.dim;
  std::vector<Mat> inputs(T, Mat(2 * D * D, F));
  for (int f = 0; f < F; ++f)
    for (int t = 0; t < T; ++t)
      inputs[t].col(f) = pack_covariance(cov.mats[f][t]);
  return inputs;
}

}  // namespace

std::vector<CMat> gru_net_vector_stream(const GruNetParams &params,
                                        const CovarianceSequence &cov) {
  const int D = cov.dim;
  if (params.input_size() != 2 * D * D)
    throw ConfigError("gru_net_vector_stream: net input does not match covariance dim");
  if (params.output_size() != 2 * D)
    throw ConfigError("gru_net_vector_stream: net output is not a packed vector");
  std::vector<Mat> outputs = gru_net_forward(params, pack_stream(cov));
  const int F = cov.bins();
  const int T = cov.frames();
  std::vector<CMat> vhat(F, CMat(D, T));
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) vhat[f].col(t) = unpack_vector(outputs[t].col(f));
  return vhat;
}

std::vector<std::vector<CMat>> gru_net_matrix_stream(const GruNetParams &params,
                                                     const CovarianceSequence &cov) {
  const int D = cov.dim;
  if (params.input_size() != 2 * D * D)
    throw ConfigError("gru_net_matrix_stream: net input does not match covariance dim");
  if (params.output_size() != 2 * D * D)
    throw ConfigError("gru_net_matrix_stream: net output is not a packed matrix");
  std::vector<Mat> outputs = gru_net_forward(params, pack_stream(cov));
  const int F = cov.bins();
  const int T = cov.frames();
  std::vector<std::vector<CMat>> inv(F, std::vector<CMat>(T));
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) inv[f][t] = unpack_matrix(outputs[t].col(f), D);
  return inv;
}

CoefficientStream run_coefficient_nets(const GruNetParams &inv_net,
                                       const GruNetParams &v_net,
                                       const CovarianceSequence &speech_cov,
                                       const CovarianceSequence &undesired_cov) {
  if (speech_cov.bins() != undesired_cov.bins() ||
      speech_cov.frames() != undesired_cov.frames() ||
      speech_cov.dim != undesired_cov.dim)
    throw DimensionError("run_coefficient_nets: covariance stream shape mismatch");
  CoefficientStream out;
  out.vhat = gru_net_vector_stream(v_net, speech_cov);
  out.inv = gru_net_matrix_stream(inv_net, undesired_cov);
  return out;
}

BeamformerWeights adl_weights(const CoefficientStream &coeffs, CovLayout layout,
                              std::vector<std::pair<int, int>> *flagged) {
  const int F = coeffs.bins();
  const int T = coeffs.frames();
  const int D = coeffs.dim();
  if (F == 0 || T == 0) throw DimensionError("adl_weights: empty stream");
  if (static_cast<int>(coeffs.inv.size()) != F ||
      static_cast<int>(coeffs.inv[0].size()) != T || coeffs.inv[0][0].rows() != D)
    throw DimensionError("adl_weights: vector/matrix stream mismatch");

  BeamformerWeights out;
  out.layout = layout;
  out.dim = D;
  out.w.resize(F);
  for (int f = 0; f < F; ++f) {
    out.w[f].resize(D, T);
    CVec prev = CVec::Zero(D);
    for (int t = 0; t < T; ++t) {
      CVec v = coeffs.vhat[f].col(t);
      CVec num = coeffs.inv[f][t] * v;
      cplx den = (v.adjoint() * num)(0, 0);
      if (denominator_degenerate(den, num.norm(), v.norm())) {
        out.w[f].col(t) = prev;
        if (flagged) flagged->emplace_back(f, t);
      } else {
        out.w[f].col(t) = num / den;
        prev = out.w[f].col(t);
      }
    }
  }
  return out;
}

MultiChannelSpectrogram stack_for_mode(const MultiChannelSpectrogram &spec,
                                       const AdlMvdrConfig &cfg) {
  const int M = static_cast<int>(spec.channels.size());
  switch (cfg.mode) {
    case CovLayout::kMC: {
      if (M != cfg.channels)
        throw DimensionError("stack_for_mode: channel count does not match config");
      return spec;
    }
    case CovLayout::kMF: {
      if (cfg.reference_channel >= M)
        throw ConfigError("stack_for_mode: reference channel out of range");
      MultiChannelSpectrogram ref;
      ref.cfg = spec.cfg;
      ref.channels = {spec.channels[cfg.reference_channel]};
      return stack_multiframe(ref, cfg.l1, cfg.l2);
    }
    case CovLayout::kMCMF: {
      if (M != cfg.channels)
        throw DimensionError("stack_for_mode: channel count does not match config");
      return stack_mcmf(spec, cfg.l1, cfg.l2);
    }
  }
  throw ConfigError("stack_for_mode: unknown mode");
}

std::vector<Mat> packed_covariance_inputs(const MultiChannelSpectrogram &stacked) {
  const int D = static_cast<int>(stacked.channels.size());
  if (D == 0) throw DimensionError("packed_covariance_inputs: empty spectrogram");
  const int T = stacked.frame_count();
  const int F = stacked.bin_count();
  std::vector<Mat> inputs(T, Mat(2 * D * D, F));
  CVec s(D);
  CMat outer(D, D);
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < F; ++f) {
      for (int d = 0; d < D; ++d) s(d) = stacked.channels[d](t, f);
      outer = (s * s.adjoint()) / static_cast<double>(T);
      inputs[t].col(f) = pack_covariance(outer);
    }
  }
  return inputs;
}

MultiChannelSpectrogram adl_mvdr_separate(const MultiChannelSpectrogram &mixture,
                                          const MultiChannelSpectrogram &speech_est,
                                          const MultiChannelSpectrogram &undesired_est,
                                          const GruNetParams &inv_net,
                                          const GruNetParams &v_net,
                                          const AdlMvdrConfig &cfg) {
  cfg.validate();
  if (mixture.channels.size() != speech_est.channels.size() ||
      mixture.channels.size() != undesired_est.channels.size())
    throw DimensionError("adl_mvdr_separate: component channel mismatch");

  MultiChannelSpectrogram mix_st = stack_for_mode(mixture, cfg);
  MultiChannelSpectrogram sp_st = stack_for_mode(speech_est, cfg);
  MultiChannelSpectrogram un_st = stack_for_mode(undesired_est, cfg);
  const int D = cfg.dim();
  const int T = mix_st.frame_count();
  const int F = mix_st.bin_count();
  if (inv_net.input_size() != 2 * D * D || inv_net.output_size() != 2 * D * D)
    throw ConfigError("adl_mvdr_separate: inverse net shape does not match config");
  if (v_net.input_size() != 2 * D * D || v_net.output_size() != 2 * D)
    throw ConfigError("adl_mvdr_separate: vector net shape does not match config");

  GruState inv_state = make_gru_state(inv_net, F);
  GruState v_state = make_gru_state(v_net, F);

  MultiChannelSpectrogram out;
  out.cfg = mixture.cfg;
  out.channels.assign(1, CMat::Zero(T, F));

  // Streamed frame by frame: framewise covariances, one net step per net,
  // weights with previous-frame fallback, beamformed output.
  Mat sp_in(2 * D * D, F), un_in(2 * D * D, F);
  CMat prev = CMat::Zero(D, F);
  CVec s(D), y(D);
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < F; ++f) {
      for (int d = 0; d < D; ++d) s(d) = sp_st.channels[d](t, f);
      CMat outer = (s * s.adjoint()) / static_cast<double>(T);
      sp_in.col(f) = pack_covariance(outer);
      for (int d = 0; d < D; ++d) s(d) = un_st.channels[d](t, f);
      outer = (s * s.adjoint()) / static_cast<double>(T);
      un_in.col(f) = pack_covariance(outer);
    }
    Mat inv_out = gru_net_step(inv_net, un_in, &inv_state);
    Mat v_out = gru_net_step(v_net, sp_in, &v_state);
    for (int f = 0; f < F; ++f) {
      CMat P = unpack_matrix(inv_out.col(f), D);
      CVec v = unpack_vector(v_out.col(f));
      CVec num = P * v;
      cplx den = (v.adjoint() * num)(0, 0);
      CVec h;
      if (denominator_degenerate(den, num.norm(), v.norm())) {
        h = prev.col(f);
      } else {
        h = num / den;
        prev.col(f) = h;
      }
      for (int d = 0; d < D; ++d) y(d) = mix_st.channels[d](t, f);
      out.channels[0](t, f) = (h.adjoint() * y)(0, 0);
    }
  }
  return out;
}

double si_snr_loss(const Vec &estimate, const Vec &reference) {
  return -si_snr_db(estimate, reference);
}

double si_snr_loss(const TimeSignal &estimate, const TimeSignal &reference) {
  if (estimate.samples.rows() < 1 || reference.samples.rows() < 1)
    throw DimensionError("si_snr_loss: empty signal");
  Vec e = estimate.samples.row(0).transpose();
  Vec r = reference.samples.row(0).transpose();
  return si_snr_loss(e, r);
}

namespace {

// Gradient of -si_snr_db with respect to the estimate; zero in the guarded
// (capped) regions where the metric is flat.
Vec si_snr_loss_grad(const Vec &estimate, const Vec &reference) {
  double ref_energy = reference.squaredNorm();
  double alpha = estimate.dot(reference) / ref_energy;
  Vec e = estimate - alpha * reference;
  double s2 = alpha * alpha * ref_energy;
  double n2 = e.squaredNorm();
  double s = std::sqrt(s2), n = std::sqrt(n2);
  if (!(s > 1e-8 * n && n > 1e-8 * s)) return Vec::Zero(estimate.size());
  double c = 10.0 / std::log(10.0);
  return -c * ((2.0 * alpha / s2) * reference - (2.0 / n2) * e);
}

struct FrameCoeffs {
  CMat P;
  CVec v;
  CVec num;
  cplx den;
  bool degenerate = false;
};

}  // namespace

double adl_end_to_end_loss(const GruNetParams &inv_net, const GruNetParams &v_net,
                           const std::vector<Mat> &speech_inputs,
                           const std::vector<Mat> &undesired_inputs,
                           const MultiChannelSpectrogram &stacked_mix,
                           const Vec &reference, const StftConfig &cfg,
                           GruGradients *inv_grads, GruGradients *v_grads) {
  const int T = stacked_mix.frame_count();
  const int F = stacked_mix.bin_count();
  const int D = static_cast<int>(stacked_mix.channels.size());
  if (static_cast<int>(speech_inputs.size()) != T ||
      static_cast<int>(undesired_inputs.size()) != T)
    throw DimensionError("adl_end_to_end_loss: input length mismatch");
  if (T == 0 || F == 0) throw DimensionError("adl_end_to_end_loss: empty input");

  GruForwardCache inv_cache, v_cache;
  std::vector<Mat> inv_out = gru_net_forward(inv_net, undesired_inputs, &inv_cache);
  std::vector<Mat> v_out = gru_net_forward(v_net, speech_inputs, &v_cache);

  // Weights with fallback, beamformed spectrogram, synthesis, loss.
  std::vector<std::vector<FrameCoeffs>> fc(F, std::vector<FrameCoeffs>(T));
  std::vector<CMat> h(F, CMat::Zero(D, T));
  MultiChannelSpectrogram sep;
  sep.cfg = stacked_mix.cfg;
  sep.channels.assign(1, CMat::Zero(T, F));
  for (int f = 0; f < F; ++f) {
    CVec prev = CVec::Zero(D);
    for (int t = 0; t < T; ++t) {
      FrameCoeffs &c = fc[f][t];
      c.P = unpack_matrix(inv_out[t].col(f), D);
      c.v = unpack_vector(v_out[t].col(f));
      c.num = c.P * c.v;
      c.den = (c.v.adjoint() * c.num)(0, 0);
      c.degenerate = denominator_degenerate(c.den, c.num.norm(), c.v.norm());
      if (c.degenerate) {
        h[f].col(t) = prev;
      } else {
        h[f].col(t) = c.num / c.den;
        prev = h[f].col(t);
      }
      cplx acc(0.0, 0.0);
      for (int d = 0; d < D; ++d)
        acc += std::conj(h[f](d, t)) * stacked_mix.channels[d](t, f);
      sep.channels[0](t, f) = acc;
    }
  }
  // Synthesis expects a real signal spectrum: DC and Nyquist stay real.
  for (int t = 0; t < T; ++t) {
    sep.channels[0](t, 0) = cplx(sep.channels[0](t, 0).real(), 0.0);
    sep.channels[0](t, F - 1) = cplx(sep.channels[0](t, F - 1).real(), 0.0);
  }

  TimeSignal est = istft(sep, cfg, reference.size());
  Vec x_hat = est.samples.row(0).transpose();
  double loss = si_snr_loss(x_hat, reference);
  if (!inv_grads && !v_grads) return loss;

  // Backward: loss -> samples -> spectrum -> weights -> coefficients -> nets.
  Vec g_x = si_snr_loss_grad(x_hat, reference);

  const int win = cfg.window_length, hop = cfg.hop_length, n = cfg.fft_size;
  const Eigen::Index span = static_cast<Eigen::Index>(T - 1) * hop + win;
  Vec w = make_window(cfg.window_kind, win);
  Vec wsum = Vec::Zero(span);
  for (int t = 0; t < T; ++t)
    wsum.segment(static_cast<Eigen::Index>(t) * hop, win).array() += w.array().square();
  Vec env = wsum.cwiseMax(std::max(1e-8, 1e-2 * wsum.maxCoeff()));
  Vec g_acc = Vec::Zero(span);
  Eigen::Index keep = std::min<Eigen::Index>(reference.size(), span);
  g_acc.head(keep) = g_x.head(keep).array() / env.head(keep).array();

  CMat g_spec(T, F);  // d loss / d sep, as dRe + j dIm
  Vec g_time = Vec::Zero(n);
  for (int t = 0; t < T; ++t) {
    g_time.head(win) =
        (w.array() * g_acc.segment(static_cast<Eigen::Index>(t) * hop, win).array())
            .matrix();
    CVec spec = rfft(g_time, n);
    for (int f = 0; f < F; ++f) {
      double scale = (f == 0 || f == F - 1) ? 1.0 / n : 2.0 / n;
      g_spec(t, f) = scale * spec(f);
    }
    g_spec(t, 0) = cplx(g_spec(t, 0).real(), 0.0);
    g_spec(t, F - 1) = cplx(g_spec(t, F - 1).real(), 0.0);
  }

  std::vector<Mat> g_inv_out(T, Mat::Zero(2 * D * D, F));
  std::vector<Mat> g_v_out(T, Mat::Zero(2 * D, F));
  for (int f = 0; f < F; ++f) {
    CVec carry = CVec::Zero(D);  // gradient into h(t) inherited by fallback
    for (int t = T - 1; t >= 0; --t) {
      // X(t,f) = sum_d conj(h_d) y_d: g_h_d = y_d * conj(g_X).
      CVec g_h = carry;
      cplx gx = g_spec(t, f);
      for (int d = 0; d < D; ++d)
        g_h(d) += stacked_mix.channels[d](t, f) * std::conj(gx);
      const FrameCoeffs &c = fc[f][t];
      if (c.degenerate) {
        carry = g_h;
        continue;
      }
      carry.setZero();
      // h = num / den with num = P v, den = v^H P v.
      cplx inv_den = 1.0 / c.den;
      CVec g_num = std::conj(inv_den) * g_h;
      cplx g_den = 0.0;
      for (int d = 0; d < D; ++d)
        g_den += std::conj(-c.num(d) * inv_den * inv_den) * g_h(d);
      CMat g_P = g_num * c.v.adjoint() + g_den * (c.v * c.v.adjoint());
      CVec g_v = c.P.adjoint() * g_num + g_den * (c.P.adjoint() * c.v) +
                 std::conj(g_den) * c.num;
      g_inv_out[t].col(f) = pack_covariance(g_P);
      g_v_out[t].col(f) = pack_vector(g_v);
    }
  }

  if (inv_grads)
    gru_net_backward(inv_net, undesired_inputs, inv_cache, g_inv_out, inv_grads);
  if (v_grads) gru_net_backward(v_net, speech_inputs, v_cache, g_v_out, v_grads);
  return loss;
}

CovStreamSample make_synthetic_cov_stream(const SyntheticCovConfig &cfg, Rng *rng) {
  const int D = cfg.dim;
  if (D < 2) throw ConfigError("make_synthetic_cov_stream: dim must be >= 2");
  if (cfg.frames <= 0 || cfg.k_snapshots <= 0)
    throw ConfigError("make_synthetic_cov_stream: frames and snapshots must be positive");
  if (!(cfg.gap_lo <= cfg.gap_hi && cfg.gap_lo >= 0.0 && cfg.gap_hi < 1.0))
    throw ConfigError("make_synthetic_cov_stream: need 0 <= gap_lo <= gap_hi < 1");

  // Random unitary from the QR of a complex Gaussian matrix, with the R
  // diagonal phases folded in; redraw until the gauge anchor is well away
  // from zero.
  CMat Q(D, D);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 200)
      throw NumericError("make_synthetic_cov_stream: unitary draw failed");
    CMat G(D, D);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) G(i, j) = rng->cnormal();
    Eigen::HouseholderQR<CMat> qr(G);
    CMat R = qr.matrixQR().triangularView<Eigen::Upper>();
    Q = qr.householderQ();
    for (int j = 0; j < D; ++j) {
      cplx r = R(j, j);
      double m = std::abs(r);
      if (m > 0.0) Q.col(j) *= r / m;
    }
    if (std::abs(Q(0, 0)) >= 0.3) break;
  }
  double g = cfg.gap_lo + (cfg.gap_hi - cfg.gap_lo) * rng->uniform();
  Vec eigs(D);
  for (int i = 0; i < D; ++i)
    eigs(i) = (D == 1) ? 1.0 : 1.0 + g - 2.0 * g * i / (D - 1);
  CMat C = Q * eigs.asDiagonal() * Q.adjoint();
  Eigen::LLT<CMat> llt(C);
  if (llt.info() != Eigen::Success)
    throw NumericError("make_synthetic_cov_stream: base covariance not positive");
  CMat L = llt.matrixL();

  CovStreamSample out;
  out.phis.resize(cfg.frames);
  out.inv_targets.resize(cfg.frames);
  out.vec_targets.resize(cfg.frames);
  CMat rec;
  CMat snap(D, cfg.k_snapshots);
  for (int t = 0; t < cfg.frames; ++t) {
    for (int i = 0; i < D; ++i)
      for (int k = 0; k < cfg.k_snapshots; ++k) snap(i, k) = rng->cnormal();
    CMat wish = (snap * snap.adjoint()) / static_cast<double>(cfg.k_snapshots);
    out.phis[t] = L * wish * L.adjoint() + cfg.diag_load * CMat::Identity(D, D);
    rec = (t == 0) ? out.phis[0]
                   : CMat(cfg.forgetting * rec + (1.0 - cfg.forgetting) * out.phis[t]);
    out.inv_targets[t] = regularized_inverse(rec, cfg.loading);
    EigResult eig = principal_eigenvector((rec + rec.adjoint()) / 2.0);
    if (!eig.converged)
      throw NumericError("make_synthetic_cov_stream: eigenvector target stalled");
    out.vec_targets[t] = eig.vec;
  }
  return out;
}

AdlFineTuneResult adl_fine_tune(const GruNetParams &inv_net, const GruNetParams &v_net,
                                const std::vector<Mat> &speech_inputs,
                                const std::vector<Mat> &undesired_inputs,
                                const MultiChannelSpectrogram &stacked_mix,
                                const Vec &reference, const StftConfig &cfg,
                                const GruTrainConfig &train) {
  if (train.steps <= 0) throw ConfigError("adl_fine_tune: steps must be positive");
  AdlFineTuneResult res;
  res.inv_net = inv_net;
  res.v_net = v_net;
  GruGradients inv_vel = zero_gradients(inv_net);
  GruGradients v_vel = zero_gradients(v_net);

  auto update = [&](GruNetParams *p, GruGradients *vel, const GruGradients &g) {
    for (size_t l = 0; l < p->layers.size(); ++l) {
      auto upd_m = [&](Mat &pm, Mat &vm, const Mat &gm) {
        vm = train.momentum * vm - train.learning_rate * gm;
        pm += vm;
      };
      auto upd_v = [&](Vec &pv, Vec &vv, const Vec &gv) {
        vv = train.momentum * vv - train.learning_rate * gv;
        pv += vv;
      };
      upd_m(p->layers[l].Wz, vel->layers[l].Wz, g.layers[l].Wz);
      upd_m(p->layers[l].Wr, vel->layers[l].Wr, g.layers[l].Wr);
      upd_m(p->layers[l].Wh, vel->layers[l].Wh, g.layers[l].Wh);
      upd_m(p->layers[l].Uz, vel->layers[l].Uz, g.layers[l].Uz);
      upd_m(p->layers[l].Ur, vel->layers[l].Ur, g.layers[l].Ur);
      upd_m(p->layers[l].Uh, vel->layers[l].Uh, g.layers[l].Uh);
      upd_v(p->layers[l].bz, vel->layers[l].bz, g.layers[l].bz);
      upd_v(p->layers[l].br, vel->layers[l].br, g.layers[l].br);
      upd_v(p->layers[l].bh, vel->layers[l].bh, g.layers[l].bh);
    }
    vel->Wo = train.momentum * vel->Wo - train.learning_rate * g.Wo;
    p->Wo += vel->Wo;
    vel->bo = train.momentum * vel->bo - train.learning_rate * g.bo;
    p->bo += vel->bo;
  };

  for (int step = 0; step < train.steps; ++step) {
    GruGradients ig = zero_gradients(res.inv_net);
    GruGradients vg = zero_gradients(res.v_net);
    double loss = adl_end_to_end_loss(res.inv_net, res.v_net, speech_inputs,
                                      undesired_inputs, stacked_mix, reference, cfg,
                                      &ig, &vg);
    if (!std::isfinite(loss))
      throw NumericError("adl_fine_tune: loss diverged at step " + std::to_string(step));
    res.loss_history.push_back(loss);
    update(&res.inv_net, &inv_vel, ig);
    update(&res.v_net, &v_vel, vg);
  }
  return res;
}

}  // namespace mcbeam
