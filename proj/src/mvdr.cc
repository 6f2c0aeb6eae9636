// src/mvdr.cc

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

#include "mcbeam/mvdr.h"

#include <algorithm>
#include <cmath>
#include <complex>

namespace mcbeam {

namespace {

void check_square(const CMat &H, const char *who) {
  if (H.rows() == 0 || H.rows() != H.cols())
    throw DimensionError(std::string(who) + ": matrix must be square and nonempty");
}

void check_hermitian(const CMat &H, const char *who) {
  double scale = 1.0 + H.cwiseAbs().maxCoeff();
  double dev = (H - H.adjoint()).cwiseAbs().maxCoeff();
  if (dev > 1e-8 * scale)
    throw ConfigError(std::string(who) + ": matrix is not Hermitian");
}

// Rotates the first component with magnitude above 1e-12 to be real positive.
void gauge_fix(CVec *x) {
  for (int i = 0; i < x->size(); ++i) {
    double m = std::abs((*x)(i));
    if (m > 1e-12) {
      *x *= std::conj((*x)(i)) / m;
      break;
    }
  }
}

}  // namespace

EigResult principal_eigenvector(const CMat &H) {
  check_square(H, "principal_eigenvector");
  check_hermitian(H, "principal_eigenvector");
  const int d = static_cast<int>(H.rows());

  EigResult res;
  if (d == 1) {
    res.vec = CVec::Ones(1);
    res.value = H(0, 0).real();
    res.converged = true;
    return res;
  }

  // Shift by the Gershgorin lower bound so the target eigenvalue of the
  // shifted matrix is the one largest in magnitude.
  double lower = 0.0;
  for (int i = 0; i < d; ++i) {
    double radius = 0.0;
    for (int j = 0; j < d; ++j)
      if (j != i) radius += std::abs(H(i, j));
    double bound = H(i, i).real() - radius;
    if (i == 0 || bound < lower) lower = bound;
  }
  double shift = std::max(0.0, -lower);
  CMat B = H + shift * CMat::Identity(d, d);

  // Deterministic start: e1 plus a small complex ramp so an exactly
  // orthogonal dominant eigenvector cannot stall the iteration.
  CVec x = CVec::Zero(d);
  x(0) = cplx(1.0, 0.0);
  for (int i = 0; i < d; ++i)
    x(i) += cplx(1e-6 * (i + 1), 1e-6 * (d - i));
  x /= x.norm();

  const double tol = 1e-10;
  const int max_iters = 500;
  for (int it = 0; it < max_iters; ++it) {
    CVec y = B * x;
    double n = y.norm();
    if (n < 1e-300) {
      // Shifted matrix annihilates the iterate; every direction is an
      // eigenvector of the shift-free matrix with eigenvalue -shift.
      res.converged = true;
      break;
    }
    y /= n;
    gauge_fix(&y);
    double step = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (step < tol) {
      res.converged = true;
      break;
    }
  }
  gauge_fix(&x);
  res.vec = x;
  res.value = (x.adjoint() * H * x)(0, 0).real();
  return res;
}

CMat regularized_inverse(const CMat &H, double loading) {
  check_square(H, "regularized_inverse");
  if (loading < 0.0) throw ConfigError("regularized_inverse: loading must be >= 0");
  const int d = static_cast<int>(H.rows());

  double tr = H.trace().real();
  double delta = loading * tr / d;
  CMat A = H + delta * CMat::Identity(d, d);
  CMat inv = CMat::Identity(d, d);

  // Gaussian elimination with partial pivoting on [A | I].
  double scale = A.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw NumericError("regularized_inverse: singular matrix");
  std::vector<int> perm(d);
  for (int i = 0; i < d; ++i) perm[i] = i;
  for (int k = 0; k < d; ++k) {
    int piv = k;
    double best = std::abs(A(k, k));
    for (int i = k + 1; i < d; ++i) {
      double m = std::abs(A(i, k));
      if (m > best) {
        best = m;
        piv = i;
      }
    }
    if (best < 1e-13 * scale)
      throw NumericError("regularized_inverse: singular matrix");
    if (piv != k) {
      A.row(piv).swap(A.row(k));
      inv.row(piv).swap(inv.row(k));
    }
    cplx p = A(k, k);
    A.row(k) /= p;
    inv.row(k) /= p;
    for (int i = 0; i < d; ++i) {
      if (i == k) continue;
      cplx m = A(i, k);
      if (m == cplx(0.0, 0.0)) continue;
      A.row(i) -= m * A.row(k);
      inv.row(i) -= m * inv.row(k);
    }
  }
  return inv;
}

BeamformerWeights mvdr_steering(const CovarianceSequence &noise_cov,
                                const SteeringVector &steering, double loading) {
  const int F = noise_cov.bins();
  const int T = noise_cov.frames();
  if (steering.bins() != F || steering.dim() != noise_cov.dim)
    throw DimensionError("mvdr_steering: steering/covariance shape mismatch");

  BeamformerWeights out;
  out.layout = noise_cov.layout;
  out.dim = noise_cov.dim;
  out.w.resize(F);
  for (int f = 0; f < F; ++f) {
    out.w[f].resize(noise_cov.dim, T);
    CVec v = steering.v.col(f);
    for (int t = 0; t < T; ++t) {
      CMat P = regularized_inverse(noise_cov.mats[f][t], loading);
      CVec pv = P * v;
      cplx denom = (v.adjoint() * pv)(0, 0);
      if (std::abs(denom) < 1e-300)
        throw NumericError("mvdr_steering: vanishing denominator");
      out.w[f].col(t) = pv / denom;
    }
  }
  return out;
}

BeamformerWeights mvdr_reference_channel(const CovarianceSequence &noise_cov,
                                         const CovarianceSequence &speech_cov,
                                         int reference_channel, double loading) {
  const int F = noise_cov.bins();
  const int T = noise_cov.frames();
  if (speech_cov.bins() != F || speech_cov.frames() != T ||
      speech_cov.dim != noise_cov.dim)
    throw DimensionError("mvdr_reference_channel: covariance shape mismatch");
  if (reference_channel < 0 || reference_channel >= noise_cov.dim)
    throw ConfigError("mvdr_reference_channel: reference channel out of range");

  BeamformerWeights out;
  out.layout = noise_cov.layout;
  out.dim = noise_cov.dim;
  out.w.resize(F);
  for (int f = 0; f < F; ++f) {
    out.w[f].resize(noise_cov.dim, T);
    for (int t = 0; t < T; ++t) {
      CMat P = regularized_inverse(noise_cov.mats[f][t], loading);
      CMat G = P * speech_cov.mats[f][t];
      cplx tr = G.trace();
      if (std::abs(tr) < 1e-300)
        throw NumericError("mvdr_reference_channel: vanishing trace");
      out.w[f].col(t) = G.col(reference_channel) / tr;
    }
  }
  return out;
}

BeamformerWeights mf_mvdr(const CovarianceSequence &undesired_cov,
                          const IfcVector &ifc, double loading) {
  const int F = undesired_cov.bins();
  const int T = undesired_cov.frames();
  if (ifc.bins() != F || ifc.frames() != T)
    throw DimensionError("mf_mvdr: ifc/covariance shape mismatch");
  if (!ifc.g.empty() && ifc.g[0].rows() != undesired_cov.dim)
    throw DimensionError("mf_mvdr: ifc/covariance dim mismatch");

  BeamformerWeights out;
  out.layout = undesired_cov.layout;
  out.dim = undesired_cov.dim;
  out.w.resize(F);
  for (int f = 0; f < F; ++f) {
    out.w[f].resize(undesired_cov.dim, T);
    for (int t = 0; t < T; ++t) {
      CMat P = regularized_inverse(undesired_cov.mats[f][t], loading);
      CVec g = ifc.g[f].col(t);
      CVec pg = P * g;
      cplx denom = (g.adjoint() * pg)(0, 0);
      if (std::abs(denom) < 1e-300)
        throw NumericError("mf_mvdr: vanishing denominator");
      out.w[f].col(t) = pg / denom;
    }
  }
  return out;
}

IfcVector ifc_vector(const CovarianceSequence &mf_speech_cov, int current_index) {
  const int F = mf_speech_cov.bins();
  const int T = mf_speech_cov.frames();
  const int L = mf_speech_cov.dim;
  if (current_index < 0 || current_index >= L)
    throw ConfigError("ifc_vector: current index out of range");

  IfcVector out;
  out.current_index = current_index;
  out.g.resize(F);
  for (int f = 0; f < F; ++f) {
    out.g[f].resize(L, T);
    for (int t = 0; t < T; ++t) {
      const CMat &phi = mf_speech_cov.mats[f][t];
      double power = phi(current_index, current_index).real();
      out.g[f].col(t) = phi.col(current_index) / std::max(power, 1e-12);
    }
  }
  return out;
}

MultiChannelSpectrogram apply_weights(const BeamformerWeights &weights,
                                      const MultiChannelSpectrogram &input) {
  const int D = static_cast<int>(input.channels.size());
  if (D != weights.dim) throw DimensionError("apply_weights: channel count mismatch");
  if (D == 0) throw DimensionError("apply_weights: empty input");
  const int T = static_cast<int>(input.channels[0].rows());
  const int F = static_cast<int>(input.channels[0].cols());
  if (weights.bins() != F) throw DimensionError("apply_weights: bin count mismatch");
  if (!weights.chunk() && weights.frames() != T)
    throw DimensionError("apply_weights: frame count mismatch");

  MultiChannelSpectrogram out;
  out.cfg = input.cfg;
  out.channels.assign(1, CMat::Zero(T, F));
  for (int f = 0; f < F; ++f) {
    for (int t = 0; t < T; ++t) {
      int col = weights.chunk() ? 0 : t;
      cplx acc(0.0, 0.0);
      for (int d = 0; d < D; ++d)
        acc += std::conj(weights.w[f](d, col)) * input.channels[d](t, f);
      out.channels[0](t, f) = acc;
    }
  }
  return out;
}

CVec far_field_steering(const ArrayGeometry &geometry, double theta_deg, double f_hz) {
  if (theta_deg < 0.0 || theta_deg > 180.0)
    throw ConfigError("far_field_steering: angle must lie in [0, 180] degrees");
  const int M = geometry.channels();
  CVec a(M);
  double ct = std::cos(theta_deg * kPi / 180.0);
  for (int m = 0; m < M; ++m) {
    double delay = geometry.pair_spacing(m, 0) * ct / kSoundSpeed;
    double phase = 2.0 * kPi * f_hz * delay;
    a(m) = cplx(std::cos(phase), std::sin(phase));
  }
  return a;
}

Vec beam_pattern(const BeamformerWeights &weights, const ArrayGeometry &geometry,
                 double f_hz, int frame, const Vec &angles_deg,
                 const StftConfig &cfg) {
  if (weights.layout != CovLayout::kMC)
    throw ConfigError("beam_pattern: only per-channel weights have a spatial response");
  if (weights.dim != geometry.channels())
    throw DimensionError("beam_pattern: weight/geometry channel mismatch");
  if (weights.bins() != cfg.bin_count())
    throw DimensionError("beam_pattern: weight/config bin mismatch");
  int col = weights.chunk() ? 0 : frame;
  if (col < 0 || col >= weights.frames())
    throw ConfigError("beam_pattern: frame out of range");

  double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  int bin = static_cast<int>(std::lround(f_hz / bin_hz));
  bin = std::clamp(bin, 0, cfg.bin_count() - 1);
  double bin_freq = bin * bin_hz;

  Vec gains(angles_deg.size());
  CVec h = weights.w[bin].col(col);
  for (int i = 0; i < angles_deg.size(); ++i) {
    CVec a = far_field_steering(geometry, angles_deg(i), bin_freq);
    cplx resp = (h.adjoint() * a)(0, 0);
    double p = std::norm(resp);
    gains(i) = 10.0 * std::log10(std::max(p, 1e-300));
  }
  return gains;
}

}  // namespace mcbeam
