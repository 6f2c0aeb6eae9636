// tests/acceptance.cc

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

// End-to-end acceptance gate. Each check is self-contained, uses pinned
// tolerances, and prints one PASS/FAIL line with the measured numbers.
// Exit status is 0 only when every check passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mcbeam/adl.h"
#include "mcbeam/estimators.h"
#include "mcbeam/gru.h"
#include "mcbeam/metrics.h"
#include "mcbeam/mvdr.h"
#include "mcbeam/room.h"
#include "mcbeam/signal.h"
#include "oracles.h"

using namespace mcbeam;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Harness.

int g_failures = 0;

void report(const std::string &name, bool ok, const std::string &detail) {
  std::printf("[%s] %-24s %s\n", ok ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char *f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared random builders.

CMat random_hermitian_psd(Rng *rng, int d) {
  CMat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng->cnormal();
  CMat h = a * a.adjoint() / static_cast<double>(d);
  h += 1e-3 * CMat::Identity(d, d);
  return h;
}

CVec random_cvec(Rng *rng, int d) {
  CVec v(d);
  for (int i = 0; i < d; ++i) v(i) = rng->cnormal();
  return v;
}

CovarianceSequence one_cov(const CMat &m) {
  CovarianceSequence cs;
  cs.layout = CovLayout::kMC;
  cs.dim = static_cast<int>(m.rows());
  cs.mats = {{m}};
  cs.normalizer = Vec::Ones(1);
  cs.degenerate = {0};
  return cs;
}

// ---------------------------------------------------------------------------
// MVDR weights against the Lagrangian brute force.

void check_mvdr_oracle() {
  auto t0 = Clock::now();
  Rng rng(101);
  double max_rel = 0.0, max_con = 0.0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const int d = 2 + k % 3;
    CMat phi = random_hermitian_psd(&rng, d);
    CVec v = random_cvec(&rng, d);
    SteeringVector st;
    st.v = v;
    BeamformerWeights w = mvdr_steering(one_cov(phi), st, 1e-5);
    CVec h = w.w[0].col(0);
    max_con = std::max(max_con, std::abs((h.adjoint() * v)(0, 0) - cplx(1.0)));
    const double delta = 1e-5 * phi.trace().real() / d;
    CMat loaded = phi + delta * CMat::Identity(d, d);
    CVec want = oracles::constrained_min_weights(loaded, v);
    double rel = (h - want).cwiseAbs().maxCoeff() /
                 (1.0 + want.cwiseAbs().maxCoeff());
    max_rel = std::max(max_rel, rel);
  }
  double el = secs_since(t0);
  bool ok = max_rel <= 1e-8 && max_con < 1e-8 && el < 10.0;
  report("mvdr-vs-lagrangian", ok,
         fmt("%d draws, max rel %.2e (<=1e-8), max |h^Hv-1| %.2e (<1e-8), "
             "%.2fs (<10s)",
             trials, max_rel, max_con, el));
}

// ---------------------------------------------------------------------------
// Power iteration against the Jacobi oracle on gapped Hermitian matrices.

void check_power_iteration() {
  Rng rng(202);
  double max_err = 0.0;
  int stalled = 0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const int d = 2 + k % 3;
    // Random unitary from the QR of a complex Gaussian matrix.
    CMat g(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) g(i, j) = rng.cnormal();
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ();
    // Spectrum in [-1, 1] with a dominant gap so 500 iterations suffice.
    Vec eigs(d);
    for (int tries = 0; tries < 1000; ++tries) {
      for (int i = 0; i < d; ++i) eigs(i) = rng.uniform(-1.0, 1.0);
      std::sort(eigs.data(), eigs.data() + d, std::greater<double>());
      if (eigs(0) - eigs(1) >= 0.15) break;
    }
    CMat a = q * eigs.asDiagonal() * q.adjoint();
    a = ((a + CMat(a.adjoint())) / 2.0).eval();
    EigResult r = principal_eigenvector(a);
    if (!r.converged) ++stalled;
    oracles::EigDecomp ed = oracles::jacobi_hermitian(a);
    max_err = std::max(max_err, std::abs(r.value - ed.values(0)));
  }
  bool ok = max_err <= 1e-8 && stalled == 0;
  report("power-iteration-eigs", ok,
         fmt("%d gapped Hermitians, max |rayleigh - jacobi lambda_max| %.2e "
             "(<=1e-8), %d stalled",
             trials, max_err, stalled));
}

// ---------------------------------------------------------------------------
// STFT round trip: interior reconstruction error below -60 dB.

void check_stft_roundtrip() {
  Rng rng(303);
  StftConfig cfg;
  double worst_db = -1e9;
  const int trials = 100;
  for (int k = 0; k < trials; ++k) {
    const Eigen::Index n = 4000 + (k * 531) % 4000;
    const int ch = 1 + k % 2;
    TimeSignal x;
    x.sample_rate = cfg.sample_rate;
    x.samples.resize(ch, n);
    for (int m = 0; m < ch; ++m)
      for (Eigen::Index i = 0; i < n; ++i) x.samples(m, i) = rng.normal();
    MultiChannelSpectrogram spec = stft(x, cfg);
    TimeSignal y = istft(spec, cfg, n);
    const Eigen::Index lo = cfg.window_length;
    const Eigen::Index hi = n - cfg.window_length;
    double err = (y.samples.middleCols(lo, hi - lo) -
                  x.samples.middleCols(lo, hi - lo))
                     .norm();
    double ref = x.samples.middleCols(lo, hi - lo).norm();
    worst_db = std::max(worst_db, 20.0 * std::log10(err / ref));
  }
  bool ok = worst_db < -60.0;
  report("stft-roundtrip", ok,
         fmt("%d random signals, worst interior error %.1f dB (<-60 dB)",
             trials, worst_db));
}

// ---------------------------------------------------------------------------
// Filter-and-sum reduction: a 3x3 filter with only its center tap equals the
// plain mask, and the vectorized apply matches a per-tap double loop.

void check_crf_reduction() {
  Rng rng(404);
  StftConfig cfg;
  const int T = 18, F = cfg.bin_count();
  auto random_spec = [&](int ch) {
    MultiChannelSpectrogram s;
    s.cfg = cfg;
    s.channels.resize(ch);
    for (int c = 0; c < ch; ++c) {
      s.channels[c].resize(T, F);
      for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) s.channels[c](t, f) = rng.cnormal();
    }
    return s;
  };
  MultiChannelSpectrogram mix = random_spec(2);
  MultiChannelSpectrogram tgt = random_spec(2);

  ComplexRatioFilter crm = oracle_crm(mix, tgt, 10.0, 0);
  ComplexRatioFilter wide;
  wide.j1 = wide.j2 = wide.k1 = wide.k2 = 1;
  wide.taps.assign(static_cast<size_t>(wide.tap_count()), CMat::Zero(T, F));
  wide.taps[static_cast<size_t>(wide.tap_index(0, 0))] = crm.center();
  double center_diff = 0.0;
  MultiChannelSpectrogram a = apply_crf(mix, crm);
  MultiChannelSpectrogram b = apply_crf(mix, wide);
  for (int c = 0; c < 2; ++c)
    center_diff =
        std::max(center_diff, (a.channels[c] - b.channels[c]).cwiseAbs().maxCoeff());

  ComplexRatioFilter rf;
  rf.j1 = rf.j2 = rf.k1 = rf.k2 = 1;
  rf.taps.resize(static_cast<size_t>(rf.tap_count()));
  for (auto &tap : rf.taps) {
    tap.resize(T, F);
    for (int t = 0; t < T; ++t)
      for (int f = 0; f < F; ++f) tap(t, f) = rng.cnormal();
  }
  MultiChannelSpectrogram fast = apply_crf(mix, rf);
  double loop_diff = 0.0;
  for (int c = 0; c < 2; ++c) {
    CMat want = CMat::Zero(T, F);
    for (int t = 0; t < T; ++t)
      for (int f = 0; f < F; ++f)
        for (int dt = -rf.j1; dt <= rf.j2; ++dt)
          for (int df = -rf.k1; df <= rf.k2; ++df) {
            int tt = t + dt, ff = f + df;
            if (tt < 0 || tt >= T || ff < 0 || ff >= F) continue;
            want(t, f) += rf.taps[static_cast<size_t>(rf.tap_index(dt, df))](t, f) *
                          mix.channels[c](tt, ff);
          }
    loop_diff =
        std::max(loop_diff, (fast.channels[c] - want).cwiseAbs().maxCoeff());
  }
  bool ok = center_diff <= 1e-12 && loop_diff <= 1e-12;
  report("crf-reduction", ok,
         fmt("center-only vs mask %.2e (<=1e-12), vs double loop %.2e "
             "(<=1e-12)",
             center_diff, loop_diff));
}

// ---------------------------------------------------------------------------
// Single-frame multi-frame filter is the identity; single-frame MCMF equals
// MC given identical networks.

void check_multiframe_identity() {
  Rng rng(505);
  const int T = 30, F = 64;
  MultiChannelSpectrogram spec;
  spec.cfg = StftConfig{};
  spec.channels.resize(1);
  spec.channels[0].resize(T, F);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) spec.channels[0](t, f) = rng.cnormal();

  CovarianceSequence cs;
  cs.layout = CovLayout::kMF;
  cs.dim = 1;
  cs.mats.resize(F);
  cs.normalizer = Vec::Ones(F);
  cs.degenerate.assign(F, 0);
  for (int f = 0; f < F; ++f) {
    cs.mats[f].resize(T);
    for (int t = 0; t < T; ++t) {
      CMat m(1, 1);
      m(0, 0) = std::norm(spec.channels[0](t, f)) + 0.1;
      cs.mats[f][t] = m;
    }
  }
  double ident_diff = 0.0;
  for (double loading : {0.0, 1e-5, 0.5}) {
    IfcVector g = ifc_vector(cs, 0);
    BeamformerWeights w = mf_mvdr(cs, g, loading);
    MultiChannelSpectrogram out = apply_weights(w, spec);
    ident_diff = std::max(
        ident_diff, (out.channels[0] - spec.channels[0]).cwiseAbs().maxCoeff());
  }

  // MCMF with one frame per tap must reduce to MC bit-for-bit up to roundoff.
  AdlMvdrConfig mc;
  mc.mode = CovLayout::kMC;
  mc.channels = 2;
  AdlMvdrConfig mcmf;
  mcmf.mode = CovLayout::kMCMF;
  mcmf.channels = 2;
  mcmf.l1 = 1;
  mcmf.l2 = 0;
  Rng nrng(506);
  GruNetParams inv_net =
      make_gru_net(mc.input_size(), {6}, mc.inv_output_size(), &nrng);
  GruNetParams v_net =
      make_gru_net(mc.input_size(), {6}, mc.v_output_size(), &nrng);
  auto random_spec2 = [&](int ch, int t, int f) {
    MultiChannelSpectrogram s;
    s.cfg = StftConfig{};
    s.channels.resize(ch);
    for (int c = 0; c < ch; ++c) {
      s.channels[c].resize(t, f);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < f; ++j) s.channels[c](i, j) = rng.cnormal();
    }
    return s;
  };
  MultiChannelSpectrogram mix = random_spec2(2, 12, 20);
  MultiChannelSpectrogram sp = random_spec2(2, 12, 20);
  MultiChannelSpectrogram un = random_spec2(2, 12, 20);
  MultiChannelSpectrogram sep_mc = adl_mvdr_separate(mix, sp, un, inv_net, v_net, mc);
  MultiChannelSpectrogram sep_mf =
      adl_mvdr_separate(mix, sp, un, inv_net, v_net, mcmf);
  double mcmf_diff =
      (sep_mc.channels[0] - sep_mf.channels[0]).cwiseAbs().maxCoeff();

  bool ok = ident_diff <= 1e-12 && mcmf_diff <= 1e-12;
  report("multiframe-identity", ok,
         fmt("single-frame filter vs input %.2e (<=1e-12), single-frame MCMF "
             "vs MC %.2e (<=1e-12)",
             ident_diff, mcmf_diff));
}

// ---------------------------------------------------------------------------
// Oracle-mask chunk MVDR on simulated scenes: mean Si-SNR gain over the
// unprocessed mixture of at least 5 dB across 20 seeded 2-speaker rooms.

// Eigenvector weight rule as shipped by the CLI: steering from the principal
// eigenvector of the speech covariance, rescaled so the reference entry is 1.
BeamformerWeights eigenvector_rule(const CovarianceSequence &speech,
                                   const CovarianceSequence &undesired,
                                   int ref, double loading) {
  const int F = speech.bins();
  const int T = speech.frames();
  BeamformerWeights w;
  w.layout = speech.layout;
  w.dim = speech.dim;
  w.w.resize(F);
  for (int f = 0; f < F; ++f) {
    w.w[f].resize(speech.dim, T);
    for (int t = 0; t < T; ++t) {
      CMat sym = (speech.mats[f][t] + speech.mats[f][t].adjoint()) / 2.0;
      EigResult eig = principal_eigenvector(sym);
      CVec v = eig.vec;
      if (std::abs(v(ref)) > 1e-8) v /= v(ref);
      CMat p = regularized_inverse(undesired.mats[f][t], loading);
      CVec pv = p * v;
      cplx den = (v.adjoint() * pv)(0, 0);
      w.w[f].col(t) = pv / den;
    }
  }
  return w;
}

void check_separation_gain() {
  auto t0 = Clock::now();
  ArrayGeometry geom = ArrayGeometry::linear15();
  const int ref = geom.reference_channel;
  StftConfig scfg;
  Rng master(606);
  const int scenes = 20;
  double sum_sep = 0.0, sum_mix = 0.0;
  for (int s = 0; s < scenes; ++s) {
    Rng rng = master.derive(static_cast<uint64_t>(s));
    ArrayScene sc;
    sc.room_dims = {rng.uniform(4.0, 10.0), rng.uniform(4.0, 10.0),
                    rng.uniform(3.0, 6.0)};
    sc.rt60 = rng.uniform(0.05, 0.7);
    sc.sir_db = rng.uniform(-6.0, 6.0);
    sc.snr_db = rng.uniform(18.0, 30.0);
    sc.array_center = {sc.room_dims.x() / 2.0, sc.room_dims.y() / 2.0, 1.5};
    sc.orientation_deg = 0.0;
    sc.seed = rng.next_u64();
    sc.target_index = 0;
    for (int src = 0; src < 2; ++src) {
      Eigen::Vector3d pos;
      for (int tries = 0; tries < 256; ++tries) {
        double theta = rng.uniform(0.0, 2.0 * M_PI);
        double dist = rng.uniform(0.5, 6.0);
        pos = sc.array_center +
              dist * Eigen::Vector3d(std::cos(theta), std::sin(theta), 0.0);
        pos.z() = rng.uniform(1.2, 1.9);
        const double margin = 0.5;
        if (pos.x() > margin && pos.x() < sc.room_dims.x() - margin &&
            pos.y() > margin && pos.y() < sc.room_dims.y() - margin &&
            pos.z() > margin && pos.z() < sc.room_dims.z() - margin)
          break;
      }
      sc.source_positions.push_back(pos);
    }
    std::vector<TimeSignal> dry = {make_test_source(rng, 0.4),
                                   make_test_source(rng, 0.4)};
    MixtureComponents mixed = synthesize_mixture(sc, geom, dry);

    MultiChannelSpectrogram mix_spec = stft(mixed.mixture, scfg);
    MultiChannelSpectrogram tgt_spec = stft(mixed.target, scfg);
    MultiChannelSpectrogram speech;
    speech.cfg = mix_spec.cfg;
    speech.channels.resize(mix_spec.channel_count());
    CMat ref_mask;
    for (int c = 0; c < mix_spec.channel_count(); ++c) {
      ComplexRatioFilter crm = oracle_crm(mix_spec, tgt_spec, 10.0, c);
      speech.channels[c] = mix_spec.channels[c].cwiseProduct(crm.center());
      if (c == ref) ref_mask = crm.center();
    }
    MultiChannelSpectrogram undesired = subtract(mix_spec, speech);
    CovarianceSequence cs = chunk_covariance(speech, ref_mask);
    CovarianceSequence cn = chunk_covariance(undesired, CMat());
    BeamformerWeights w = eigenvector_rule(cs, cn, ref, 1e-5);
    MultiChannelSpectrogram sep_spec = apply_weights(w, mix_spec);
    TimeSignal sep = istft(sep_spec, scfg, mixed.mixture.length());

    Vec est = sep.samples.row(0).transpose();
    Vec tgt = mixed.target.samples.row(ref).transpose();
    Vec mixr = mixed.mixture.samples.row(ref).transpose();
    sum_sep += si_snr_db(est, tgt);
    sum_mix += si_snr_db(mixr, tgt);
  }
  double mean_sep = sum_sep / scenes, mean_mix = sum_mix / scenes;
  double el = secs_since(t0);
  bool ok = mean_sep >= mean_mix + 5.0 && el < 120.0;
  report("separation-gain", ok,
         fmt("%d scenes, separated %.2f dB vs mixture %.2f dB (gain %.2f, "
             ">=5 dB), %.1fs (<120s)",
             scenes, mean_sep, mean_mix, mean_sep - mean_mix, el));
}

// ---------------------------------------------------------------------------
// Beam pattern of the steering-constrained weights in a near-anechoic room:
// unity gain toward the target, deep attenuation toward the interferer.

void check_beam_pattern() {
  ArrayGeometry geom = ArrayGeometry::linear15();
  StftConfig scfg;
  ArrayScene sc;
  sc.room_dims = {8.0, 8.0, 3.0};
  sc.rt60 = 0.05;
  sc.array_center = {4.0, 4.0, 1.5};
  sc.orientation_deg = 0.0;
  sc.sir_db = 0.0;
  sc.seed = 0x7077;
  sc.target_index = 0;
  const double deg = M_PI / 180.0;
  for (double theta : {63.0, 131.0})
    sc.source_positions.push_back(
        sc.array_center +
        1.5 * Eigen::Vector3d(std::cos(theta * deg), std::sin(theta * deg), 0.0));
  Rng rng(707);
  std::vector<TimeSignal> dry = {make_test_source(rng, 0.4),
                                 make_test_source(rng, 0.4)};
  MixtureComponents mixed = synthesize_mixture(sc, geom, dry);

  // Noise is disabled, so the interference image is the exact undesired part.
  MultiChannelSpectrogram un_spec = stft(mixed.interference, scfg);
  CovarianceSequence cn = chunk_covariance(un_spec, CMat());
  const int F = scfg.bin_count();
  const double bin_hz = static_cast<double>(scfg.sample_rate) / scfg.fft_size;
  SteeringVector st;
  st.v.resize(geom.channels(), F);
  for (int f = 0; f < F; ++f)
    st.v.col(f) = far_field_steering(geom, 63.0, f * bin_hz);
  BeamformerWeights w = mvdr_steering(cn, st, 1e-5);

  Vec angles = Vec::LinSpaced(181, 0.0, 180.0);
  Vec gains = beam_pattern(w, geom, 968.0, 0, angles, scfg);
  double target_db = gains(63);
  double interferer_db = gains(131);
  bool ok = std::abs(target_db) <= 0.1 && interferer_db <= target_db - 10.0;
  report("beam-pattern-null", ok,
         fmt("target 63deg %.4f dB (|.|<=0.1), interferer 131deg %.2f dB "
             "(<= target - 10)",
             target_db, interferer_db));
}

// ---------------------------------------------------------------------------
// Backprop through time against central finite differences over every
// parameter of a 2-layer 4-unit network on 10-step sequences, 20 seeds.

struct ParamRef {
  double *p;
  const double *g;
};

void collect(std::vector<ParamRef> *out, Mat *p, const Mat &g) {
  for (Eigen::Index i = 0; i < p->size(); ++i)
    out->push_back({p->data() + i, g.data() + i});
}

void collect(std::vector<ParamRef> *out, Vec *p, const Vec &g) {
  for (Eigen::Index i = 0; i < p->size(); ++i)
    out->push_back({p->data() + i, g.data() + i});
}

std::vector<ParamRef> flatten(GruNetParams *params, const GruGradients &grads) {
  std::vector<ParamRef> refs;
  for (size_t l = 0; l < params->layers.size(); ++l) {
    GruLayerParams &lp = params->layers[l];
    const GruLayerParams &lg = grads.layers[l];
    collect(&refs, &lp.Wz, lg.Wz);
    collect(&refs, &lp.Uz, lg.Uz);
    collect(&refs, &lp.bz, lg.bz);
    collect(&refs, &lp.Wr, lg.Wr);
    collect(&refs, &lp.Ur, lg.Ur);
    collect(&refs, &lp.br, lg.br);
    collect(&refs, &lp.Wh, lg.Wh);
    collect(&refs, &lp.Uh, lg.Uh);
    collect(&refs, &lp.bh, lg.bh);
  }
  collect(&refs, &params->Wo, grads.Wo);
  collect(&refs, &params->bo, grads.bo);
  return refs;
}

double masked_loss(const GruNetParams &params, const std::vector<Mat> &inputs,
                   const std::vector<Mat> &targets, int warmup) {
  std::vector<Mat> outs = gru_net_forward(params, inputs);
  const int T = static_cast<int>(inputs.size());
  const Eigen::Index batch = inputs[0].cols();
  double acc = 0.0;
  const double counted = static_cast<double>((T - warmup) * batch);
  for (int t = warmup; t < T; ++t) acc += (outs[t] - targets[t]).squaredNorm();
  return acc / counted;
}

void check_bptt_fd() {
  double worst = 0.0;
  const int T = 10, warmup = 2, batch = 2;
  for (int seed = 1; seed <= 20; ++seed) {
    Rng rng(static_cast<uint64_t>(800 + seed));
    GruNetParams params = make_gru_net(3, {4, 4}, 2, &rng);
    std::vector<Mat> inputs(T), targets(T);
    for (int t = 0; t < T; ++t) {
      inputs[t].resize(3, batch);
      targets[t].resize(2, batch);
      for (Eigen::Index i = 0; i < inputs[t].size(); ++i)
        inputs[t].data()[i] = rng.normal();
      for (Eigen::Index i = 0; i < targets[t].size(); ++i)
        targets[t].data()[i] = rng.normal();
    }
    GruForwardCache cache;
    std::vector<Mat> outs = gru_net_forward(params, inputs, &cache);
    const double counted = static_cast<double>((T - warmup) * batch);
    std::vector<Mat> grad_out(T);
    for (int t = 0; t < T; ++t) {
      grad_out[t] = (t < warmup) ? Mat::Zero(2, batch).eval()
                                 : (2.0 * (outs[t] - targets[t]) / counted).eval();
    }
    GruGradients grads = zero_gradients(params);
    gru_net_backward(params, inputs, cache, grad_out, &grads);

    std::vector<ParamRef> refs = flatten(&params, grads);
    const double eps = 1e-5;
    for (const ParamRef &r : refs) {
      const double keep = *r.p;
      *r.p = keep + eps;
      double up = masked_loss(params, inputs, targets, warmup);
      *r.p = keep - eps;
      double dn = masked_loss(params, inputs, targets, warmup);
      *r.p = keep;
      double fd = (up - dn) / (2.0 * eps);
      double rel = std::abs(fd - *r.g) / std::max(1e-6, std::abs(fd) + std::abs(*r.g));
      worst = std::max(worst, rel);
    }
  }
  bool ok = worst < 1e-4;
  report("bptt-vs-fd", ok,
         fmt("20 seeds, full parameter sweep, worst rel err %.2e (<1e-4)",
             worst));
}

// ---------------------------------------------------------------------------
// Recurrent networks as covariance operators: trained on synthetic streams,
// they must track the loaded inverse and the principal eigenvector of the
// running covariance on held-out streams, and beat a constant predictor by
// a wide margin.

struct FeatureStats {
  Vec mean;
  Vec std;
};

FeatureStats feature_stats(const std::vector<Mat> &seq) {
  const Eigen::Index rows = seq[0].rows();
  Vec mean = Vec::Zero(rows), sq = Vec::Zero(rows);
  double n = 0.0;
  for (const Mat &m : seq) {
    mean += m.rowwise().sum();
    sq += m.cwiseProduct(m).rowwise().sum();
    n += static_cast<double>(m.cols());
  }
  mean /= n;
  Vec var = sq / n - mean.cwiseProduct(mean);
  Vec std = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);
  return {mean, std};
}

std::vector<Mat> standardized(const std::vector<Mat> &seq, const FeatureStats &st) {
  std::vector<Mat> out(seq.size());
  for (size_t t = 0; t < seq.size(); ++t)
    out[t] = (seq[t].colwise() - st.mean).array().colwise() / st.std.array();
  return out;
}

void check_gru_operator() {
  auto t0 = Clock::now();
  SyntheticCovConfig scfg;
  const int n_train = 48, n_test = 48, T = scfg.frames, warmup = 4;
  const int dim = scfg.dim;
  const int in_dim = 2 * dim * dim, vec_dim = 2 * dim;

  Rng master(909);
  std::vector<CovStreamSample> streams;
  streams.reserve(n_train + n_test);
  for (int s = 0; s < n_train + n_test; ++s) {
    Rng r = master.derive(static_cast<uint64_t>(1000 + s));
    streams.push_back(make_synthetic_cov_stream(scfg, &r));
  }

  auto tensor = [&](int first, int count, int rows,
                    const std::function<Vec(const CovStreamSample &, int)> &get) {
    std::vector<Mat> seq(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      seq[static_cast<size_t>(t)].resize(rows, count);
      for (int s = 0; s < count; ++s)
        seq[static_cast<size_t>(t)].col(s) = get(streams[static_cast<size_t>(first + s)], t);
    }
    return seq;
  };
  auto get_in = [](const CovStreamSample &cs, int t) {
    return pack_covariance(cs.phis[static_cast<size_t>(t)]);
  };
  auto get_inv = [](const CovStreamSample &cs, int t) {
    return pack_covariance(cs.inv_targets[static_cast<size_t>(t)]);
  };
  auto get_vec = [](const CovStreamSample &cs, int t) {
    return pack_vector(cs.vec_targets[static_cast<size_t>(t)]);
  };
  std::vector<Mat> train_in = tensor(0, n_train, in_dim, get_in);
  std::vector<Mat> train_inv = tensor(0, n_train, in_dim, get_inv);
  std::vector<Mat> train_vec = tensor(0, n_train, vec_dim, get_vec);
  std::vector<Mat> test_in = tensor(n_train, n_test, in_dim, get_in);

  FeatureStats in_st = feature_stats(train_in);
  FeatureStats inv_st = feature_stats(train_inv);
  FeatureStats vec_st = feature_stats(train_vec);
  std::vector<Mat> s_train_in = standardized(train_in, in_st);
  std::vector<Mat> s_test_in = standardized(test_in, in_st);

  GruTrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.momentum = 0.9;
  tc.steps = 2000;
  tc.warmup_frames = warmup;

  Rng rinv = master.derive(7001);
  GruNetParams inv0 = make_gru_net(in_dim, {48, 48}, in_dim, &rinv);
  GruTrainResult inv_res =
      train_gru_supervised(inv0, s_train_in, standardized(train_inv, inv_st), tc);

  Rng rvec = master.derive(7002);
  GruNetParams vec0 = make_gru_net(in_dim, {48, 48}, vec_dim, &rvec);
  GruTrainResult vec_res =
      train_gru_supervised(vec0, s_train_in, standardized(train_vec, vec_st), tc);

  std::vector<Mat> inv_out = gru_net_forward(inv_res.params, s_test_in);
  std::vector<Mat> vec_out = gru_net_forward(vec_res.params, s_test_in);

  auto inv_error = [&](const std::function<Vec(int t, int s)> &pred) {
    double acc = 0.0;
    int n = 0;
    for (int t = warmup; t < T; ++t)
      for (int s = 0; s < n_test; ++s) {
        CMat mt = streams[static_cast<size_t>(n_train + s)]
                      .inv_targets[static_cast<size_t>(t)];
        CMat mp = unpack_matrix(pred(t, s), dim);
        acc += (mp - mt).norm() / mt.norm();
        ++n;
      }
    return acc / n;
  };
  auto vec_error = [&](const std::function<Vec(int t, int s)> &pred) {
    double acc = 0.0;
    int n = 0;
    for (int t = warmup; t < T; ++t)
      for (int s = 0; s < n_test; ++s) {
        CVec vt = streams[static_cast<size_t>(n_train + s)]
                      .vec_targets[static_cast<size_t>(t)];
        CVec vp = unpack_vector(pred(t, s));
        double c = std::abs((vp.adjoint() * vt)(0, 0)) /
                   std::max(1e-12, vp.norm() * vt.norm());
        acc += std::acos(std::min(1.0, c));
        ++n;
      }
    return acc / n;
  };

  double inv_rel = inv_error([&](int t, int s) {
    Vec raw = inv_out[static_cast<size_t>(t)].col(s);
    return Vec((raw.array() * inv_st.std.array()) + inv_st.mean.array());
  });
  double vec_ang = vec_error([&](int t, int s) {
    Vec raw = vec_out[static_cast<size_t>(t)].col(s);
    return Vec((raw.array() * vec_st.std.array()) + vec_st.mean.array());
  });

  // The same thresholds must reject a frame-independent constant predictor,
  // otherwise the task would be vacuous.
  double const_inv = inv_error([&](int, int) { return inv_st.mean; });
  double const_ang = vec_error([&](int, int) { return vec_st.mean; });

  double el = secs_since(t0);
  bool ok = inv_rel < 0.05 && vec_ang < 0.05 && const_inv >= 0.10 &&
            const_ang >= 0.10 && el < 300.0;
  report("gru-operator-learning", ok,
         fmt("held-out inverse %.3f (<0.05), angle %.4f rad (<0.05); constant "
             "baseline %.3f / %.3f rad (>=0.10 each), %.0fs (<300s)",
             inv_rel, vec_ang, const_inv, const_ang, el));
}

// ---------------------------------------------------------------------------
// Si-SNR closed forms and scale invariance.

void check_si_snr() {
  Vec ref(4), est(4);
  ref << 2, 0, 0, 0;
  est << 2, 2, 0, 0;
  double zero_err = std::abs(si_snr_db(est, ref) - 0.0);

  Vec est2(4);
  est2 << 1, 3, 0, 0;
  // Projection 0.5*ref has power 1, residual [0,3,0,0] has power 9.
  double want = 10.0 * std::log10(1.0 / 9.0);
  double closed_err = std::abs(si_snr_db(est2, ref) - want);

  double scale_err = 0.0;
  double base = si_snr_db(est2, ref);
  for (double c : {0.1, 1.0, 10.0, -1.0})
    scale_err = std::max(scale_err, std::abs(si_snr_db(Vec(c * est2), ref) - base));

  bool ok = zero_err <= 1e-9 && closed_err <= 1e-9 && scale_err <= 1e-9;
  report("si-snr-closed-forms", ok,
         fmt("0 dB case %.1e, closed form %.1e, scale sweep %.1e (all <=1e-9)",
             zero_err, closed_err, scale_err));
}

// ---------------------------------------------------------------------------
// CLI reproducibility: identical seed and config give byte-identical
// artifacts across two consecutive runs of every pipeline stage.

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string &cmd) {
  int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void check_cli_repro() {
  fs::path cli;
  for (const char *cand : {"./mcbeam", "build/mcbeam", "../build/mcbeam"}) {
    if (fs::exists(cand)) {
      cli = fs::absolute(cand);
      break;
    }
  }
  if (cli.empty()) {
    report("cli-reproducibility", false, "mcbeam binary not found");
    return;
  }
  fs::path base = fs::temp_directory_path() / "mcbeam_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  fs::path cfg = base / "config.json";
  {
    std::ofstream out(cfg);
    out << R"({
  "seed": 77,
  "mode": "mvdr-chunk",
  "estimator": "oracle-crm",
  "weight_rule": "eigenvector",
  "channels": "3ch",
  "scene": {
    "count": 1,
    "duration_s": 0.4,
    "speakers": 2,
    "rt60": [0.1, 0.25],
    "snr_db": [20, 30],
    "sir_db": [0, 4]
  }
}
)";
  }
  const std::string bin = "'" + cli.string() + "' --config '" + cfg.string() + "' ";
  auto dir = [&](const char *name) { return (base / name).string(); };

  int compared = 0, mismatched = 0, failed_cmds = 0;
  auto same = [&](const fs::path &a, const fs::path &b) {
    ++compared;
    if (!fs::exists(a) || !fs::exists(b) || slurp(a) != slurp(b)) ++mismatched;
  };

  for (const char *name : {"simA", "simB"})
    if (run_cli(bin + "simulate --out " + dir(name)) != 0) ++failed_cmds;
  same(base / "simA/manifest.json", base / "simB/manifest.json");
  for (const char *f :
       {"scene.json", "mixture.wav", "target.wav", "interference.wav", "noise.wav"})
    same(base / "simA/scene_000" / f, base / "simB/scene_000" / f);

  const std::string scene = dir("simA") + "/scene_000";
  for (const char *name : {"bfA", "bfB"})
    if (run_cli(bin + "beamform --scene " + scene + " --out " + dir(name)) != 0)
      ++failed_cmds;
  for (const char *f : {"beamform.json", "separated.wav", "weights.bin"})
    same(base / "bfA" / f, base / "bfB" / f);

  const std::string est = dir("bfA") + "/separated.wav";
  for (const char *name : {"metA", "metB"})
    if (run_cli(bin + "metrics --estimate " + est + " --scene " + scene +
                " --out " + dir(name)) != 0)
      ++failed_cmds;
  for (const char *f : {"metrics.json", "report.csv"})
    same(base / "metA" / f, base / "metB" / f);

  const std::string wts = dir("bfA") + "/weights.bin";
  const std::string meta = dir("bfA") + "/beamform.json";
  for (const char *name : {"bpA", "bpB"})
    if (run_cli(bin + "beampattern --weights " + wts + " --meta " + meta +
                " --f-hz 968 --out " + dir(name)) != 0)
      ++failed_cmds;
  for (const char *f : {"beampattern.json", "pattern.csv"})
    same(base / "bpA" / f, base / "bpB" / f);

  bool ok = failed_cmds == 0 && mismatched == 0;
  report("cli-reproducibility", ok,
         fmt("4 commands x 2 runs, %d files compared, %d mismatched, %d "
             "command failures",
             compared, mismatched, failed_cmds));
  if (ok) fs::remove_all(base);
}

}  // namespace

int main() {
  struct Entry {
    const char *name;
    void (*fn)();
  };
  const Entry entries[] = {
      {"mvdr-vs-lagrangian", check_mvdr_oracle},
      {"power-iteration-eigs", check_power_iteration},
      {"stft-roundtrip", check_stft_roundtrip},
      {"crf-reduction", check_crf_reduction},
      {"multiframe-identity", check_multiframe_identity},
      {"separation-gain", check_separation_gain},
      {"beam-pattern-null", check_beam_pattern},
      {"bptt-vs-fd", check_bptt_fd},
      {"gru-operator-learning", check_gru_operator},
      {"si-snr-closed-forms", check_si_snr},
      {"cli-reproducibility", check_cli_repro},
  };
  for (const Entry &e : entries) {
    try {
      e.fn();
    } catch (const std::exception &ex) {
      report(e.name, false, std::string("exception: ") + ex.what());
    }
  }
  if (g_failures == 0) {
    std::printf("acceptance: all %zu checks passed\n",
                sizeof(entries) / sizeof(entries[0]));
    return 0;
  }
  std::printf("acceptance: %d check(s) failed\n", g_failures);
  return 1;
}
