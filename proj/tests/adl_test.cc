// tests/adl_test.cc

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

#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "mcbeam/adl.h"
#include "oracles.h"

using namespace mcbeam;

namespace {

MultiChannelSpectrogram random_spec(Rng *rng, const StftConfig &cfg, int channels,
                                    int frames) {
  MultiChannelSpectrogram s;
  s.cfg = cfg;
  for (int m = 0; m < channels; ++m) {
    CMat ch(frames, cfg.bin_count());
    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < cfg.bin_count(); ++f) ch(t, f) = rng->cnormal();
    s.channels.push_back(ch);
  }
  return s;
}

// Nets whose recurrent state stays at zero (all gate parameters zero), so the
// output is the constant head bias regardless of the input.
GruNetParams constant_net(int input, int hidden, const Vec &bias) {
  GruNetParams net;
  GruLayerParams layer;
  layer.Wz = layer.Wr = layer.Wh = Mat::Zero(hidden, input);
  layer.Uz = layer.Ur = layer.Uh = Mat::Zero(hidden, hidden);
  layer.bz = layer.br = layer.bh = Vec::Zero(hidden);
  net.layers = {layer};
  net.Wo = Mat::Zero(bias.size(), hidden);
  net.bo = bias;
  return net;
}

}  // namespace

TEST_CASE("packing layout: real block then imaginary block, column-major") {
  CMat m(2, 2);
  m << cplx(1, 5), cplx(3, 7), cplx(2, 6), cplx(4, 8);
  Vec p = pack_covariance(m);
  REQUIRE(p.size() == 8);
  // Column-major real part 1,2,3,4 then imaginary 5,6,7,8.
  for (int i = 0; i < 8; ++i) CHECK(p(i) == doctest::Approx(i + 1.0));
  CMat back = unpack_matrix(p, 2);
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

  CVec v(3);
  v << cplx(1, -1), cplx(2, -2), cplx(3, -3);
  Vec pv = pack_vector(v);
  REQUIRE(pv.size() == 6);
  CHECK(pv(0) == 1.0);
  CHECK(pv(3) == -1.0);
  CVec vb = unpack_vector(pv);
  CHECK((vb - v).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(unpack_matrix(Vec::Zero(7), 2), DimensionError);
  CHECK_THROWS_AS(unpack_vector(Vec::Zero(5)), DimensionError);
  CHECK_THROWS_AS(pack_covariance(CMat::Zero(2, 3)), DimensionError);
}

TEST_CASE("presets pin the dimension chain") {
  AdlMvdrConfig mc = AdlMvdrConfig::preset("mc-15ch");
  CHECK(mc.mode == CovLayout::kMC);
  CHECK(mc.channels == 15);
  CHECK(mc.dim() == 15);
  CHECK(mc.input_size() == 450);
  CHECK(mc.inv_output_size() == 450);
  CHECK(mc.v_output_size() == 30);
  CHECK(mc.inv_hidden == std::vector<int>{500, 500});
  CHECK(mc.v_hidden == std::vector<int>{500, 250});
  CHECK(mc.reference_channel == 7);
  mc.validate();

  AdlMvdrConfig mf = AdlMvdrConfig::preset("mf-l5");
  CHECK(mf.mode == CovLayout::kMF);
  CHECK(mf.l1 == 3);
  CHECK(mf.l2 == 2);
  CHECK(mf.dim() == 5);
  CHECK(mf.input_size() == 50);
  CHECK(mf.inv_output_size() == 50);
  CHECK(mf.v_output_size() == 10);
  CHECK(mf.inv_hidden == std::vector<int>{128, 128});
  CHECK(mf.v_hidden == std::vector<int>{128, 128});
  mf.validate();

  AdlMvdrConfig mcmf = AdlMvdrConfig::preset("mcmf-9ch-3fr");
  CHECK(mcmf.mode == CovLayout::kMCMF);
  CHECK(mcmf.channels == 9);
  CHECK(mcmf.l1 == 2);
  CHECK(mcmf.l2 == 1);
  CHECK(mcmf.dim() == 27);
  CHECK(mcmf.input_size() == 1458);
  CHECK(mcmf.inv_output_size() == 1458);
  CHECK(mcmf.v_output_size() == 54);
  mcmf.validate();

  CHECK_THROWS_AS(AdlMvdrConfig::preset("nope"), ConfigError);
  AdlMvdrConfig bad;
  bad.l1 = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  AdlMvdrConfig bad2;
  bad2.channels = 0;
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
}

TEST_CASE("frame-level weights match the hand formula and satisfy the constraint") {
  Rng rng(501);
  const int F = 3, T = 4, D = 3;
  CoefficientStream cs;
  cs.vhat.assign(F, CMat(D, T));
  cs.inv.assign(F, std::vector<CMat>(T));
  for (int f = 0; f < F; ++f)
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) cs.vhat[f](d, t) = rng.cnormal();
      CMat a(D, D);
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) a(i, j) = rng.cnormal();
      cs.inv[f][t] = a * a.adjoint() / D + 0.1 * CMat::Identity(D, D);
    }

  std::vector<std::pair<int, int>> flagged;
  BeamformerWeights w = adl_weights(cs, CovLayout::kMC, &flagged);
  CHECK(flagged.empty());
  REQUIRE(w.bins() == F);
  REQUIRE(w.frames() == T);
  for (int f = 0; f < F; ++f)
    for (int t = 0; t < T; ++t) {
      CVec v = cs.vhat[f].col(t);
      CVec num = cs.inv[f][t] * v;
      CVec want = num / (v.adjoint() * num)(0, 0);
      CHECK((w.w[f].col(t) - want).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs((w.w[f].col(t).adjoint() * v)(0, 0) - cplx(1, 0)) < 1e-6);
    }
}

TEST_CASE("degenerate denominators fall back to the previous frame") {
  const int D = 2;
  CoefficientStream cs;
  cs.vhat.assign(1, CMat(D, 3));
  cs.inv.assign(1, std::vector<CMat>(3));

  // t=0 healthy, t=1 degenerate (P v orthogonal to v), t=2 healthy.
  cs.vhat[0].col(0) = CVec::Ones(D);
  cs.inv[0][0] = CMat::Identity(D, D);
  cs.vhat[0].col(1) << cplx(1, 0), cplx(0, 0);
  CMat p = CMat::Zero(D, D);
  p(1, 1) = 1.0;  // P e1 = 0
  cs.inv[0][1] = p;
  cs.vhat[0].col(2) << cplx(0, 0), cplx(2, 0);
  cs.inv[0][2] = CMat::Identity(D, D);

  std::vector<std::pair<int, int>> flagged;
  BeamformerWeights w = adl_weights(cs, CovLayout::kMC, &flagged);
  REQUIRE(flagged.size() == 1);
  CHECK(flagged[0] == std::pair<int, int>(0, 1));
  CHECK((w.w[0].col(1) - w.w[0].col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::abs(w.w[0](1, 2) - cplx(0.5, 0.0)) < 1e-12);

  // Degenerate at t=0 has no previous frame: weights start at zero.
  CoefficientStream cs0;
  cs0.vhat.assign(1, CMat(D, 1));
  cs0.vhat[0].col(0) << cplx(1, 0), cplx(0, 0);
  cs0.inv.assign(1, {p});
  std::vector<std::pair<int, int>> flagged0;
  BeamformerWeights w0 = adl_weights(cs0, CovLayout::kMC, &flagged0);
  REQUIRE(flagged0.size() == 1);
  CHECK(w0.w[0].col(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stacking: passthrough, reference frames, channel-major product") {
  Rng rng(502);
  StftConfig cfg;
  MultiChannelSpectrogram spec = random_spec(&rng, cfg, 2, 5);

  AdlMvdrConfig mc;
  mc.mode = CovLayout::kMC;
  mc.channels = 2;
  MultiChannelSpectrogram s1 = stack_for_mode(spec, mc);
  CHECK(s1.channel_count() == 2);
  CHECK((s1.channels[0] - spec.channels[0]).cwiseAbs().maxCoeff() == 0.0);

  AdlMvdrConfig mf;
  mf.mode = CovLayout::kMF;
  mf.channels = 2;
  mf.reference_channel = 1;
  mf.l1 = 2;
  mf.l2 = 1;
  MultiChannelSpectrogram s2 = stack_for_mode(spec, mf);
  REQUIRE(s2.channel_count() == 3);
  // Row order: oldest past frame first, current at index l1-1, future last.
  CHECK(std::abs(s2.channels[0](2, 5) - spec.channels[1](1, 5)) == 0.0);
  CHECK(std::abs(s2.channels[1](2, 5) - spec.channels[1](2, 5)) == 0.0);
  CHECK(std::abs(s2.channels[2](2, 5) - spec.channels[1](3, 5)) == 0.0);

  AdlMvdrConfig mcmf;
  mcmf.mode = CovLayout::kMCMF;
  mcmf.channels = 2;
  mcmf.l1 = 2;
  mcmf.l2 = 0;
  MultiChannelSpectrogram s3 = stack_for_mode(spec, mcmf);
  REQUIRE(s3.channel_count() == 4);
  // Channel-major within each frame tap: [ch0@t-1, ch1@t-1, ch0@t, ch1@t].
  CHECK(std::abs(s3.channels[0](2, 7) - spec.channels[0](1, 7)) == 0.0);
  CHECK(std::abs(s3.channels[1](2, 7) - spec.channels[1](1, 7)) == 0.0);
  CHECK(std::abs(s3.channels[2](2, 7) - spec.channels[0](2, 7)) == 0.0);
  CHECK(std::abs(s3.channels[3](2, 7) - spec.channels[1](2, 7)) == 0.0);

  AdlMvdrConfig wrong = mc;
  wrong.channels = 3;
  CHECK_THROWS_AS(stack_for_mode(spec, wrong), DimensionError);
}

TEST_CASE("packed covariance inputs are frame-normalized outer products") {
  Rng rng(503);
  StftConfig cfg;
  MultiChannelSpectrogram spec = random_spec(&rng, cfg, 2, 3);
  std::vector<Mat> inputs = packed_covariance_inputs(spec);
  REQUIRE(inputs.size() == 3);
  CHECK(inputs[0].rows() == 8);
  CHECK(inputs[0].cols() == cfg.bin_count());
  int f = 11, t = 2;
  CVec s(2);
  s << spec.channels[0](t, f), spec.channels[1](t, f);
  Vec want = pack_covariance((s * s.adjoint()) / 3.0);
  CHECK((inputs[t].col(f) - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("coefficient nets run causally over the stream") {
  Rng rng(504);
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  const int T = 6, M = 2;
  MultiChannelSpectrogram mix = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram speech = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram undesired = random_spec(&rng, cfg, M, T);

  AdlMvdrConfig acfg;
  acfg.mode = CovLayout::kMC;
  acfg.channels = M;
  acfg.inv_hidden = {6};
  acfg.v_hidden = {6};
  Rng seed_inv(505), seed_v(506);
  GruNetParams inv_net =
      make_gru_net(acfg.input_size(), acfg.inv_hidden, acfg.inv_output_size(), &seed_inv);
  GruNetParams v_net =
      make_gru_net(acfg.input_size(), acfg.v_hidden, acfg.v_output_size(), &seed_v);

  MultiChannelSpectrogram out = adl_mvdr_separate(mix, speech, undesired, inv_net,
                                                  v_net, acfg);
  REQUIRE(out.channel_count() == 1);
  REQUIRE(out.frame_count() == T);

  // Rewriting the last frame of every input leaves earlier outputs
  // bit-identical: the estimate at t reads nothing past t.
  MultiChannelSpectrogram mix2 = mix, speech2 = speech, undesired2 = undesired;
  for (int m = 0; m < M; ++m)
    for (int f = 0; f < cfg.bin_count(); ++f) {
      mix2.channels[m](T - 1, f) = rng.cnormal();
      speech2.channels[m](T - 1, f) = rng.cnormal();
      undesired2.channels[m](T - 1, f) = rng.cnormal();
    }
  MultiChannelSpectrogram out2 = adl_mvdr_separate(mix2, speech2, undesired2, inv_net,
                                                   v_net, acfg);
  for (int t = 0; t < T - 1; ++t)
    for (int f = 0; f < cfg.bin_count(); ++f)
      CHECK(out2.channels[0](t, f) == out.channels[0](t, f));

  // Covariance normalization differs with T, so the last frame must change.
  CHECK((out2.channels[0].row(T - 1) - out.channels[0].row(T - 1))
            .cwiseAbs()
            .maxCoeff() > 0.0);
}

TEST_CASE("single-tap stack reduces the product mode to plain multi-channel") {
  Rng rng(507);
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  const int T = 5, M = 2;
  MultiChannelSpectrogram mix = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram speech = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram undesired = random_spec(&rng, cfg, M, T);

  AdlMvdrConfig mc;
  mc.mode = CovLayout::kMC;
  mc.channels = M;
  mc.inv_hidden = {5};
  mc.v_hidden = {5};
  AdlMvdrConfig mcmf = mc;
  mcmf.mode = CovLayout::kMCMF;
  mcmf.l1 = 1;
  mcmf.l2 = 0;

  Rng seed_inv(508), seed_v(509);
  GruNetParams inv_net =
      make_gru_net(mc.input_size(), mc.inv_hidden, mc.inv_output_size(), &seed_inv);
  GruNetParams v_net =
      make_gru_net(mc.input_size(), mc.v_hidden, mc.v_output_size(), &seed_v);

  MultiChannelSpectrogram a = adl_mvdr_separate(mix, speech, undesired, inv_net,
                                                v_net, mc);
  MultiChannelSpectrogram b = adl_mvdr_separate(mix, speech, undesired, inv_net,
                                                v_net, mcmf);
  CHECK((a.channels[0] - b.channels[0]).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("single-frame filter with unit coefficients passes the reference through") {
  Rng rng(510);
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  const int T = 4, M = 2;
  MultiChannelSpectrogram mix = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram speech = random_spec(&rng, cfg, M, T);
  MultiChannelSpectrogram undesired = random_spec(&rng, cfg, M, T);

  AdlMvdrConfig mf;
  mf.mode = CovLayout::kMF;
  mf.channels = M;
  mf.reference_channel = 1;
  mf.l1 = 1;
  mf.l2 = 0;

  Vec inv_bias(2);
  inv_bias << 1.0, 0.0;  // 1x1 inverse = 1
  Vec v_bias(2);
  v_bias << 1.0, 0.0;  // gamma = 1
  GruNetParams inv_net = constant_net(mf.input_size(), 4, inv_bias);
  GruNetParams v_net = constant_net(mf.input_size(), 4, v_bias);

  MultiChannelSpectrogram out = adl_mvdr_separate(mix, speech, undesired, inv_net,
                                                  v_net, mf);
  CHECK((out.channels[0] - mix.channels[1]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("negative scale-invariant snr: closed forms and invariances") {
  Vec est(2), ref(2);
  est << 1.0, 1.0;
  ref << 1.0, 0.0;
  CHECK(std::abs(si_snr_loss(est, ref)) < 1e-9);

  // Orthogonal noise at known power: alpha = 1, signal 4, residual 8, so the
  // metric is -3.01 dB and the loss +3.01.
  Vec r2(4), e2(4);
  r2 << 1, 1, 1, 1;
  e2 << 3, -1, 1, 1;  // r2 + [2,-2,0,0], noise orthogonal to r2
  double want = -10.0 * std::log10(4.0 / 8.0);
  CHECK(std::abs(si_snr_loss(e2, r2) - want) < 1e-9);

  for (double c : {0.1, 1.0, 10.0, -1.0})
    CHECK(std::abs(si_snr_loss(c * e2, r2) - si_snr_loss(e2, r2)) < 1e-9);

  // Perfect up to scale: residual guarded, loss at the -160 dB ceiling.
  CHECK(si_snr_loss(2.0 * r2, r2) == doctest::Approx(-160.0));

  TimeSignal empty;
  empty.samples.resize(0, 0);
  CHECK_THROWS_AS(si_snr_loss(empty, empty), DimensionError);
  TimeSignal silent;
  silent.samples = Mat::Zero(1, 16);
  CHECK_THROWS_AS(si_snr_loss(silent, silent), ConfigError);
}

TEST_CASE("end-to-end loss gradients match finite differences") {
  Rng rng(511);
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  const int T = 4, D = 2;
  const int F = cfg.bin_count();

  MultiChannelSpectrogram mix = random_spec(&rng, cfg, D, T);
  // Real synthesis expects conjugate-symmetric-compatible spectra; the chain
  // zeroes DC/Nyquist imaginary parts itself, inputs can stay generic.
  std::vector<Mat> speech_in(T, Mat(2 * D * D, F));
  std::vector<Mat> undesired_in(T, Mat(2 * D * D, F));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < 2 * D * D; ++i)
      for (int f = 0; f < F; ++f) {
        speech_in[t](i, f) = 0.5 * rng.normal();
        undesired_in[t](i, f) = 0.5 * rng.normal();
      }
  int ref_len = (T - 1) * cfg.hop_length + cfg.window_length;
  Vec reference(ref_len);
  for (int i = 0; i < ref_len; ++i) reference(i) = rng.normal();

  Rng seed_inv(512), seed_v(513);
  GruNetParams inv_net = make_gru_net(2 * D * D, {4}, 2 * D * D, &seed_inv);
  GruNetParams v_net = make_gru_net(2 * D * D, {4}, 2 * D, &seed_v);

  GruGradients inv_g = zero_gradients(inv_net);
  GruGradients v_g = zero_gradients(v_net);
  double loss = adl_end_to_end_loss(inv_net, v_net, speech_in, undesired_in, mix,
                                    reference, cfg, &inv_g, &v_g);
  CHECK(std::isfinite(loss));

  // Central differences over a deterministic parameter sample in both nets.
  auto eval = [&]() {
    return adl_end_to_end_loss(inv_net, v_net, speech_in, undesired_in, mix,
                               reference, cfg, nullptr, nullptr);
  };
  const double eps = 1e-6;
  auto check_param = [&](double *p, double analytic) {
    double keep = *p;
    *p = keep + eps;
    double up = eval();
    *p = keep - eps;
    double down = eval();
    *p = keep;
    double fd = (up - down) / (2.0 * eps);
    CHECK(std::abs(fd - analytic) / std::max(1e-5, std::abs(fd) + std::abs(analytic)) <
          1e-3);
  };
  for (int k = 0; k < 10; ++k) {
    int i = k % inv_net.layers[0].Wz.size();
    check_param(inv_net.layers[0].Wz.data() + i, inv_g.layers[0].Wz(i));
    check_param(v_net.layers[0].Wh.data() + i % v_net.layers[0].Wh.size(),
                v_g.layers[0].Wh(i % v_net.layers[0].Wh.size()));
  }
  for (int k = 0; k < 4; ++k) {
    check_param(inv_net.bo.data() + (k * 3) % inv_net.bo.size(),
                inv_g.bo((k * 3) % inv_net.bo.size()));
    check_param(v_net.bo.data() + k % v_net.bo.size(), v_g.bo(k % v_net.bo.size()));
    check_param(inv_net.Wo.data() + (k * 7) % inv_net.Wo.size(),
                inv_g.Wo((k * 7) % inv_net.Wo.size()));
  }
}

TEST_CASE("fine tuning lowers the objective") {
  Rng rng(514);
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.window_length = 16;
  cfg.hop_length = 8;
  const int T = 4, D = 2;
  const int F = cfg.bin_count();

  MultiChannelSpectrogram mix = random_spec(&rng, cfg, D, T);
  std::vector<Mat> speech_in(T, Mat(2 * D * D, F));
  std::vector<Mat> undesired_in(T, Mat(2 * D * D, F));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < 2 * D * D; ++i)
      for (int f = 0; f < F; ++f) {
        speech_in[t](i, f) = 0.5 * rng.normal();
        undesired_in[t](i, f) = 0.5 * rng.normal();
      }
  // Reference: what the mixture's first channel synthesizes to, so the task
  // is attainable and the loss has room to move.
  MultiChannelSpectrogram ref_spec;
  ref_spec.cfg = cfg;
  ref_spec.channels = {mix.channels[0]};
  for (int t = 0; t < T; ++t) {
    ref_spec.channels[0](t, 0) = ref_spec.channels[0](t, 0).real();
    ref_spec.channels[0](t, F - 1) = ref_spec.channels[0](t, F - 1).real();
  }
  TimeSignal ref_sig = istft(ref_spec, cfg);
  Vec reference = ref_sig.samples.row(0).transpose();

  Rng seed_inv(515), seed_v(516);
  GruNetParams inv_net = make_gru_net(2 * D * D, {4}, 2 * D * D, &seed_inv);
  GruNetParams v_net = make_gru_net(2 * D * D, {4}, 2 * D, &seed_v);

  GruTrainConfig train;
  train.learning_rate = 1e-3;
  train.momentum = 0.9;
  train.steps = 30;
  AdlFineTuneResult r = adl_fine_tune(inv_net, v_net, speech_in, undesired_in, mix,
                                      reference, cfg, train);
  REQUIRE(static_cast<int>(r.loss_history.size()) == train.steps);
  CHECK(r.loss_history.back() < r.loss_history.front());
}

TEST_CASE("synthetic covariance streams carry consistent targets") {
  SyntheticCovConfig cfg;
  cfg.dim = 2;
  cfg.frames = 8;
  cfg.k_snapshots = 32;

  Rng a(517), b(517), c(518);
  CovStreamSample s1 = make_synthetic_cov_stream(cfg, &a);
  CovStreamSample s2 = make_synthetic_cov_stream(cfg, &b);
  CovStreamSample s3 = make_synthetic_cov_stream(cfg, &c);

  REQUIRE(static_cast<int>(s1.phis.size()) == cfg.frames);
  REQUIRE(static_cast<int>(s1.inv_targets.size()) == cfg.frames);
  REQUIRE(static_cast<int>(s1.vec_targets.size()) == cfg.frames);

  // Determinism in the seed, variation across seeds.
  for (int t = 0; t < cfg.frames; ++t)
    CHECK((s1.phis[t] - s2.phis[t]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1.phis[0] - s3.phis[0]).cwiseAbs().maxCoeff() > 0.0);

  // Inputs Hermitian and comfortably positive (diagonal load 0.5).
  for (int t = 0; t < cfg.frames; ++t) {
    CHECK((s1.phis[t] - s1.phis[t].adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s1.phis[t].trace().real() > cfg.diag_load);
  }

  // Targets follow the exponentially smoothed running covariance.
  CMat rec = s1.phis[0];
  for (int t = 0; t < cfg.frames; ++t) {
    if (t > 0) rec = cfg.forgetting * rec + (1.0 - cfg.forgetting) * s1.phis[t];
    CMat want_inv = regularized_inverse(rec, cfg.loading);
    CHECK((s1.inv_targets[t] - want_inv).cwiseAbs().maxCoeff() < 1e-10);
    EigResult want_vec = principal_eigenvector((rec + rec.adjoint()) / 2.0);
    CHECK((s1.vec_targets[t] - want_vec.vec).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(s1.vec_targets[t].norm() - 1.0) < 1e-12);
  }
}
