// src/room.cc

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

#include "mcbeam/room.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcbeam {

double ArrayGeometry::pair_spacing(int a, int b) const {
  if (a < 0 || b < 0 || a >= channels() || b >= channels())
    throw ConfigError("pair_spacing: channel index out of range");
  return mic_positions(a, 0) - mic_positions(b, 0);
}

ArrayGeometry ArrayGeometry::linear(int mics, double pitch_m) {
  if (mics < 1 || pitch_m <= 0.0) throw ConfigError("linear array: bad mic count or pitch");
  ArrayGeometry g;
  g.mic_positions = Mat::Zero(mics, 3);
  double mid = 0.5 * (mics - 1);
  for (int m = 0; m < mics; ++m) g.mic_positions(m, 0) = (m - mid) * pitch_m;
  g.reference_channel = mics / 2;
  return g;
}

ArrayGeometry ArrayGeometry::linear15() {
  ArrayGeometry g = linear(15, 0.02);
  g.reference_channel = 7;
  return g;
}

Mat ArrayScene::mic_world_positions(const ArrayGeometry &geometry) const {
  double a = orientation_deg * kPi / 180.0;
  Eigen::Matrix3d rot;
  rot << std::cos(a), -std::sin(a), 0.0,
         std::sin(a),  std::cos(a), 0.0,
         0.0,          0.0,         1.0;
  Mat world = geometry.mic_positions * rot.transpose();
  world.rowwise() += array_center.transpose();
  return world;
}

void ArrayScene::validate(const ArrayGeometry &geometry) const {
  if ((room_dims.array() <= 0.0).any())
    throw ConfigError("scene: room dimensions must be positive");
  if (rt60 < 0.0 || rt60 > 1.0)
    throw ConfigError("scene: rt60 must lie in [0, 1] s");
  if (source_positions.empty())
    throw ConfigError("scene: at least one source required");
  if (target_index < 0 || target_index >= source_count())
    throw ConfigError("scene: target_index out of range");
  auto inside = [this](const Eigen::Vector3d &p) {
    return (p.array() > 0.0).all() && (p.array() < room_dims.array()).all();
  };
  for (const auto &p : source_positions)
    if (!inside(p)) throw ConfigError("scene: source outside room");
  Mat mics = mic_world_positions(geometry);
  for (Eigen::Index m = 0; m < mics.rows(); ++m)
    if (!inside(mics.row(m).transpose()))
      throw ConfigError("scene: microphone outside room");
}

namespace {

// Uniform wall reflection coefficient for the requested decay time.
// Eyring: alpha = 1 - exp(-0.161 V / (S T)), beta = sqrt(1 - alpha).
double wall_beta(const Eigen::Vector3d &L, double rt60) {
  if (rt60 <= 1e-9) return 0.0;
  double V = L.x() * L.y() * L.z();
  double S = 2.0 * (L.x() * L.y() + L.x() * L.z() + L.y() * L.z());
  double alpha = 1.0 - std::exp(-0.161 * V / (S * rt60));
  return std::sqrt(1.0 - alpha);
}

constexpr int kSincTaps = 8;

// Image-method RIR for one source/mic pair, distances in samples (meters/cTs).
void image_rir(const Eigen::Vector3d &src, const Eigen::Vector3d &mic,
               const Eigen::Vector3d &L, double beta, int n_samples, int max_order,
               double cTs, double *out) {
  const int n1 = static_cast<int>(std::ceil(n_samples / (2.0 * L.x())));
  const int n2 = static_cast<int>(std::ceil(n_samples / (2.0 * L.y())));
  const int n3 = static_cast<int>(std::ceil(n_samples / (2.0 * L.z())));
  const int max_exp = 2 * std::max({n1, n2, n3}) + 1;
  std::vector<double> bpow(static_cast<size_t>(max_exp) + 1);
  bpow[0] = 1.0;
  for (int i = 1; i <= max_exp; ++i) bpow[i] = bpow[i - 1] * beta;

  double lpi[kSincTaps];
  for (int mx = -n1; mx <= n1; ++mx) {
    const double rmx = 2.0 * mx * L.x();
    for (int q = 0; q <= 1; ++q) {
      const double px = (1 - 2 * q) * src.x() - mic.x() + rmx;
      const double rx = bpow[std::abs(mx - q)] * bpow[std::abs(mx)];
      const int ox = std::abs(2 * mx - q);
      if (beta == 0.0 && ox > 0) continue;
      for (int my = -n2; my <= n2; ++my) {
        const double rmy = 2.0 * my * L.y();
        for (int j = 0; j <= 1; ++j) {
          const double py = (1 - 2 * j) * src.y() - mic.y() + rmy;
          const double rxy = rx * bpow[std::abs(my - j)] * bpow[std::abs(my)];
          const int oxy = ox + std::abs(2 * my - j);
          if (beta == 0.0 && oxy > 0) continue;
          for (int mz = -n3; mz <= n3; ++mz) {
            const double rmz = 2.0 * mz * L.z();
            for (int k = 0; k <= 1; ++k) {
              const int order = oxy + std::abs(2 * mz - k);
              if (max_order >= 0 && order > max_order) continue;
              if (beta == 0.0 && order > 0) continue;
              const double pz = (1 - 2 * k) * src.z() - mic.z() + rmz;
              const double dist = std::sqrt(px * px + py * py + pz * pz);
              const double fdist = std::floor(dist);
              if (fdist >= n_samples) continue;
              const double refl = rxy * bpow[std::abs(mz - k)] * bpow[std::abs(mz)];
              const double gain = refl / (4.0 * kPi * dist * cTs);
              for (int n = 0; n < kSincTaps; ++n) {
                const double t = (n - 0.5 * kSincTaps + 1) - (dist - fdist);
                const double s = (t == 0.0) ? 1.0 : std::sin(kPi * t) / (kPi * t);
                lpi[n] = 0.5 * (1.0 + std::cos(2.0 * kPi * t / kSincTaps)) * s;
              }
              const int start = static_cast<int>(fdist) - kSincTaps / 2 + 1;
              for (int n = 0; n < kSincTaps; ++n) {
                const int pos = start + n;
                if (pos >= 0 && pos < n_samples) out[pos] += gain * lpi[n];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

RirSet simulate_rir(const ArrayScene &scene, const ArrayGeometry &geometry,
                    int sample_rate, int max_order) {
  scene.validate(geometry);
  if (sample_rate <= 0) throw ConfigError("simulate_rir: bad sample rate");
  const double cTs = kSoundSpeed / sample_rate;
  Mat mics = scene.mic_world_positions(geometry);
  const int M = geometry.channels();

  double max_dist = 0.0;
  for (const auto &s : scene.source_positions)
    for (int m = 0; m < M; ++m)
      max_dist = std::max(max_dist, (s - mics.row(m).transpose()).norm());
  int n_samples = static_cast<int>(std::lround(scene.rt60 * sample_rate));
  n_samples = std::max(n_samples, static_cast<int>(std::ceil(max_dist / cTs)) + kSincTaps + 2);

  const double beta = wall_beta(scene.room_dims, scene.rt60);
  const Eigen::Vector3d L = scene.room_dims / cTs;

  RirSet set;
  set.sample_rate = sample_rate;
  set.rirs.reserve(scene.source_positions.size());
  Vec buf(n_samples);  // contiguous scratch; Mat rows are strided
  for (const auto &src : scene.source_positions) {
    Mat rir = Mat::Zero(M, n_samples);
    Eigen::Vector3d s = src / cTs;
    for (int m = 0; m < M; ++m) {
      Eigen::Vector3d r = mics.row(m).transpose() / cTs;
      buf.setZero();
      image_rir(s, r, L, beta, n_samples, max_order, cTs, buf.data());
      rir.row(m) = buf.transpose();
    }
    set.rirs.push_back(std::move(rir));
  }
  return set;
}

Vec scene_doa(const ArrayScene &scene, const ArrayGeometry &geometry) {
  double a = scene.orientation_deg * kPi / 180.0;
  Eigen::Vector3d axis(std::cos(a), std::sin(a), 0.0);
  Vec doa(scene.source_count());
  for (int s = 0; s < scene.source_count(); ++s) {
    Eigen::Vector3d d = scene.source_positions[s] - scene.array_center;
    double n = d.norm();
    if (n < 1e-9) throw ConfigError("scene_doa: source coincides with array center");
    double c = std::clamp(axis.dot(d) / n, -1.0, 1.0);
    doa[s] = std::acos(c) * 180.0 / kPi;
  }
  return doa;
}

TimeSignal make_test_source(Rng &rng, double seconds, int sample_rate) {
  if (seconds <= 0.0) throw ConfigError("make_test_source: bad duration");
  const Eigen::Index n = static_cast<Eigen::Index>(seconds * sample_rate);
  Vec x = Vec::Zero(n);
  double f0 = rng.uniform(110.0, 220.0);
  double drift = rng.uniform(-20.0, 20.0);       // Hz per second
  double am_rate = rng.uniform(2.0, 5.0);        // syllabic envelope
  double am_phase = rng.uniform(0.0, 2.0 * kPi);
  const int harmonics = 10;
  Vec amp(harmonics);
  for (int h = 0; h < harmonics; ++h) amp[h] = rng.uniform(0.3, 1.0) / (1.0 + h);
  double phase[harmonics];
  for (int h = 0; h < harmonics; ++h) phase[h] = rng.uniform(0.0, 2.0 * kPi);

  const double dt = 1.0 / sample_rate;
  double f = f0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double tsec = i * dt;
    f = f0 + drift * tsec;
    double env = 0.55 + 0.45 * std::sin(2.0 * kPi * am_rate * tsec + am_phase);
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      phase[h] += 2.0 * kPi * f * (h + 1) * dt;
      v += amp[h] * std::sin(phase[h]);
    }
    x[i] = env * v + 0.02 * rng.normal();
  }
  double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.0) x /= peak / 0.7;

  TimeSignal out;
  out.sample_rate = sample_rate;
  out.samples = x.transpose();
  return out;
}

TimeSignal make_white_noise(Rng &rng, int channels, Eigen::Index length, int sample_rate) {
  if (channels < 1 || length < 1) throw ConfigError("make_white_noise: bad shape");
  TimeSignal out;
  out.sample_rate = sample_rate;
  out.samples.resize(channels, length);
  for (int m = 0; m < channels; ++m)
    for (Eigen::Index i = 0; i < length; ++i) out.samples(m, i) = rng.normal();
  return out;
}

namespace {

// Reverberant image of one mono dry source at every mic, via FFT convolution.
Mat convolve_source(const Vec &dry, const Mat &rir) {
  const Eigen::Index out_len = dry.size() + rir.cols() - 1;
  Mat out(rir.rows(), out_len);
  int nfft = 2;
  while (nfft < out_len) nfft *= 2;
  CVec fdry = rfft(dry, nfft);
  for (Eigen::Index m = 0; m < rir.rows(); ++m) {
    CVec fr = rfft(rir.row(m).transpose(), nfft);
    out.row(m) = irfft(fdry.cwiseProduct(fr), nfft).head(out_len).transpose();
  }
  return out;
}

}  // namespace

MixtureComponents synthesize_mixture(const ArrayScene &scene, const ArrayGeometry &geometry,
                                     const std::vector<TimeSignal> &dry_sources,
                                     const TimeSignal &noise,
                                     const RirSet *precomputed_rirs) {
  scene.validate(geometry);
  if (dry_sources.size() != scene.source_positions.size())
    throw DimensionError("synthesize_mixture: one dry source per scene source required");
  if (dry_sources.empty() || dry_sources.size() > 3)
    throw ConfigError("synthesize_mixture: 1 to 3 sources supported");
  for (const auto &d : dry_sources)
    if (d.channels() != 1 || d.length() == 0)
      throw ConfigError("synthesize_mixture: dry sources must be non-empty mono");

  const int fs = dry_sources[0].sample_rate;
  RirSet local;
  const RirSet *rirs = precomputed_rirs;
  if (rirs == nullptr) {
    local = simulate_rir(scene, geometry, fs);
    rirs = &local;
  }
  if (rirs->sample_rate != fs)
    throw ConfigError("synthesize_mixture: RIR/source sample rate mismatch");

  const int M = geometry.channels();
  const int ref = geometry.reference_channel;
  Eigen::Index len = 0;
  std::vector<Mat> reverb(dry_sources.size());
  for (size_t s = 0; s < dry_sources.size(); ++s) {
    reverb[s] = convolve_source(dry_sources[s].samples.row(0).transpose(), rirs->rirs[s]);
    len = std::max(len, reverb[s].cols());
  }

  Mat target = Mat::Zero(M, len);
  target.leftCols(reverb[scene.target_index].cols()) = reverb[scene.target_index];
  double target_energy = target.row(ref).squaredNorm();
  if (target_energy <= 0.0)
    throw ConfigError("synthesize_mixture: silent target");

  Mat interf = Mat::Zero(M, len);
  for (size_t s = 0; s < dry_sources.size(); ++s) {
    if (static_cast<int>(s) == scene.target_index) continue;
    interf.leftCols(reverb[s].cols()) += reverb[s];
  }
  double interf_energy = interf.row(ref).squaredNorm();
  if (interf_energy > 0.0) {
    double scale = std::sqrt(target_energy / (interf_energy * std::pow(10.0, scene.sir_db / 10.0)));
    interf *= scale;
  }

  Mat noise_part = Mat::Zero(M, len);
  if (std::isfinite(scene.snr_db)) {
    Mat nraw;
    if (noise.length() > 0) {
      if (noise.channels() != 1 && noise.channels() != M)
        throw DimensionError("synthesize_mixture: noise must have 1 or M channels");
      nraw.resize(M, len);
      for (int m = 0; m < M; ++m) {
        int src_row = (noise.channels() == 1) ? 0 : m;
        for (Eigen::Index i = 0; i < len; ++i)
          nraw(m, i) = noise.samples(src_row, i % noise.length());
      }
    } else {
      Rng nrng = Rng(scene.seed).derive(0x6e6f6973ull);  // noise stream
      nraw = make_white_noise(nrng, M, len, fs).samples;
    }
    double noise_energy = nraw.row(ref).squaredNorm();
    if (noise_energy <= 0.0) throw ConfigError("synthesize_mixture: silent noise input");
    double scale = std::sqrt(target_energy / (noise_energy * std::pow(10.0, scene.snr_db / 10.0)));
    noise_part = nraw * scale;
  }

  MixtureComponents out;
  out.target.sample_rate = fs;
  out.target.samples = std::move(target);
  out.interference.sample_rate = fs;
  out.interference.samples = std::move(interf);
  out.noise.sample_rate = fs;
  out.noise.samples = std::move(noise_part);
  out.mixture.sample_rate = fs;
  out.mixture.samples = out.target.samples + out.interference.samples + out.noise.samples;
  return out;
}

}  // namespace mcbeam
