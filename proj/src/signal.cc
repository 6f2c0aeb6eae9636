// src/signal.cc

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

#include "mcbeam/signal.h"

#include <fftw3.h>

#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace mcbeam {

void StftConfig::validate() const {
  if (fft_size <= 0 || window_length <= 0 || hop_length <= 0)
    throw ConfigError("stft config: sizes must be positive");
  if (fft_size % 2 != 0)
    throw ConfigError("stft config: fft_size must be even");
  if (!(hop_length <= window_length && window_length <= fft_size))
    throw ConfigError("stft config: need hop <= window <= fft_size");
  if (sample_rate <= 0)
    throw ConfigError("stft config: sample_rate must be positive");
}

Vec make_window(WindowKind kind, int length) {
  if (length <= 0) throw ConfigError("window length must be positive");
  Vec w(length);
  switch (kind) {
    case WindowKind::kRect:
      w.setOnes();
      break;
    case WindowKind::kHann:
    case WindowKind::kSqrtHann:
      // Periodic form: w[n] = 0.5 - 0.5 cos(2 pi n / N). Shifted copies at
      // hop N/2 sum to exactly 1.
      for (int n = 0; n < length; ++n)
        w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / length);
      if (kind == WindowKind::kSqrtHann) w = w.cwiseSqrt();
      break;
  }
  return w;
}

namespace {

// One FFTW plan pair per transform size. FFTW planning and execution on the
// cached buffers are serialized by a global mutex; plans use FFTW_ESTIMATE so
// planning never reads the buffers.
struct PlanEntry {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  double *real = nullptr;
  fftw_complex *cpx = nullptr;
};

std::mutex g_fft_mutex;
std::map<int, PlanEntry> g_plans;

PlanEntry &plan_for(int n) {
  auto it = g_plans.find(n);
  if (it != g_plans.end()) return it->second;
  PlanEntry e;
  e.real = fftw_alloc_real(n);
  e.cpx = fftw_alloc_complex(n / 2 + 1);
  e.fwd = fftw_plan_dft_r2c_1d(n, e.real, e.cpx, FFTW_ESTIMATE);
  e.bwd = fftw_plan_dft_c2r_1d(n, e.cpx, e.real, FFTW_ESTIMATE);
  return g_plans.emplace(n, e).first->second;
}

}  // namespace

CVec rfft(const Vec &x, int n) {
  if (n <= 0 || n % 2 != 0) throw ConfigError("rfft: n must be positive and even");
  if (x.size() > n) throw DimensionError("rfft: input longer than transform");
  std::lock_guard<std::mutex> lock(g_fft_mutex);
  PlanEntry &e = plan_for(n);
  std::memset(e.real, 0, sizeof(double) * n);
  std::memcpy(e.real, x.data(), sizeof(double) * x.size());
  fftw_execute(e.fwd);
  CVec out(n / 2 + 1);
  std::memcpy(out.data(), e.cpx, sizeof(cplx) * (n / 2 + 1));
  return out;
}

Vec irfft(const CVec &bins, int n) {
  if (n <= 0 || n % 2 != 0) throw ConfigError("irfft: n must be positive and even");
  if (bins.size() != n / 2 + 1) throw DimensionError("irfft: bin count mismatch");
  std::lock_guard<std::mutex> lock(g_fft_mutex);
  PlanEntry &e = plan_for(n);
  std::memcpy(e.cpx, bins.data(), sizeof(cplx) * (n / 2 + 1));
  fftw_execute(e.bwd);  // c2r destroys e.cpx; unnormalized
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = e.real[i] / n;
  return out;
}

Vec fft_convolve(const Vec &a, const Vec &b) {
  if (a.size() == 0 || b.size() == 0) throw DimensionError("fft_convolve: empty input");
  Eigen::Index out_len = a.size() + b.size() - 1;
  int nfft = 2;
  while (nfft < out_len) nfft *= 2;
  CVec fa = rfft(a, nfft);
  CVec fb = rfft(b, nfft);
  Vec full = irfft(fa.cwiseProduct(fb), nfft);
  return full.head(out_len);
}

MultiChannelSpectrogram stft(const TimeSignal &signal, const StftConfig &cfg) {
  cfg.validate();
  if (signal.channels() == 0 || signal.length() == 0)
    throw ConfigError("stft: empty signal");
  const int win = cfg.window_length, hop = cfg.hop_length, F = cfg.bin_count();
  const Eigen::Index n = signal.length();
  const int T = static_cast<int>((n + hop - 1) / hop);
  Vec w = make_window(cfg.window_kind, win);

  MultiChannelSpectrogram out;
  out.cfg = cfg;
  out.cfg.sample_rate = signal.sample_rate;
  out.channels.reserve(signal.channels());
  Vec frame(win);
  for (int m = 0; m < signal.channels(); ++m) {
    CMat spec(T, F);
    for (int t = 0; t < T; ++t) {
      Eigen::Index start = static_cast<Eigen::Index>(t) * hop;
      Eigen::Index avail = std::min<Eigen::Index>(win, n - start);
      frame.setZero();
      if (avail > 0) frame.head(avail) = signal.samples.row(m).segment(start, avail);
      frame.array() *= w.array();
      spec.row(t) = rfft(frame, cfg.fft_size);
    }
    out.channels.push_back(std::move(spec));
  }
  return out;
}

TimeSignal istft(const MultiChannelSpectrogram &spec, const StftConfig &cfg,
                 Eigen::Index trim_length) {
  cfg.validate();
  if (spec.channel_count() == 0 || spec.frame_count() == 0)
    throw DimensionError("istft: empty spectrogram");
  if (spec.bin_count() != cfg.bin_count())
    throw DimensionError("istft: bin count does not match config");
  if (spec.cfg.fft_size != cfg.fft_size || spec.cfg.hop_length != cfg.hop_length ||
      spec.cfg.window_length != cfg.window_length || spec.cfg.window_kind != cfg.window_kind)
    throw DimensionError("istft: spectrogram config mismatch");
  const int win = cfg.window_length, hop = cfg.hop_length;
  const int T = spec.frame_count(), M = spec.channel_count();
  const Eigen::Index span = static_cast<Eigen::Index>(T - 1) * hop + win;
  Vec w = make_window(cfg.window_kind, win);

  TimeSignal out;
  out.sample_rate = spec.cfg.sample_rate;
  out.samples = Mat::Zero(M, span);
  Vec wsum = Vec::Zero(span);
  for (int t = 0; t < T; ++t)
    wsum.segment(static_cast<Eigen::Index>(t) * hop, win).array() += w.array().square();
  // Relative floor: near the edges the envelope decays to zero, and dividing
  // modified (non-roundtrip) spectra there would amplify leakage into spikes.
  double floor = std::max(1e-8, 1e-2 * wsum.maxCoeff());
  Vec env = wsum.cwiseMax(floor);

  for (int m = 0; m < M; ++m) {
    for (int t = 0; t < T; ++t) {
      Vec frame = irfft(spec.channels[m].row(t), cfg.fft_size);
      out.samples.row(m).segment(static_cast<Eigen::Index>(t) * hop, win).array() +=
          frame.head(win).array() * w.array();
    }
    out.samples.row(m).array() /= env.transpose().array();
  }
  if (trim_length > 0) {
    Mat trimmed = Mat::Zero(M, trim_length);
    Eigen::Index keep = std::min(trim_length, span);
    trimmed.leftCols(keep) = out.samples.leftCols(keep);
    out.samples = std::move(trimmed);
  }
  return out;
}

namespace {

void put_u32(std::string &s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string &s, uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char *p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t get_u16(const unsigned char *p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_wav(const TimeSignal &signal, const std::string &path, WavEncoding enc) {
  if (signal.channels() == 0 || signal.length() == 0)
    throw IoError("write_wav: empty signal");
  if (!signal.samples.allFinite())
    throw NumericError("write_wav: non-finite samples");
  const int M = signal.channels();
  const Eigen::Index n = signal.length();
  const uint16_t fmt = (enc == WavEncoding::kPcm16) ? 1 : 3;
  const uint16_t bits = (enc == WavEncoding::kPcm16) ? 16 : 32;
  const uint32_t bytes_per_frame = M * bits / 8;
  const uint32_t data_bytes = static_cast<uint32_t>(n * bytes_per_frame);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, fmt);
  put_u16(out, static_cast<uint16_t>(M));
  put_u32(out, static_cast<uint32_t>(signal.sample_rate));
  put_u32(out, static_cast<uint32_t>(signal.sample_rate) * bytes_per_frame);
  put_u16(out, static_cast<uint16_t>(bytes_per_frame));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int m = 0; m < M; ++m) {
      double v = signal.samples(m, i);
      if (enc == WavEncoding::kPcm16) {
        double scaled = std::max(-1.0, std::min(1.0, v)) * 32767.0;
        int16_t q = static_cast<int16_t>(std::lrint(scaled));
        out.push_back(static_cast<char>(q & 0xff));
        out.push_back(static_cast<char>((q >> 8) & 0xff));
      } else {
        float fv = static_cast<float>(v);
        uint32_t u;
        std::memcpy(&u, &fv, 4);
        put_u32(out, u);
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_wav: short write to " + path);
}

TimeSignal read_wav(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const unsigned char *p = reinterpret_cast<const unsigned char *>(raw.data());
  if (raw.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw IoError("read_wav: not a RIFF/WAVE file: " + path);

  uint16_t fmt = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t off = 12;
  while (off + 8 <= raw.size()) {
    uint32_t chunk_len = get_u32(p + off + 4);
    const char *id = raw.data() + off;
    size_t body = off + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > raw.size()) throw IoError("read_wav: truncated fmt chunk");
      fmt = get_u16(p + body);
      channels = get_u16(p + body + 2);
      rate = get_u32(p + body + 4);
      bits = get_u16(p + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      break;
    }
    off = body + chunk_len + (chunk_len & 1);
  }
  if (data_off == 0) throw IoError("read_wav: missing data chunk");
  if (channels == 0 || rate == 0) throw IoError("read_wav: missing fmt chunk");
  if (data_off + data_len > raw.size()) throw IoError("read_wav: truncated data chunk");
  const bool pcm16 = (fmt == 1 && bits == 16);
  const bool f32 = (fmt == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw IoError("read_wav: unsupported encoding (fmt " + std::to_string(fmt) + ", " +
                  std::to_string(bits) + " bit)");
  const size_t frame_bytes = channels * (bits / 8u);
  const size_t n = data_len / frame_bytes;
  if (n == 0) throw IoError("read_wav: empty data chunk");

  TimeSignal sig;
  sig.sample_rate = static_cast<int>(rate);
  sig.samples.resize(channels, static_cast<Eigen::Index>(n));
  const unsigned char *d = p + data_off;
  for (size_t i = 0; i < n; ++i) {
    for (int m = 0; m < channels; ++m) {
      if (pcm16) {
        int16_t q = static_cast<int16_t>(get_u16(d));
        sig.samples(m, static_cast<Eigen::Index>(i)) = q / 32768.0;
        d += 2;
      } else {
        uint32_t u = get_u32(d);
        float fv;
        std::memcpy(&fv, &u, 4);
        sig.samples(m, static_cast<Eigen::Index>(i)) = fv;
        d += 4;
      }
    }
  }
  return sig;
}

void write_spectrogram(const MultiChannelSpectrogram &spec, const std::string &path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_spectrogram: cannot open " + path);
  int64_t hdr[3] = {spec.channel_count(), spec.frame_count(), spec.bin_count()};
  f.write(reinterpret_cast<const char *>(hdr), sizeof(hdr));
  std::vector<double> row(2 * spec.bin_count());
  for (const CMat &ch : spec.channels) {
    for (int t = 0; t < spec.frame_count(); ++t) {
      for (int k = 0; k < spec.bin_count(); ++k) {
        row[2 * k] = ch(t, k).real();
        row[2 * k + 1] = ch(t, k).imag();
      }
      f.write(reinterpret_cast<const char *>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * row.size()));
    }
  }
  if (!f) throw IoError("write_spectrogram: short write to " + path);
}

MultiChannelSpectrogram read_spectrogram(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_spectrogram: cannot open " + path);
  int64_t hdr[3];
  f.read(reinterpret_cast<char *>(hdr), sizeof(hdr));
  if (!f || hdr[0] <= 0 || hdr[1] <= 0 || hdr[2] <= 0)
    throw IoError("read_spectrogram: bad header in " + path);
  MultiChannelSpectrogram spec;
  const int M = static_cast<int>(hdr[0]), T = static_cast<int>(hdr[1]), F = static_cast<int>(hdr[2]);
  spec.cfg.fft_size = 2 * (F - 1);
  spec.cfg.window_length = spec.cfg.fft_size;
  spec.cfg.hop_length = spec.cfg.fft_size / 2;
  std::vector<double> row(2 * F);
  for (int m = 0; m < M; ++m) {
    CMat ch(T, F);
    for (int t = 0; t < T; ++t) {
      f.read(reinterpret_cast<char *>(row.data()),
             static_cast<std::streamsize>(sizeof(double) * row.size()));
      if (!f) throw IoError("read_spectrogram: truncated body in " + path);
      for (int k = 0; k < F; ++k) ch(t, k) = cplx(row[2 * k], row[2 * k + 1]);
    }
    spec.channels.push_back(std::move(ch));
  }
  return spec;
}

}  // namespace mcbeam
