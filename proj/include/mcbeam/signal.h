// include/mcbeam/signal.h

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

#ifndef MCBEAM_SIGNAL_H_
#define MCBEAM_SIGNAL_H_

#include <string>
#include <vector>

#include "mcbeam/common.h"

namespace mcbeam {

enum class WindowKind { kHann, kSqrtHann, kRect };

struct StftConfig {
  int fft_size = 512;
  int window_length = 512;   // 32 ms at 16 kHz
  int hop_length = 256;      // 16 ms at 16 kHz
  WindowKind window_kind = WindowKind::kHann;
  int sample_rate = 16000;

  int bin_count() const { return fft_size / 2 + 1; }
  void validate() const;  // throws ConfigError on violated bounds
};

// Periodic window of the given kind; length window_length.
Vec make_window(WindowKind kind, int length);

// Multichannel time-domain signal. samples: M x n, one row per channel.
struct TimeSignal {
  Mat samples;
  int sample_rate = 16000;

  int channels() const { return static_cast<int>(samples.rows()); }
  Eigen::Index length() const { return samples.cols(); }
};

// One complex T x F matrix per channel; frames advance by cfg.hop_length,
// frame t covers samples [t*hop, t*hop + window_length).
struct MultiChannelSpectrogram {
  std::vector<CMat> channels;  // each T x F
  StftConfig cfg;

  int channel_count() const { return static_cast<int>(channels.size()); }
  int frame_count() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int bin_count() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
};

// Forward frame transform, one-sided spectrum (F = fft_size/2 + 1).
// Edge frames are zero-padded; frame count is ceil(n / hop).
MultiChannelSpectrogram stft(const TimeSignal &signal, const StftConfig &cfg);

// Weighted overlap-add inverse with window-envelope division. The envelope is
// floored at max(1e-8, 1e-2 * peak) so edge samples, where the analysis
// windows taper off, cannot amplify leakage from modified spectra. Returns
// (T-1)*hop + window_length samples; pass trim_length > 0 to cut or
// zero-extend to an exact length.
TimeSignal istft(const MultiChannelSpectrogram &spec, const StftConfig &cfg,
                 Eigen::Index trim_length = 0);

// WAV I/O: 16-bit PCM and 32-bit IEEE float, mono or multichannel.
TimeSignal read_wav(const std::string &path);
enum class WavEncoding { kPcm16, kFloat32 };
void write_wav(const TimeSignal &signal, const std::string &path,
               WavEncoding enc = WavEncoding::kFloat32);

// Debug dump: little-endian header int64 M, T, F then channel-major frames,
// each bin as interleaved real/imag 64-bit floats.
void write_spectrogram(const MultiChannelSpectrogram &spec, const std::string &path);
MultiChannelSpectrogram read_spectrogram(const std::string &path);

// Real-input FFT helpers shared by stft and the convolution paths.
// rfft: n real samples -> n/2+1 one-sided complex bins (unnormalized).
// irfft: inverse with 1/n normalization, returns n real samples.
CVec rfft(const Vec &x, int n);
Vec irfft(const CVec &bins, int n);

// Full linear convolution via FFT, output length a.size() + b.size() - 1.
Vec fft_convolve(const Vec &a, const Vec &b);

}  // namespace mcbeam

#endif  // MCBEAM_SIGNAL_H_
