#include "jrffp/dsp_frontend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

namespace jrffp {

void StftConfig::validate() const {
  if (window_len == 0) throw ConfigError("stft.window_len must be positive");
  if (hop == 0) throw ConfigError("stft.hop must be positive");
  if (hop > window_len) throw ConfigError("stft.hop must not exceed stft.window_len");
  if (fft_size < window_len) throw ConfigError("stft.fft_size must be >= stft.window_len");
  if (!std::has_single_bit(fft_size)) throw ConfigError("stft.fft_size must be a power of two");
  if (top_db && !(std::isfinite(*top_db) && *top_db > 0.0)) throw ConfigError("stft.top_db must be positive");
}

std::size_t StftConfig::frame_count(std::size_t signal_len) const {
  if (signal_len < window_len) return 0;
  return (signal_len - window_len) / hop + 1;
}

std::vector<double> make_window(WindowKind kind, std::size_t len) {
  std::vector<double> w(len, 1.0);
  if (kind == WindowKind::hann) {
    for (std::size_t n = 0; n < len; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(len));
  }
  return w;
}

void fft_inplace(std::vector<cdouble>& a) {
  const std::size_t n = a.size();
  if (!std::has_single_bit(n)) throw InputError("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double ph = ang * static_cast<double>(k);
      const cdouble w{std::cos(ph), std::sin(ph)};
      for (std::size_t i = k; i < n; i += len) {
        const cdouble u = a[i];
        const cdouble v = a[i + half] * w;
        a[i] = u + v;
        a[i + half] = u - v;
      }
    }
  }
}

std::size_t synchronize(const ComplexBaseband& signal, const LoRaParams& params) {
  const ComplexBaseband tpl = synth_preamble(params);
  const std::size_t l = tpl.size();
  const std::size_t n = signal.size();
  if (n < l) throw InputError("synchronize: signal shorter than one preamble symbol");

  const std::size_t full = l * static_cast<std::size_t>(params.preamble_count);
  const std::size_t last = n >= full ? n - full : n - l;

  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t off = 0; off <= last; ++off) {
    cdouble acc{};
    for (std::size_t k = 0; k < l; ++k) acc += signal.samples[off + k] * std::conj(tpl.samples[k]);
    const double mag = std::norm(acc);
    if (mag > best_mag) {
      best_mag = mag;
      best = off;
    }
  }
  return best;
}

double estimate_cfo(const ComplexBaseband& signal, const LoRaParams& params) {
  const std::size_t l = params.samples_per_symbol();
  if (l == 0 || signal.size() < 2 * l)
    throw InputError("estimate_cfo: need at least two preamble symbols");
  const std::size_t symbols = signal.size() / l;
  const std::size_t span = (symbols - 1) * l;
  cdouble acc{};
  for (std::size_t k = 0; k < span; ++k)
    acc += std::conj(signal.samples[k]) * signal.samples[k + l];
  return std::arg(acc) * signal.sample_rate_hz / (2.0 * std::numbers::pi * static_cast<double>(l));
}

ComplexBaseband compensate_cfo(const ComplexBaseband& signal, double cfo_hz) {
  ComplexBaseband out = signal;
  if (cfo_hz == 0.0) return out;
  const double w = -2.0 * std::numbers::pi * cfo_hz / signal.sample_rate_hz;
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double ph = w * static_cast<double>(n);
    out.samples[n] *= cdouble{std::cos(ph), std::sin(ph)};
  }
  return out;
}

ComplexBaseband normalize(const ComplexBaseband& signal) {
  const double p = mean_power(signal.samples);
  if (!(p > 0.0)) throw InputError("normalize: signal has zero power");
  ComplexBaseband out = signal;
  const double scale = 1.0 / std::sqrt(p);
  for (auto& s : out.samples) s *= scale;
  return out;
}

ComplexMatrix stft(const ComplexBaseband& signal, const StftConfig& config) {
  config.validate();
  if (signal.size() < config.window_len)
    throw InputError("stft: signal shorter than the analysis window");

  const std::vector<double> w = make_window(config.window, config.window_len);
  const std::size_t frames = config.frame_count(signal.size());
  const std::size_t nfft = config.fft_size;
  const std::size_t half = nfft / 2;

  ComplexMatrix out;
  out.rows = nfft;
  out.cols = frames;
  out.data.assign(nfft * frames, cdouble{});

  std::vector<cdouble> buf(nfft);
  for (std::size_t k = 0; k < frames; ++k) {
    std::fill(buf.begin(), buf.end(), cdouble{});
    const std::size_t start = k * config.hop;
    for (std::size_t n = 0; n < config.window_len; ++n) buf[n] = signal.samples[start + n] * w[n];
    fft_inplace(buf);
    for (std::size_t r = 0; r < nfft; ++r) out.at(r, k) = buf[(r + half) % nfft];
  }
  return out;
}

Spectrogram to_db_spectrogram(const ComplexMatrix& m) {
  Spectrogram s;
  s.freq_bins = m.rows;
  s.time_frames = m.cols;
  s.values.resize(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i)
    s.values[i] = 10.0 * std::log10(std::norm(m.data[i]) + kDbFloor);
  return s;
}

void clip_dynamic_range(Spectrogram& s, double top_db) {
  if (s.values.empty()) return;
  const double floor = *std::max_element(s.values.begin(), s.values.end()) - top_db;
  for (double& v : s.values) v = std::max(v, floor);
}

Spectrogram preprocess_packet(const ComplexBaseband& signal, const LoRaParams& params,
                              const StftConfig& config, const PreprocessOptions& options) {
  params.validate();
  config.validate();
  const std::size_t offset = synchronize(signal, params);
  const std::size_t len =
      params.samples_per_symbol() * static_cast<std::size_t>(params.preamble_count);
  if (offset + len > signal.size())
    throw InputError("preprocess_packet: signal too short to hold the preamble after sync");

  ComplexBaseband preamble;
  preamble.sample_rate_hz = signal.sample_rate_hz;
  preamble.samples.assign(signal.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                          signal.samples.begin() + static_cast<std::ptrdiff_t>(offset + len));

  if (options.compensate_cfo && params.preamble_count >= 2)
    preamble = compensate_cfo(preamble, estimate_cfo(preamble, params));
  preamble = normalize(preamble);
  Spectrogram out = to_db_spectrogram(stft(preamble, config));
  if (config.top_db) clip_dynamic_range(out, *config.top_db);
  return out;
}

std::pair<std::size_t, std::size_t> spectrogram_shape(const LoRaParams& params,
                                                      const StftConfig& config) {
  const std::size_t len =
      params.samples_per_symbol() * static_cast<std::size_t>(params.preamble_count);
  return {config.fft_size, config.frame_count(len)};
}

}  // namespace jrffp
