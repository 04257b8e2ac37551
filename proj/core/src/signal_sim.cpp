#include "jrffp/signal_sim.hpp"

#include <cmath>
#include <numbers>

namespace jrffp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

std::size_t LoRaParams::samples_per_symbol() const {
  const double exact = std::ldexp(sample_rate_hz / bandwidth_hz, spreading_factor);
  return static_cast<std::size_t>(std::floor(exact + 1e-9));
}

void LoRaParams::validate() const {
  if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz))
    throw ConfigError("lora.bandwidth_hz must be positive");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw ConfigError("lora.sample_rate_hz must be positive");
  if (sample_rate_hz < bandwidth_hz)
    throw ConfigError("lora.sample_rate_hz must be >= lora.bandwidth_hz");
  if (spreading_factor < 5 || spreading_factor > 12)
    throw ConfigError("lora.spreading_factor must lie in [5, 12]");
  if (!(amplitude > 0.0) || !std::isfinite(amplitude))
    throw ConfigError("lora.amplitude must be positive");
  if (preamble_count < 1) throw ConfigError("lora.preamble_count must be positive");
}

void DeviceProfile::validate() const {
  if (!(phase_noise_std_rad >= 0.0))
    throw ConfigError("device '" + device_id + "': phase_noise_std_rad must be >= 0");
  for (double v : {cfo_hz, iq_gain_db, iq_phase_rad, pa_cubic_coeff, dc_offset.real(),
                   dc_offset.imag(), phase_noise_std_rad})
    if (!std::isfinite(v))
      throw ConfigError("device '" + device_id + "': impairment fields must be finite");
}

std::size_t ChannelConfig::max_delay() const {
  std::size_t d = 0;
  for (const auto& t : taps) d = std::max(d, t.delay);
  return d;
}

void ChannelConfig::validate() const {
  if (taps.empty()) throw ConfigError("channel needs at least one tap");
  bool any_nonzero = false;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (i > 0 && taps[i].delay <= taps[i - 1].delay)
      throw ConfigError("channel tap delays must be strictly increasing");
    if (taps[i].gain != cdouble{}) any_nonzero = true;
  }
  if (!any_nonzero) throw ConfigError("channel tap gains are all zero");
  if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("channel snr_db must be finite");
}

void ComplexBaseband::validate() const {
  if (samples.empty()) throw InputError("signal is empty");
  for (const auto& s : samples)
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
      throw InputError("signal contains non-finite samples");
}

double mean_power(const std::vector<cdouble>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) acc += std::norm(s);
  return acc / static_cast<double>(samples.size());
}

ComplexBaseband synth_preamble(const LoRaParams& params) {
  params.validate();
  const std::size_t len = params.samples_per_symbol();
  const double bw = params.bandwidth_hz;
  const double rs = params.symbol_rate();
  const double fs = params.sample_rate_hz;

  ComplexBaseband out;
  out.sample_rate_hz = fs;
  out.samples.resize(len);
  for (std::size_t n = 0; n < len; ++n) {
    const double t = static_cast<double>(n) / fs;
    const double phase = std::numbers::pi * t * (-bw + bw * rs * t);
    out.samples[n] = params.amplitude * cdouble{std::cos(phase), std::sin(phase)};
  }
  return out;
}

ComplexBaseband synth_packet(const LoRaParams& params, Rng& /*rng*/) {
  const ComplexBaseband symbol = synth_preamble(params);
  ComplexBaseband out;
  out.sample_rate_hz = symbol.sample_rate_hz;
  out.samples.reserve(symbol.size() * static_cast<std::size_t>(params.preamble_count));
  for (int k = 0; k < params.preamble_count; ++k)
    out.samples.insert(out.samples.end(), symbol.samples.begin(), symbol.samples.end());
  return out;
}

ComplexBaseband apply_impairment(const ComplexBaseband& signal, const DeviceProfile& profile,
                                 Rng& rng) {
  if (signal.samples.empty()) throw InputError("apply_impairment: signal is empty");
  profile.validate();

  ComplexBaseband out = signal;
  auto& s = out.samples;
  const double fs = signal.sample_rate_hz;

  if (profile.pa_cubic_coeff != 0.0) {
    for (auto& x : s) x += profile.pa_cubic_coeff * x * std::norm(x);
  }

  if (profile.iq_gain_db != 0.0 || profile.iq_phase_rad != 0.0) {
    const double gi = std::pow(10.0, profile.iq_gain_db / 40.0);
    const double gq = std::pow(10.0, -profile.iq_gain_db / 40.0);
    const double c = std::cos(profile.iq_phase_rad);
    const double sn = std::sin(profile.iq_phase_rad);
    for (auto& x : s) {
      const double i = x.real();
      const double q = x.imag();
      x = {gi * i, gq * (q * c - i * sn)};
    }
  }

  if (profile.dc_offset != cdouble{}) {
    for (auto& x : s) x += profile.dc_offset;
  }

  if (profile.cfo_hz != 0.0) {
    const double w = kTwoPi * profile.cfo_hz / fs;
    for (std::size_t n = 0; n < s.size(); ++n) {
      const double ph = w * static_cast<double>(n);
      s[n] *= cdouble{std::cos(ph), std::sin(ph)};
    }
  }

  if (profile.phase_noise_std_rad > 0.0) {
    double theta = 0.0;
    for (auto& x : s) {
      theta += rng.normal() * profile.phase_noise_std_rad;
      x *= cdouble{std::cos(theta), std::sin(theta)};
    }
  }
  return out;
}

ComplexBaseband apply_channel(const ComplexBaseband& signal, const ChannelConfig& channel,
                              Rng& rng) {
  if (signal.samples.empty()) throw InputError("apply_channel: signal is empty");
  channel.validate();

  const std::size_t n_in = signal.size();
  ComplexBaseband out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.assign(n_in + channel.max_delay(), cdouble{});
  for (const auto& tap : channel.taps) {
    for (std::size_t n = 0; n < n_in; ++n) out.samples[n + tap.delay] += tap.gain * signal.samples[n];
  }

  if (channel.doppler_shift_hz != 0.0) {
    const double w = kTwoPi * channel.doppler_shift_hz / signal.sample_rate_hz;
    for (std::size_t n = 0; n < out.size(); ++n) {
      const double ph = w * static_cast<double>(n);
      out.samples[n] *= cdouble{std::cos(ph), std::sin(ph)};
    }
  }

  if (channel.snr_db) {
    const double p_sig = mean_power(out.samples);
    const double variance = p_sig / std::pow(10.0, *channel.snr_db / 10.0);
    for (auto& x : out.samples) x += rng.complex_normal(variance);
  }
  return out;
}

double measure_snr(const ComplexBaseband& clean, const ComplexBaseband& noisy) {
  if (clean.size() != noisy.size()) throw InputError("measure_snr: length mismatch");
  double p_clean = 0.0;
  double p_noise = 0.0;
  for (std::size_t n = 0; n < clean.size(); ++n) {
    p_clean += std::norm(clean.samples[n]);
    p_noise += std::norm(noisy.samples[n] - clean.samples[n]);
  }
  if (p_noise == 0.0) throw InputError("measure_snr: signals are identical (zero noise power)");
  return 10.0 * std::log10(p_clean / p_noise);
}

}  // namespace jrffp
