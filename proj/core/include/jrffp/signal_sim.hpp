#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jrffp/common.hpp"

namespace jrffp {

/// LoRa chirp parameters. Rs = BW / 2^SF, T = 1 / Rs.
struct LoRaParams {
  double bandwidth_hz = 125e3;
  int spreading_factor = 7;
  double sample_rate_hz = 1e6;
  double amplitude = 1.0;
  int preamble_count = 8;

  double symbol_rate() const { return bandwidth_hz / static_cast<double>(1 << spreading_factor); }
  double symbol_duration() const { return 1.0 / symbol_rate(); }
  /// floor(T * fs).
  std::size_t samples_per_symbol() const;

  /// Throws ConfigError if any invariant is violated.
  void validate() const;
};

/// Transmitter hardware impairments. Every field at zero is the identity.
struct DeviceProfile {
  std::string device_id;
  double cfo_hz = 0.0;
  double iq_gain_db = 0.0;
  double iq_phase_rad = 0.0;
  double pa_cubic_coeff = 0.0;
  cdouble dc_offset{0.0, 0.0};
  double phase_noise_std_rad = 0.0;

  void validate() const;
};

struct ChannelTap {
  std::size_t delay = 0;  // samples
  cdouble gain{1.0, 0.0};
};

struct ChannelConfig {
  std::vector<ChannelTap> taps{ChannelTap{}};
  double doppler_shift_hz = 0.0;
  std::optional<double> snr_db;  // nullopt = noiseless

  static ChannelConfig identity() { return {}; }
  std::size_t max_delay() const;
  void validate() const;
};

struct ComplexBaseband {
  std::vector<cdouble> samples;
  double sample_rate_hz = 1.0;

  std::size_t size() const { return samples.size(); }
  /// Nonempty and all samples finite, else InputError.
  void validate() const;
};

/// One upchirp O(t) = M exp(j pi t (-BW + BW Rs t)), t = n / fs, over [0, T).
ComplexBaseband synth_preamble(const LoRaParams& params);

/// preamble_count identical repeats of synth_preamble. The rng is accepted
/// for interface symmetry; the ideal packet is deterministic.
ComplexBaseband synth_packet(const LoRaParams& params, Rng& rng);

/// Transmitter chain, applied in order: PA cubic term, I/Q imbalance,
/// DC offset, CFO rotation, cumulative phase-noise walk.
ComplexBaseband apply_impairment(const ComplexBaseband& signal, const DeviceProfile& profile,
                                 Rng& rng);

/// Tapped-delay-line convolution (output grows by the max tap delay), then a
/// constant Doppler rotation, then AWGN referenced to the faded signal power.
ComplexBaseband apply_channel(const ComplexBaseband& signal, const ChannelConfig& channel,
                              Rng& rng);

/// 10 log10(P_clean / P_(noisy - clean)).
double measure_snr(const ComplexBaseband& clean, const ComplexBaseband& noisy);

double mean_power(const std::vector<cdouble>& samples);

}  // namespace jrffp
