#include <cmath>
#include <numbers>

#include "doctest.h"
#include "jrffp/signal_sim.hpp"

using namespace jrffp;

namespace {

LoRaParams reference_lora() {
  LoRaParams p;
  p.bandwidth_hz = 125e3;
  p.spreading_factor = 7;
  p.sample_rate_hz = 1e6;
  return p;
}

ComplexBaseband tone(std::size_t n, double freq, double fs) {
  ComplexBaseband s;
  s.sample_rate_hz = fs;
  for (std::size_t k = 0; k < n; ++k) {
    const double ph = 2.0 * std::numbers::pi * freq * static_cast<double>(k) / fs;
    s.samples.emplace_back(std::cos(ph), std::sin(ph));
  }
  return s;
}

}  // namespace

TEST_CASE("symbol timing for BW 125 kHz, SF 7") {
  const auto p = reference_lora();
  CHECK(p.symbol_rate() == doctest::Approx(976.5625).epsilon(1e-12));
  CHECK(p.symbol_duration() == doctest::Approx(1.024e-3).epsilon(1e-12));
  CHECK(p.samples_per_symbol() == 1024);
}

TEST_CASE("preamble chirp shape") {
  auto p = reference_lora();
  p.amplitude = 0.7;
  const auto c = synth_preamble(p);
  REQUIRE(c.size() == 1024);
  CHECK(c.samples[0].real() == doctest::Approx(0.7));
  CHECK(c.samples[0].imag() == doctest::Approx(0.0));
  for (const auto& x : c.samples) CHECK(std::abs(x) == doctest::Approx(0.7).epsilon(1e-12));

  // Instantaneous frequency from phase increments sweeps -BW/2 .. +BW/2.
  auto inst = [&](std::size_t n) {
    return std::arg(c.samples[n + 1] * std::conj(c.samples[n])) * p.sample_rate_hz / (2 * std::numbers::pi);
  };
  CHECK(std::abs(inst(0) + p.bandwidth_hz / 2) < 0.01 * p.bandwidth_hz);
  CHECK(std::abs(inst(c.size() - 2) - p.bandwidth_hz / 2) < 0.01 * p.bandwidth_hz);
  for (std::size_t n = 1; n + 1 < c.size(); ++n) CHECK(inst(n) > inst(n - 1));
}

TEST_CASE("packet repeats the preamble symbol") {
  const auto p = reference_lora();
  Rng rng(1);
  const auto sym = synth_preamble(p);
  const auto pkt = synth_packet(p, rng);
  REQUIRE(pkt.size() == sym.size() * 8);
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t n = 0; n < sym.size(); n += 97) CHECK(pkt.samples[k * sym.size() + n] == sym.samples[n]);
}

TEST_CASE("zero impairment is the identity") {
  Rng rng(3);
  const auto s = synth_preamble(reference_lora());
  const DeviceProfile none;
  CHECK(apply_impairment(s, none, rng).samples == s.samples);
}

TEST_CASE("individual impairment stages") {
  const double fs = 1000.0;
  const auto ones = [&] {
    ComplexBaseband s;
    s.sample_rate_hz = fs;
    s.samples.assign(8, cdouble{1.0, 0.0});
    return s;
  }();
  Rng rng(5);

  SUBCASE("CFO of fs/4 rotates by j per sample") {
    DeviceProfile p;
    p.cfo_hz = fs / 4;
    const auto out = apply_impairment(ones, p, rng);
    CHECK(std::abs(out.samples[1] - cdouble(0, 1)) < 1e-12);
    CHECK(std::abs(out.samples[2] - cdouble(-1, 0)) < 1e-12);
    CHECK(std::abs(out.samples[3] - cdouble(0, -1)) < 1e-12);
  }
  SUBCASE("PA cubic term on unit magnitude") {
    DeviceProfile p;
    p.pa_cubic_coeff = 0.1;
    const auto out = apply_impairment(ones, p, rng);
    for (const auto& x : out.samples) CHECK(std::abs(x - cdouble(1.1, 0)) < 1e-12);
  }
  SUBCASE("DC offset adds a constant") {
    DeviceProfile p;
    p.dc_offset = {0.2, -0.1};
    const auto out = apply_impairment(ones, p, rng);
    for (const auto& x : out.samples) CHECK(std::abs(x - cdouble(1.2, -0.1)) < 1e-12);
  }
  SUBCASE("I/Q gain splits symmetrically in amplitude") {
    DeviceProfile p;
    p.iq_gain_db = 2.0;
    ComplexBaseband s = ones;
    s.samples.assign(4, cdouble{1.0, 1.0});
    const auto out = apply_impairment(s, p, rng);
    const double ratio_db = 20 * std::log10(out.samples[0].real() / out.samples[0].imag());
    CHECK(ratio_db == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.samples[0].real() * out.samples[0].imag() == doctest::Approx(1.0));
  }
  SUBCASE("I/Q phase skew mixes I into Q") {
    DeviceProfile p;
    p.iq_phase_rad = 0.3;
    const auto out = apply_impairment(ones, p, rng);
    CHECK(out.samples[0].real() == doctest::Approx(1.0));
    CHECK(out.samples[0].imag() == doctest::Approx(-std::sin(0.3)));
  }
  SUBCASE("phase noise keeps magnitude and walks continuously") {
    DeviceProfile p;
    p.phase_noise_std_rad = 0.01;
    ComplexBaseband s = ones;
    s.samples.assign(2000, cdouble{1.0, 0.0});
    const auto out = apply_impairment(s, p, rng);
    for (std::size_t n = 1; n < out.size(); ++n) {
      CHECK(std::abs(out.samples[n]) == doctest::Approx(1.0));
      CHECK(std::abs(std::arg(out.samples[n] * std::conj(out.samples[n - 1]))) < 0.08);
    }
  }
}

TEST_CASE("identity channel without noise is exact") {
  Rng rng(9);
  const auto s = tone(64, 50, 1000);
  CHECK(apply_channel(s, ChannelConfig::identity(), rng).samples == s.samples);
}

TEST_CASE("single delayed tap shifts the signal") {
  Rng rng(9);
  const auto s = tone(32, 50, 1000);
  ChannelConfig ch;
  ch.taps = {ChannelTap{3, {1.0, 0.0}}};
  const auto out = apply_channel(s, ch, rng);
  REQUIRE(out.size() == s.size() + 3);
  for (std::size_t n = 0; n < 3; ++n) CHECK(out.samples[n] == cdouble{});
  for (std::size_t n = 0; n < s.size(); ++n) CHECK(out.samples[n + 3] == s.samples[n]);
}

TEST_CASE("noiseless channel is linear") {
  Rng rng(2);
  const auto a = tone(40, 30, 1000);
  const auto b = tone(40, -120, 1000);
  ChannelConfig ch;
  ch.taps = {ChannelTap{0, {0.8, 0.1}}, ChannelTap{2, {0.3, -0.2}}};
  ch.doppler_shift_hz = 17;
  ComplexBaseband sum = a;
  for (std::size_t n = 0; n < sum.size(); ++n) sum.samples[n] = 2.0 * a.samples[n] - 0.5 * b.samples[n];
  const auto ya = apply_channel(a, ch, rng), yb = apply_channel(b, ch, rng), ys = apply_channel(sum, ch, rng);
  for (std::size_t n = 0; n < ys.size(); ++n)
    CHECK(std::abs(ys.samples[n] - (2.0 * ya.samples[n] - 0.5 * yb.samples[n])) < 1e-12);
}

TEST_CASE("AWGN hits the requested SNR") {
  const auto s = synth_preamble(reference_lora());
  for (double snr : {0.0, 10.0, 20.0}) {
    Rng rng(derive_seed(4, "snr", static_cast<std::uint64_t>(snr)));
    ChannelConfig ch;
    ch.snr_db = snr;
    CHECK(std::abs(measure_snr(s, apply_channel(s, ch, rng)) - snr) < 0.3);
  }
}

TEST_CASE("measure_snr on constructed noise") {
  ComplexBaseband clean, noisy;
  clean.samples.assign(100, cdouble{1.0, 0.0});
  noisy.samples = clean.samples;
  for (auto& x : noisy.samples) x += 1.0;
  CHECK(measure_snr(clean, noisy) == doctest::Approx(0.0));
  noisy.samples = clean.samples;
  for (auto& x : noisy.samples) x += 0.1;
  CHECK(measure_snr(clean, noisy) == doctest::Approx(20.0));
  CHECK_THROWS_AS(measure_snr(clean, clean), InputError);
  noisy.samples.pop_back();
  CHECK_THROWS_AS(measure_snr(clean, noisy), InputError);
}

TEST_CASE("invalid parameters are rejected") {
  auto p = reference_lora();
  p.spreading_factor = 4;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = reference_lora();
  p.sample_rate_hz = 100e3;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = reference_lora();
  p.bandwidth_hz = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  DeviceProfile d;
  d.phase_noise_std_rad = -0.1;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  ChannelConfig ch;
  ch.taps.clear();
  CHECK_THROWS_AS(ch.validate(), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(apply_impairment(ComplexBaseband{}, DeviceProfile{}, rng), InputError);
}
