#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "jrffp/dataset_store.hpp"

namespace fixtures {

/// Small LoRa setup: 64 samples per symbol, 512-sample preamble, 32x31 image.
inline jrffp::Scenario tiny_scenario(std::size_t legit = 2, std::size_t rogue = 1) {
  jrffp::Scenario s;
  s.lora.spreading_factor = 5;
  s.lora.bandwidth_hz = 125e3;
  s.lora.sample_rate_hz = 250e3;
  s.stft.window_len = 32;
  s.stft.hop = 16;
  s.stft.fft_size = 32;
  const double gains[] = {-2.0, 2.0, 0.0, -1.0, 1.0};
  const double phases[] = {0.15, -0.15, 0.0, 0.08, -0.08};
  for (std::size_t i = 0; i < legit; ++i) {
    jrffp::DeviceProfile p;
    p.device_id = "legit-" + std::to_string(i);
    p.iq_gain_db = gains[i % 5];
    p.iq_phase_rad = phases[i % 5];
    p.dc_offset = {0.05 * static_cast<double>(i % 3) - 0.05, 0.0};
    p.cfo_hz = 40.0 * static_cast<double>(i);
    s.legitimate.push_back(p);
  }
  for (std::size_t i = 0; i < rogue; ++i) {
    jrffp::DeviceProfile p;
    p.device_id = "rogue-" + std::to_string(i);
    p.iq_gain_db = 3.0 + static_cast<double>(i);
    p.iq_phase_rad = 0.25;
    p.dc_offset = {0.0, 0.08};
    s.rogue.push_back(p);
    p.device_id = "cal-rogue-" + std::to_string(i);
    p.iq_gain_db = -3.0 - static_cast<double>(i);
    s.calibration_rogue.push_back(p);
  }
  s.train_per_device = 10;
  s.test_per_device = 4;
  s.test_per_rogue = 4;
  s.calibration_per_device = 4;
  s.max_timing_offset = 8;
  s.snr_db.reset();
  return s;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("jrffp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
