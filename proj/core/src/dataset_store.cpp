#include "jrffp/dataset_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

namespace jrffp {

std::pair<std::size_t, std::size_t> DatasetSplit::shape() const {
  if (items.empty()) return {0, 0};
  return {items.front().spectrogram.freq_bins, items.front().spectrogram.time_frames};
}

void DatasetSplit::validate(bool training) const {
  const auto s = shape();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& sp = items[i].spectrogram;
    if (sp.freq_bins != s.first || sp.time_frames != s.second)
      throw InputError("dataset item " + std::to_string(i) + " has a different spectrogram shape");
    if (sp.values.size() != sp.freq_bins * sp.time_frames)
      throw InputError("dataset item " + std::to_string(i) + " has inconsistent dimensions");
    const Label l = items[i].label;
    if (l == kRogue) {
      if (training) throw InputError("training split contains a ROGUE item at index " + std::to_string(i));
    } else if (l < 0 || static_cast<std::size_t>(l) >= identity_count) {
      throw InputError("dataset item " + std::to_string(i) + " has label " + std::to_string(l) +
                       " outside [0, " + std::to_string(identity_count) + ")");
    }
  }
}

const Spectrogram& EnrollmentDb::at(Label identity) const {
  auto it = entries.find(identity);
  if (it == entries.end())
    throw ConfigError("no enrollment entry for identity " + std::to_string(identity));
  return it->second;
}

void AugmentationConfig::validate() const {
  if (max_taps < 1) throw ConfigError("augmentation.max_taps must be >= 1");
  if (max_tap_spacing < 1) throw ConfigError("augmentation.max_tap_spacing must be >= 1");
  if (!(decay_samples > 0.0)) throw ConfigError("augmentation.decay_samples must be positive");
  if (doppler_max_hz < doppler_min_hz)
    throw ConfigError("augmentation.doppler_max_hz must be >= doppler_min_hz");
  if (snr_min_db.has_value() != snr_max_db.has_value())
    throw ConfigError("augmentation.snr_min_db and snr_max_db must be set together");
  if (snr_min_db && !(std::isfinite(*snr_min_db) && std::isfinite(*snr_max_db) && *snr_min_db <= *snr_max_db))
    throw ConfigError("augmentation.snr_max_db must be >= snr_min_db, both finite");
}

void Scenario::validate() const {
  lora.validate();
  stft.validate();
  augmentation.validate();
  if (legitimate.empty()) throw ConfigError("scenario.legitimate must list at least one device");
  std::set<std::string> ids;
  auto check = [&](const std::vector<DeviceProfile>& list) {
    for (const auto& d : list) {
      d.validate();
      if (d.device_id.empty()) throw ConfigError("device_id must be nonempty");
      if (!ids.insert(d.device_id).second)
        throw ConfigError("device_id '" + d.device_id + "' is defined more than once");
    }
  };
  check(legitimate);
  check(rogue);
  check(calibration_rogue);
  if (train_per_device == 0) throw ConfigError("dataset.train_per_device must be positive");
  const auto [f, t] = spectrogram_shape(lora, stft);
  if (f == 0 || t == 0) throw ConfigError("stft window longer than the preamble");
}

const char* split_name(SplitKind kind) {
  switch (kind) {
    case SplitKind::train: return "train";
    case SplitKind::test: return "test";
    case SplitKind::calibration: return "calibration";
  }
  return "?";
}

ChannelConfig augment_channel(Rng& rng, const AugmentationConfig& config) {
  ChannelConfig ch;
  if (!config.enabled) return ch;
  const auto taps = 1 + rng.uniform_index(static_cast<std::uint64_t>(config.max_taps));
  ch.taps.clear();
  std::size_t delay = 0;
  for (std::uint64_t k = 0; k < taps; ++k) {
    if (k > 0) delay += 1 + rng.uniform_index(config.max_tap_spacing);
    const double mag = std::sqrt(std::exp(-static_cast<double>(delay) / config.decay_samples));
    const double phase = k == 0 ? 0.0 : rng.uniform(-std::numbers::pi, std::numbers::pi);
    ch.taps.push_back({delay, std::polar(mag, phase)});
  }
  ch.doppler_shift_hz = rng.uniform(config.doppler_min_hz, config.doppler_max_hz);
  return ch;
}

std::optional<double> packet_snr_db(const Scenario& scenario, std::uint64_t item_seed, bool augment) {
  const AugmentationConfig& aug = scenario.augmentation;
  if (!augment || !aug.snr_min_db) return scenario.snr_db;
  // Own stream: enabling the range leaves every other draw unchanged.
  Rng snr_rng(derive_seed(item_seed, "snr"));
  return snr_rng.uniform(*aug.snr_min_db, *aug.snr_max_db);
}

ComplexBaseband synth_received_packet(const Scenario& scenario, const DeviceProfile& profile,
                                      std::uint64_t item_seed, bool augment,
                                      const std::optional<double>& snr_db) {
  Rng packet_rng(derive_seed(item_seed, "packet"));
  Rng impair_rng(derive_seed(item_seed, "impairment"));
  Rng channel_rng(derive_seed(item_seed, "channel"));
  Rng noise_rng(derive_seed(item_seed, "noise"));
  Rng timing_rng(derive_seed(item_seed, "timing"));

  ComplexBaseband tx = apply_impairment(synth_packet(scenario.lora, packet_rng), profile, impair_rng);

  const std::size_t lead = scenario.max_timing_offset == 0
                               ? 0
                               : timing_rng.uniform_index(scenario.max_timing_offset + 1);
  if (lead > 0) tx.samples.insert(tx.samples.begin(), lead, cdouble{});

  AugmentationConfig aug = scenario.augmentation;
  aug.enabled = augment;
  ChannelConfig channel = augment_channel(channel_rng, aug);
  channel.snr_db = snr_db;
  return apply_channel(tx, channel, noise_rng);
}

namespace {

struct PlannedItem {
  const DeviceProfile* profile;
  Label label;
  std::uint64_t stream;
};

}  // namespace

DatasetSplit build_synthetic_dataset(const Scenario& scenario, SplitKind split, std::uint64_t seed,
                                     const BuildOptions& options) {
  scenario.validate();

  std::vector<PlannedItem> plan;
  auto add = [&](const std::vector<DeviceProfile>& devices, std::size_t count, bool rogue) {
    for (std::size_t d = 0; d < devices.size(); ++d)
      for (std::size_t n = 0; n < count; ++n)
        plan.push_back({&devices[d], rogue ? kRogue : static_cast<Label>(d), 0});
  };
  std::size_t per_identity = 0;
  switch (split) {
    case SplitKind::train:
      per_identity = scenario.train_per_device;
      add(scenario.legitimate, per_identity, false);
      break;
    case SplitKind::test:
      per_identity = scenario.test_per_device;
      add(scenario.legitimate, per_identity, false);
      add(scenario.rogue, scenario.test_per_rogue, true);
      break;
    case SplitKind::calibration:
      per_identity = scenario.calibration_per_device;
      add(scenario.legitimate, per_identity, false);
      add(scenario.calibration_rogue, scenario.test_per_rogue, true);
      break;
  }
  const std::string tag = std::string("synth/") + split_name(split);
  for (std::size_t i = 0; i < plan.size(); ++i) plan[i].stream = derive_seed(seed, tag, i);

  const bool augment = split == SplitKind::train &&
                       options.augment.value_or(scenario.augmentation.enabled);

  DatasetSplit out;
  out.identity_count = scenario.legitimate.size();
  out.per_identity_count = per_identity;
  out.items.resize(plan.size());
  parallel_for(
      plan.size(),
      [&](std::size_t i) {
        const std::optional<double> snr =
            options.snr_db ? *options.snr_db : packet_snr_db(scenario, plan[i].stream, augment);
        const auto rx = synth_received_packet(scenario, *plan[i].profile, plan[i].stream, augment, snr);
        Spectrogram s = preprocess_packet(rx, scenario.lora, scenario.stft);
        quantize_to_binary32(s);
        out.items[i] = {std::move(s), plan[i].label};
      },
      options.workers);
  return out;
}

EnrollmentDb enroll(const DatasetSplit& train) {
  if (train.empty()) throw InputError("enroll: training split is empty");
  train.validate(true);
  const auto [f, t] = train.shape();

  std::map<Label, std::vector<double>> sums;
  EnrollmentDb db;
  for (const auto& item : train.items) {
    auto& acc = sums[item.label];
    if (acc.empty()) acc.assign(f * t, 0.0);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += item.spectrogram.values[k];
    ++db.source_count[item.label];
  }
  for (std::size_t i = 0; i < train.identity_count; ++i)
    if (!sums.contains(static_cast<Label>(i)))
      throw InputError("enroll: identity " + std::to_string(i) + " has no samples");

  for (auto& [label, acc] : sums) {
    const double n = static_cast<double>(db.source_count[label]);
    Spectrogram s{f, t, std::move(acc)};
    for (auto& v : s.values) v /= n;
    db.entries.emplace(label, std::move(s));
  }
  return db;
}

void quantize_to_binary32(Spectrogram& s) {
  for (auto& v : s.values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_to_binary32(EnrollmentDb& db) {
  for (auto& [label, s] : db.entries) quantize_to_binary32(s);
}

// Container layout (little endian):
//   magic[4] | version u16 | freq_bins u32 | time_frames u32 | item_count u32
//   item_count x ( label i32 | freq_bins*time_frames binary32, row-major )

namespace {

constexpr std::uint16_t kContainerVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4 + 4;

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated archive while reading ") + what, pos_);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace

std::vector<std::uint8_t> encode_container(const char magic[4], const std::vector<LabeledSpectrogram>& items,
                                           std::size_t freq_bins, std::size_t time_frames) {
  std::vector<std::uint8_t> b;
  const std::size_t cells = freq_bins * time_frames;
  b.reserve(kHeaderBytes + items.size() * (4 + 4 * cells));
  b.insert(b.end(), magic, magic + 4);
  put_u16(b, kContainerVersion);
  put_u32(b, static_cast<std::uint32_t>(freq_bins));
  put_u32(b, static_cast<std::uint32_t>(time_frames));
  put_u32(b, static_cast<std::uint32_t>(items.size()));
  for (const auto& item : items) {
    if (item.spectrogram.freq_bins != freq_bins || item.spectrogram.time_frames != time_frames)
      throw InputError("cannot archive spectrograms of mixed shapes");
    put_u32(b, static_cast<std::uint32_t>(item.label));
    for (double v : item.spectrogram.values) put_u32(b, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return b;
}

std::vector<LabeledSpectrogram> decode_container(const std::vector<std::uint8_t>& bytes,
                                                 const char magic[4], std::size_t& freq_bins,
                                                 std::size_t& time_frames) {
  ByteReader rr(bytes);
  rr.need(4, "magic");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected \"") + std::string(magic, 4) + "\"", 0);
  rr.u32("magic");
  const std::size_t version_at = rr.offset();
  const std::uint16_t version = rr.u16("version");
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version), version_at);
  freq_bins = rr.u32("freq_bins");
  time_frames = rr.u32("time_frames");
  const std::size_t count_at = rr.offset();
  const std::uint32_t count = rr.u32("item_count");
  const std::size_t cells = freq_bins * time_frames;
  if (cells == 0 && count > 0) throw FormatError("zero-sized spectrogram shape", 6);

  const std::size_t item_bytes = 4 + 4 * cells;
  if (rr.remaining() < static_cast<std::size_t>(count) * item_bytes)
    throw FormatError("truncated archive: header declares " + std::to_string(count) + " items",
                      count_at);

  std::vector<LabeledSpectrogram> items(count);
  for (auto& item : items) {
    item.label = static_cast<Label>(rr.u32("label"));
    item.spectrogram.freq_bins = freq_bins;
    item.spectrogram.time_frames = time_frames;
    item.spectrogram.values.resize(cells);
    for (auto& v : item.spectrogram.values) v = std::bit_cast<float>(rr.u32("value"));
  }
  if (rr.remaining() != 0) throw FormatError("trailing bytes after last item", rr.offset());
  return items;
}

void save_archive(const DatasetSplit& split, const std::filesystem::path& path) {
  const auto [f, t] = split.shape();
  write_file(path, encode_container("SPGA", split.items, f, t));
}

DatasetSplit load_archive(const std::filesystem::path& path,
                          std::optional<std::pair<std::size_t, std::size_t>> expected_shape) {
  const auto bytes = read_file(path);
  std::size_t f = 0, t = 0;
  DatasetSplit out;
  out.items = decode_container(bytes, "SPGA", f, t);
  if (expected_shape && !out.items.empty() && (f != expected_shape->first || t != expected_shape->second))
    throw FormatError("shape mismatch: archive holds " + std::to_string(f) + "x" + std::to_string(t) +
                          " spectrograms, expected " + std::to_string(expected_shape->first) + "x" +
                          std::to_string(expected_shape->second),
                      6);

  std::map<Label, std::size_t> counts;
  for (const auto& item : out.items) {
    if (item.label != kRogue) ++counts[item.label];
  }
  out.identity_count = counts.empty() ? 0 : static_cast<std::size_t>(counts.rbegin()->first) + 1;
  out.per_identity_count = 0;
  if (!counts.empty() && counts.size() == out.identity_count) {
    const std::size_t first = counts.begin()->second;
    bool balanced = true;
    for (const auto& [l, c] : counts) balanced = balanced && c == first;
    if (balanced) out.per_identity_count = first;
  }
  return out;
}

void save_enrollment(const EnrollmentDb& db, const std::filesystem::path& path) {
  std::vector<LabeledSpectrogram> items;
  std::size_t f = 0, t = 0;
  for (const auto& [label, s] : db.entries) {
    items.push_back({s, label});
    f = s.freq_bins;
    t = s.time_frames;
  }
  write_file(path, encode_container("ENRL", items, f, t));
}

EnrollmentDb load_enrollment(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t f = 0, t = 0;
  auto items = decode_container(bytes, "ENRL", f, t);
  EnrollmentDb db;
  for (auto& item : items) {
    if (!db.entries.emplace(item.label, std::move(item.spectrogram)).second)
      throw FormatError("duplicate enrollment identity " + std::to_string(item.label), kHeaderBytes);
  }
  return db;
}

}  // namespace jrffp
