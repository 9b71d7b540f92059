// SPDX-License-Identifier: Apache-2.0
#include "megc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "megc/error.hpp"

namespace megc::signal {

MegWindow::MegWindow(std::size_t channels, std::size_t samples, double sample_rate_hz)
    : MegWindow(channels, samples, sample_rate_hz, std::vector<double>(channels * samples, 0.0)) {}

MegWindow::MegWindow(std::size_t channels, std::size_t samples, double sample_rate_hz,
                     std::vector<double> data)
    : channels_(channels), samples_(samples), sample_rate_hz_(sample_rate_hz), data_(std::move(data)) {
  if (channels == 0 || samples == 0) {
    throw ContractError("MegWindow: channels and samples must be positive");
  }
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw ContractError("MegWindow: sample rate must be positive");
  }
  if (data_.size() != channels * samples) {
    throw ContractError("MegWindow: data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(channels) + "x" +
                        std::to_string(samples));
  }
}

void MegWindow::validate() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InvalidSignalError("non-finite sample at channel " + std::to_string(i / samples_) +
                               ", index " + std::to_string(i % samples_));
    }
  }
}

MegWindow MegWindow::slice(std::size_t offset, std::size_t length) const {
  if (offset + length > samples_ || length == 0) {
    throw ContractError("MegWindow::slice out of range");
  }
  MegWindow out(channels_, length, sample_rate_hz_);
  for (std::size_t c = 0; c < channels_; ++c) {
    auto src = channel(c).subspan(offset, length);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

std::size_t samples_for(double seconds, double sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(seconds * sample_rate_hz));
}

std::string_view to_string(BandName band) {
  switch (band) {
    case BandName::theta: return "theta";
    case BandName::alpha: return "alpha";
    case BandName::beta: return "beta";
    case BandName::gamma: return "gamma";
    case BandName::high_gamma: return "high_gamma";
  }
  return "unknown";
}

BandName band_from_string(std::string_view name) {
  for (auto b : {BandName::theta, BandName::alpha, BandName::beta, BandName::gamma,
                 BandName::high_gamma}) {
    if (to_string(b) == name) return b;
  }
  if (name == "high-gamma") return BandName::high_gamma;
  throw ContractError("unknown band name: " + std::string(name));
}

void BandSpec::validate(double sample_rate_hz) const {
  const double nyquist = sample_rate_hz / 2.0;
  if (!(low_hz > 0.0) || !(high_hz > low_hz)) {
    throw DesignError("band " + std::string(to_string(name)) + ": need 0 < low < high");
  }
  if (high_hz >= nyquist) {
    throw DesignError("band " + std::string(to_string(name)) + ": upper edge " +
                      std::to_string(high_hz) + " Hz is at or beyond Nyquist (" +
                      std::to_string(nyquist) + " Hz)");
  }
}

std::vector<BandSpec> default_bands() {
  return {{BandName::theta, 4.0, 8.0},
          {BandName::alpha, 8.0, 13.0},
          {BandName::beta, 13.0, 30.0},
          {BandName::gamma, 30.0, 70.0},
          {BandName::high_gamma, 70.0, 100.0}};
}

BandSpec default_band(BandName name) {
  for (const auto& b : default_bands()) {
    if (b.name == name) return b;
  }
  throw ContractError("no default band");
}

namespace {

std::pair<std::complex<double>, std::complex<double>> section_poles(const Biquad& s) {
  // Roots of z^2 + a1 z + a2.
  const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
  return {(-s.a1 + disc) / 2.0, (-s.a1 - disc) / 2.0};
}

}  // namespace

std::complex<double> IirBiquadCascade::transfer(std::complex<double> z) const {
  const std::complex<double> zi = 1.0 / z;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return h;
}

std::complex<double> IirBiquadCascade::response(double frequency_hz) const {
  const double w = 2.0 * std::numbers::pi * frequency_hz / sample_rate_hz;
  return transfer(std::polar(1.0, w));
}

double IirBiquadCascade::magnitude_db(double frequency_hz) const {
  return 20.0 * std::log10(std::max(std::abs(response(frequency_hz)), 1e-300));
}

double IirBiquadCascade::max_pole_modulus() const {
  double m = 0.0;
  for (const auto& s : sections) {
    auto [p1, p2] = section_poles(s);
    m = std::max({m, std::abs(p1), std::abs(p2)});
  }
  return m;
}

std::string IirBiquadCascade::response_csv(std::size_t points) const {
  std::ostringstream os;
  os.precision(10);
  os << "frequency_hz,magnitude_db\n";
  const double nyquist = sample_rate_hz / 2.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double f = nyquist * static_cast<double>(i) / static_cast<double>(points);
    os << f << ',' << magnitude_db(f) << '\n';
  }
  return os.str();
}

IirBiquadCascade design_bandstop(const BandSpec& band, double sample_rate_hz, int order) {
  band.validate(sample_rate_hz);
  if (order < 2 || order % 2 != 0) {
    throw DesignError("bandstop order must be even and >= 2, got " + std::to_string(order));
  }
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * sample_rate_hz;
  const double w_low = fs2 * std::tan(pi * band.low_hz / sample_rate_hz);
  const double w_high = fs2 * std::tan(pi * band.high_hz / sample_rate_hz);
  const double w0sq = w_low * w_high;
  const double bw = w_high - w_low;

  const auto bilinear = [fs2](cd s) { return (fs2 + s) / (fs2 - s); };
  const cd zero = bilinear(cd(0.0, std::sqrt(w0sq)));
  const double cos0 = zero.real() / std::abs(zero);

  IirBiquadCascade out;
  out.sample_rate_hz = sample_rate_hz;
  out.low_hz = band.low_hz;
  out.high_hz = band.high_hz;
  out.center_hz = std::sqrt(band.low_hz * band.high_hz);
  out.order = order;

  const auto push_section = [&](cd z1, cd z2) {
    Biquad s;
    s.a1 = -(z1 + z2).real();
    s.a2 = (z1 * z2).real();
    const double k = (1.0 + s.a1 + s.a2) / (2.0 - 2.0 * cos0);
    s.b0 = k;
    s.b1 = -2.0 * cos0 * k;
    s.b2 = k;
    out.sections.push_back(s);
  };

  const int n = order / 2;
  for (int k = 1; k <= n; ++k) {
    const cd p = std::polar(1.0, pi * (2.0 * k + n - 1.0) / (2.0 * n));
    if (p.imag() < -1e-12) continue;  // handled with its conjugate
    // Each prototype pole p maps to the roots of s^2 - (B/p) s + w0^2.
    const cd c = bw / p;
    const cd disc = std::sqrt(c * c - 4.0 * w0sq);
    const cd sa = (c + disc) / 2.0;
    const cd sb = (c - disc) / 2.0;
    if (std::abs(p.imag()) <= 1e-12) {
      push_section(bilinear(sa), bilinear(sb));
    } else {
      push_section(bilinear(sa), std::conj(bilinear(sa)));
      push_section(bilinear(sb), std::conj(bilinear(sb)));
    }
  }
  return out;
}

MegWindow apply_filter(const MegWindow& window, const IirBiquadCascade& filter) {
  MegWindow out = window;
  for (std::size_t c = 0; c < out.channels(); ++c) {
    auto row = out.channel(c);
    for (const auto& s : filter.sections) {
      double z1 = 0.0, z2 = 0.0;
      for (double& x : row) {
        const double in = x;
        const double y = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * y + z2;
        z2 = s.b2 * in - s.a2 * y;
        x = y;
      }
    }
  }
  return out;
}

void AugmentConfig::validate(std::size_t window_samples, double sample_rate_hz) const {
  if (time_mask_count < 0) throw ContractError("time_mask_count must be >= 0");
  if (time_mask_max_width < 0 || static_cast<std::size_t>(time_mask_max_width) > window_samples) {
    throw ContractError("time_mask_max_width must be within [0, window samples]");
  }
  if (!(bandstop_probability >= 0.0 && bandstop_probability <= 1.0)) {
    throw ContractError("bandstop_probability must be a probability");
  }
  if (filter_order < 2 || filter_order % 2 != 0) {
    throw ContractError("filter_order must be even and >= 2");
  }
  for (const auto& b : bands) b.validate(sample_rate_hz);
}

MegWindow meg_augment(const MegWindow& window, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate(window.samples(), window.sample_rate_hz());
  MegWindow out = window;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& band : cfg.bands) {
    if (coin(rng) < cfg.bandstop_probability) {
      out = apply_filter(out, design_bandstop(band, window.sample_rate_hz(), cfg.filter_order));
    }
  }
  const std::size_t n = window.samples();
  for (int m = 0; m < cfg.time_mask_count; ++m) {
    std::uniform_int_distribution<int> width_dist(0, cfg.time_mask_max_width);
    const auto width = static_cast<std::size_t>(width_dist(rng));
    std::uniform_int_distribution<std::size_t> start_dist(0, n - width);
    const std::size_t start = start_dist(rng);
    for (std::size_t c = 0; c < out.channels(); ++c) {
      auto row = out.channel(c);
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(start),
                row.begin() + static_cast<std::ptrdiff_t>(start + width), 0.0);
    }
  }
  return out;
}

double rms_energy(const MegWindow& window) {
  window.validate();
  if (window.empty()) return 0.0;
  double acc = 0.0;
  for (double x : window.data()) acc += x * x;
  return std::sqrt(acc / static_cast<double>(window.data().size()));
}

MegWindow instance_normalize(const MegWindow& window, double epsilon) {
  MegWindow out = window;
  const auto n = static_cast<double>(window.samples());
  for (std::size_t c = 0; c < out.channels(); ++c) {
    auto row = out.channel(c);
    double mean = 0.0;
    for (double x : row) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : row) var += (x - mean) * (x - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    for (double& x : row) x = (x - mean) * inv;
  }
  return out;
}

std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window_len,
                                        std::size_t stride) {
  if (stride == 0) throw ContractError("stride must be >= 1");
  if (window_len == 0) throw ContractError("window length must be >= 1");
  std::vector<std::size_t> offsets;
  if (window_len > length) return offsets;
  for (std::size_t off = 0; off + window_len <= length; off += stride) offsets.push_back(off);
  return offsets;
}

std::vector<MegWindow> slide_windows(const MegWindow& series, std::size_t window_len,
                                     std::size_t stride) {
  std::vector<MegWindow> out;
  for (auto off : window_offsets(series.samples(), window_len, stride)) {
    out.push_back(series.slice(off, window_len));
  }
  return out;
}

}  // namespace megc::signal
