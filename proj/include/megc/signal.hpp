// SPDX-License-Identifier: Apache-2.0
//
// Sensor windows, normalization, RMS energy, Butterworth bandstop design and
// the MEGAugment augmentation policy.
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace megc::signal {

/// Channels x samples block of sensor data, stored channel-major.
class MegWindow {
 public:
  MegWindow() = default;
  MegWindow(std::size_t channels, std::size_t samples, double sample_rate_hz);
  MegWindow(std::size_t channels, std::size_t samples, double sample_rate_hz,
            std::vector<double> data);

  std::size_t channels() const { return channels_; }
  std::size_t samples() const { return samples_; }
  double sample_rate_hz() const { return sample_rate_hz_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * samples_, samples_);
  }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * samples_, samples_);
  }
  double at(std::size_t c, std::size_t t) const { return data_[c * samples_ + t]; }
  double& at(std::size_t c, std::size_t t) { return data_[c * samples_ + t]; }

  /// Throws InvalidSignalError if any entry is NaN or infinite.
  void validate() const;

  /// Copy of samples [offset, offset + length) across all channels.
  MegWindow slice(std::size_t offset, std::size_t length) const;

  bool operator==(const MegWindow&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t samples_ = 0;
  double sample_rate_hz_ = 0.0;
  std::vector<double> data_;
};

/// Number of samples covering `seconds` at `sample_rate_hz`.
std::size_t samples_for(double seconds, double sample_rate_hz);

enum class BandName { theta, alpha, beta, gamma, high_gamma };

std::string_view to_string(BandName band);
BandName band_from_string(std::string_view name);

struct BandSpec {
  BandName name = BandName::beta;
  double low_hz = 0.0;
  double high_hz = 0.0;

  void validate(double sample_rate_hz) const;
};

/// theta 4-8, alpha 8-13, beta 13-30, gamma 30-70, high-gamma 70-100 Hz.
std::vector<BandSpec> default_bands();
BandSpec default_band(BandName name);

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

class IirBiquadCascade {
 public:
  std::vector<Biquad> sections;
  double sample_rate_hz = 0.0;
  double low_hz = 0.0;
  double high_hz = 0.0;
  double center_hz = 0.0;
  int order = 0;

  /// H(e^{jw}) evaluated at `frequency_hz`.
  std::complex<double> response(double frequency_hz) const;
  /// H(z) at an arbitrary point of the z-plane.
  std::complex<double> transfer(std::complex<double> z) const;
  double magnitude_db(double frequency_hz) const;
  double max_pole_modulus() const;
  bool stable() const { return max_pole_modulus() < 1.0; }

  /// "frequency_hz,magnitude_db" rows on a uniform grid from 0 to Nyquist.
  std::string response_csv(std::size_t points = 256) const;
};

/// Butterworth bandstop of total order `order` (even, >= 2), realized as
/// order/2 biquads: analog prototype of order/2, lowpass-to-bandstop
/// transformation on pre-warped edges, bilinear transform. Every section is
/// scaled to unit DC gain.
IirBiquadCascade design_bandstop(const BandSpec& band, double sample_rate_hz, int order = 4);

/// Causal transposed direct-form II filtering of each channel, zero initial state.
MegWindow apply_filter(const MegWindow& window, const IirBiquadCascade& filter);

struct AugmentConfig {
  int time_mask_count = 2;
  int time_mask_max_width = 180;
  double bandstop_probability = 0.4;
  std::vector<BandSpec> bands = default_bands();
  int filter_order = 4;
  std::uint64_t rng_seed = 0;

  void validate(std::size_t window_samples, double sample_rate_hz) const;
};

/// Per band, with probability `bandstop_probability`, apply the band's stop
/// filter; then zero `time_mask_count` spans across all channels with widths
/// uniform in [0, time_mask_max_width] and uniform start. Masks are applied
/// after filtering so masked spans are exact zeros.
MegWindow meg_augment(const MegWindow& window, const AugmentConfig& cfg, std::mt19937_64& rng);

/// sqrt(mean(x^2)) over all channels and samples.
double rms_energy(const MegWindow& window);

/// Per channel: (x - mean) / sqrt(var + epsilon), population variance.
MegWindow instance_normalize(const MegWindow& window, double epsilon = 1e-5);

/// Offsets 0, stride, 2*stride, ... of every full window inside `length` samples.
std::vector<std::size_t> window_offsets(std::size_t length, std::size_t window_len,
                                        std::size_t stride);

std::vector<MegWindow> slide_windows(const MegWindow& series, std::size_t window_len,
                                     std::size_t stride);

}  // namespace megc::signal
