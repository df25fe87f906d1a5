#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drive/snn.hpp"

namespace drive {

inline constexpr std::size_t kImageSide = 128;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

inline constexpr int kNonVehicle = 0;
inline constexpr int kVehicle = 1;

/// "vehicle" / "non-vehicle".
const char* class_name(int label);

struct ImageSample {
  std::vector<float> pixels;  // kImageSide x kImageSide, row-major, in [0, 1]
  int label = kNonVehicle;
  std::string source_path;
};

struct Dataset {
  std::vector<ImageSample> samples;
  std::array<std::size_t, 2> class_counts{0, 0};

  /// Builds a dataset and tallies labels. Throws on a label outside {0, 1}.
  static Dataset from_samples(std::vector<ImageSample> samples);

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A decoded image before preprocessing. Values run from 0 to max_value,
/// interleaved by channel (1 = gray, 3 = RGB, 4 = RGBA).
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  double max_value = 255.0;
  std::vector<double> data;
};

/// Grayscale, zero-pad to a centered square, bilinear resize to 128x128,
/// scale to [0, 1].
std::vector<double> preprocess(const RawImage& raw);

/// Pieces of preprocess, exposed for testing.
std::vector<double> to_grayscale(const RawImage& raw);
/// Pads a w x h gray grid to side max(w, h). Odd remainders go bottom/right.
std::vector<double> pad_to_square(std::span<const double> gray, std::size_t width,
                                  std::size_t height);
/// Half-pixel-centered bilinear resampling of a square grid.
std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_side,
                                    std::size_t dst_side);

/// Throws IoError when the file cannot be read or decoded.
RawImage decode_png(const std::filesystem::path& path);
/// Writes a square gray grid in [0, 1] as an 8-bit grayscale PNG.
void write_png_gray(const std::filesystem::path& path, std::span<const float> pixels,
                    std::size_t side);

struct LoadReport {
  Dataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Loads every decodable image in both directories, ordered by path.
/// Undecodable files are skipped and reported.
LoadReport load_directory(const std::filesystem::path& vehicle_dir,
                          const std::filesystem::path& non_vehicle_dir);

/// Fisher-Yates shuffle, then the first floor(fraction * n) samples train.
std::pair<Dataset, Dataset> split_shuffle(const Dataset& ds, std::uint64_t seed,
                                          double train_fraction = 0.8);

enum class EncodingMode { kRate, kConstantCurrent };

const char* encoding_name(EncodingMode mode);
EncodingMode parse_encoding(const std::string& name);

struct EncoderConfig {
  EncodingMode mode = EncodingMode::kRate;
  std::size_t num_steps = 50;
  std::uint64_t seed = 0;
};

/// Rate mode draws an independent Bernoulli(pixel) spike per step; constant
/// current mode feeds the pixel value itself at every step.
InputBatch rate_encode(std::span<const ImageSample* const> batch, const EncoderConfig& cfg);

/// Splits sample indices into batches. With reshuffling, every epoch draws
/// its own permutation from a sub-seed derived from (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool reshuffle_each_epoch);

  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;
  std::size_t batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool reshuffle_;
};

/// Desk-scale stand-in corpus. Vehicles are a bright rectangle on dark
/// noise, non-vehicles are noise only.
Dataset synth_dataset(std::size_t n_per_class, std::uint64_t seed);

/// Writes `ds` as PNGs under root/vehicle and root/non-vehicle.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

}  // namespace drive
