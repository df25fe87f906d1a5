#include "drive/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace drive {

namespace fs = std::filesystem;

const char* class_name(int label) { return label == kVehicle ? "vehicle" : "non-vehicle"; }

Dataset Dataset::from_samples(std::vector<ImageSample> samples) {
  Dataset ds;
  for (const auto& s : samples) {
    if (s.label != kNonVehicle && s.label != kVehicle) {
      throw std::invalid_argument("dataset: label " + std::to_string(s.label) +
                                  " is not a class index");
    }
    ++ds.class_counts[static_cast<std::size_t>(s.label)];
  }
  ds.samples = std::move(samples);
  return ds;
}

std::vector<double> to_grayscale(const RawImage& raw) {
  const std::size_t n = raw.width * raw.height;
  if (raw.data.size() != n * raw.channels) {
    throw ShapeError("image: " + std::to_string(raw.data.size()) + " values for a " +
                     std::to_string(raw.width) + "x" + std::to_string(raw.height) + "x" +
                     std::to_string(raw.channels) + " image");
  }
  std::vector<double> gray(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* px = raw.data.data() + i * raw.channels;
    if (raw.channels >= 3) {
      // Integer weights keep white exactly white.
      gray[i] = (299.0 * px[0] + 587.0 * px[1] + 114.0 * px[2]) / 1000.0;
    } else {
      gray[i] = px[0];
    }
  }
  return gray;
}

std::vector<double> pad_to_square(std::span<const double> gray, std::size_t width,
                                  std::size_t height) {
  if (gray.size() != width * height) throw ShapeError("pad_to_square: size mismatch");
  const std::size_t side = std::max(width, height);
  const std::size_t top = (side - height) / 2;
  const std::size_t left = (side - width) / 2;
  std::vector<double> out(side * side, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(gray.begin() + static_cast<std::ptrdiff_t>(y * width), width,
                out.begin() + static_cast<std::ptrdiff_t>((y + top) * side + left));
  }
  return out;
}

std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_side,
                                    std::size_t dst_side) {
  if (src.size() != src_side * src_side) throw ShapeError("resize_bilinear: size mismatch");
  if (src_side == 0 || dst_side == 0) throw std::invalid_argument("resize_bilinear: empty image");

  struct Tap {
    std::size_t i0, i1;
    double w;
  };
  const double scale = static_cast<double>(src_side) / static_cast<double>(dst_side);
  const double last = static_cast<double>(src_side - 1);
  std::vector<Tap> taps(dst_side);
  for (std::size_t d = 0; d < dst_side; ++d) {
    double f = (static_cast<double>(d) + 0.5) * scale - 0.5;
    f = std::clamp(f, 0.0, last);
    const auto i0 = static_cast<std::size_t>(std::floor(f));
    taps[d] = {i0, std::min(i0 + 1, src_side - 1), f - static_cast<double>(i0)};
  }

  auto lerp = [](double a, double b, double w) { return a + w * (b - a); };
  std::vector<double> out(dst_side * dst_side);
  for (std::size_t y = 0; y < dst_side; ++y) {
    const auto& ty = taps[y];
    const double* r0 = src.data() + ty.i0 * src_side;
    const double* r1 = src.data() + ty.i1 * src_side;
    for (std::size_t x = 0; x < dst_side; ++x) {
      const auto& tx = taps[x];
      const double top = lerp(r0[tx.i0], r0[tx.i1], tx.w);
      const double bottom = lerp(r1[tx.i0], r1[tx.i1], tx.w);
      out[y * dst_side + x] = lerp(top, bottom, ty.w);
    }
  }
  return out;
}

std::vector<double> preprocess(const RawImage& raw) {
  if (raw.width == 0 || raw.height == 0) {
    throw std::invalid_argument("preprocess: image has a zero dimension");
  }
  if (raw.channels == 0 || !(raw.max_value > 0.0)) {
    throw std::invalid_argument("preprocess: bad channel count or value range");
  }
  const auto gray = to_grayscale(raw);
  const auto square = pad_to_square(gray, raw.width, raw.height);
  auto out = resize_bilinear(square, std::max(raw.width, raw.height), kImageSide);
  for (auto& v : out) v = std::clamp(v / raw.max_value, 0.0, 1.0);
  return out;
}

LoadReport load_directory(const fs::path& vehicle_dir, const fs::path& non_vehicle_dir) {
  std::vector<std::pair<fs::path, int>> files;
  for (const auto& [dir, label] :
       {std::pair{vehicle_dir, kVehicle}, std::pair{non_vehicle_dir, kNonVehicle}}) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
      throw IoError("not a readable directory: " + dir.string());
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename().string().starts_with(".")) continue;
      files.emplace_back(entry.path(), label);
    }
  }
  std::sort(files.begin(), files.end());

  LoadReport report;
  std::vector<ImageSample> samples;
  for (const auto& [path, label] : files) {
    try {
      const auto pixels = preprocess(decode_png(path));
      samples.push_back({std::vector<float>(pixels.begin(), pixels.end()), label, path.string()});
    } catch (const std::exception& e) {
      ++report.skipped;
      report.warnings.push_back("skipping " + path.string() + ": " + e.what());
    }
  }
  if (samples.empty()) {
    throw EmptyDatasetError("no decodable images in " + vehicle_dir.string() + " or " +
                            non_vehicle_dir.string());
  }
  report.dataset = Dataset::from_samples(std::move(samples));
  return report;
}

namespace {

void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

std::pair<Dataset, Dataset> split_shuffle(const Dataset& ds, std::uint64_t seed,
                                          double train_fraction) {
  if (ds.empty()) throw std::invalid_argument("split_shuffle: dataset is empty");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_shuffle: train fraction must be in (0, 1)");
  }
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  fisher_yates(idx, rng);

  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ds.size())));
  std::vector<ImageSample> train, test;
  train.reserve(n_train);
  test.reserve(ds.size() - n_train);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_train ? train : test).push_back(ds.samples[idx[i]]);
  }
  return {Dataset::from_samples(std::move(train)), Dataset::from_samples(std::move(test))};
}

const char* encoding_name(EncodingMode mode) {
  return mode == EncodingMode::kRate ? "rate" : "current";
}

EncodingMode parse_encoding(const std::string& name) {
  if (name == "rate") return EncodingMode::kRate;
  if (name == "current" || name == "constant-current") return EncodingMode::kConstantCurrent;
  throw std::invalid_argument("unknown encoding '" + name + "' (expected rate or current)");
}

InputBatch rate_encode(std::span<const ImageSample* const> batch, const EncoderConfig& cfg) {
  if (cfg.num_steps < 1) throw std::invalid_argument("rate_encode: num_steps must be >= 1");
  if (batch.empty()) throw std::invalid_argument("rate_encode: empty batch");
  const std::size_t width = batch.front()->pixels.size();
  for (const auto* s : batch) {
    if (s->pixels.size() != width) throw ShapeError("rate_encode: samples differ in size");
    for (float p : s->pixels) {
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw std::invalid_argument("rate_encode: pixel " + std::to_string(p) +
                                    " outside [0, 1]");
      }
    }
  }

  if (cfg.mode == EncodingMode::kConstantCurrent) {
    Matrix current(batch.size(), width);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::copy(batch[b]->pixels.begin(), batch[b]->pixels.end(), current.row(b).begin());
    }
    return InputBatch::constant_current(std::move(current), cfg.num_steps);
  }

  SpikeBatch spikes(cfg.num_steps, batch.size(), width);
  Rng rng(cfg.seed);
  std::uint8_t* out = spikes.bits.data();
  for (std::size_t t = 0; t < cfg.num_steps; ++t) {
    for (const auto* s : batch) {
      for (float p : s->pixels) *out++ = rng.next_double() < static_cast<double>(p) ? 1 : 0;
    }
  }
  return InputBatch::spikes(std::move(spikes));
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                           bool reshuffle_each_epoch)
    : n_(n), batch_size_(batch_size), seed_(seed), reshuffle_(reshuffle_each_epoch) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> idx(n_);
  for (std::size_t i = 0; i < n_; ++i) idx[i] = i;
  if (reshuffle_) {
    Rng rng(mix_seed(seed_, epoch_index));
    fisher_yates(idx, rng);
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(batches_per_epoch());
  for (std::size_t start = 0; start < n_; start += batch_size_) {
    const std::size_t end = std::min(n_, start + batch_size_);
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

ImageSample noise_image(Rng& rng, int label) {
  ImageSample s;
  s.label = label;
  s.pixels.resize(kImagePixels);
  for (auto& p : s.pixels) p = static_cast<float>(0.3 * rng.next_double());
  return s;
}

}  // namespace

Dataset synth_dataset(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("synth_dataset: n_per_class must be >= 1");
  constexpr std::size_t kMinSide = 40;
  constexpr std::size_t kMaxSide = 96;
  Rng rng(seed);
  std::vector<ImageSample> samples;
  samples.reserve(2 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    auto vehicle = noise_image(rng, kVehicle);
    const std::size_t w = kMinSide + rng.next_below(kMaxSide - kMinSide + 1);
    const std::size_t h = kMinSide + rng.next_below(kMaxSide - kMinSide + 1);
    const std::size_t x0 = rng.next_below(kImageSide - w + 1);
    const std::size_t y0 = rng.next_below(kImageSide - h + 1);
    for (std::size_t y = y0; y < y0 + h; ++y) {
      for (std::size_t x = x0; x < x0 + w; ++x) {
        vehicle.pixels[y * kImageSide + x] = static_cast<float>(0.85 + 0.1 * rng.next_double());
      }
    }
    samples.push_back(std::move(vehicle));
    samples.push_back(noise_image(rng, kNonVehicle));
  }
  return Dataset::from_samples(std::move(samples));
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  const fs::path dirs[2] = {root / "non-vehicle", root / "vehicle"};
  for (const auto& d : dirs) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
  }
  std::size_t counters[2] = {0, 0};
  for (const auto& s : ds.samples) {
    const auto c = static_cast<std::size_t>(s.label);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu.png", class_name(s.label), counters[c]++);
    write_png_gray(dirs[c] / name, s.pixels, kImageSide);
  }
}

}  // namespace drive
