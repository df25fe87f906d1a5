#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "drive/data.hpp"
#include "temp_dir.hpp"

using namespace drive;
namespace fs = std::filesystem;

namespace {

RawImage gray_image(std::size_t w, std::size_t h, double value) {
  RawImage r;
  r.width = w;
  r.height = h;
  r.channels = 1;
  r.data.assign(w * h, value);
  return r;
}

void write_flat_png(const fs::path& path, float value) {
  std::vector<float> px(kImagePixels, value);
  write_png_gray(path, px, kImageSide);
}

}  // namespace

TEST_CASE("load_directory counts and labels") {
  TempDir tmp("load");
  fs::create_directories(tmp.path() / "v");
  fs::create_directories(tmp.path() / "n");
  for (int i = 0; i < 3; ++i) write_flat_png(tmp.path() / "v" / ("v" + std::to_string(i) + ".png"), 1.0f);
  for (int i = 0; i < 2; ++i) write_flat_png(tmp.path() / "n" / ("n" + std::to_string(i) + ".png"), 0.0f);

  const auto r = load_directory(tmp.path() / "v", tmp.path() / "n");
  CHECK(r.dataset.size() == 5);
  CHECK(r.dataset.class_counts[kVehicle] == 3);
  CHECK(r.dataset.class_counts[kNonVehicle] == 2);
  CHECK(r.skipped == 0);
  for (const auto& s : r.dataset.samples) {
    REQUIRE(s.pixels.size() == kImagePixels);
    CHECK(s.pixels[0] == (s.label == kVehicle ? 1.0f : 0.0f));
  }
}

TEST_CASE("load_directory skips undecodable files with a warning") {
  TempDir tmp("corrupt");
  fs::create_directories(tmp.path() / "v");
  fs::create_directories(tmp.path() / "n");
  write_flat_png(tmp.path() / "v" / "good.png", 0.5f);
  std::ofstream(tmp.path() / "v" / "bad.png") << "definitely not a png";
  std::ofstream(tmp.path() / "n" / ".hidden") << "ignored";
  write_flat_png(tmp.path() / "n" / "good.png", 0.2f);

  const auto r = load_directory(tmp.path() / "v", tmp.path() / "n");
  CHECK(r.dataset.size() == 2);
  CHECK(r.skipped == 1);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("bad.png") != std::string::npos);
}

TEST_CASE("load_directory errors") {
  TempDir tmp("errors");
  fs::create_directories(tmp.path() / "v");
  fs::create_directories(tmp.path() / "n");
  CHECK_THROWS_AS(load_directory(tmp.path() / "v", tmp.path() / "n"), EmptyDatasetError);
  CHECK_THROWS_AS(load_directory(tmp.path() / "missing", tmp.path() / "n"), IoError);
}

TEST_CASE("png round trip preserves 8-bit values") {
  TempDir tmp("png");
  std::vector<float> px(kImagePixels);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i % 256) / 255.0f;
  write_png_gray(tmp.path() / "a.png", px, kImageSide);
  const auto raw = decode_png(tmp.path() / "a.png");
  CHECK(raw.width == kImageSide);
  CHECK(raw.height == kImageSide);
  REQUIRE(raw.data.size() == kImagePixels);
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(raw.data[i] == static_cast<double>(i % 256));
  CHECK_THROWS(decode_png(tmp.path() / "nope.png"));
}

TEST_CASE("preprocess pads a 64x32 image to a centered square") {
  const auto out = preprocess(gray_image(64, 32, 255.0));
  REQUIRE(out.size() == kImagePixels);
  // 64x64 canvas with rows 16..47 filled, upscaled by 2.
  auto at = [&](std::size_t y, std::size_t x) { return out[y * kImageSide + x]; };
  CHECK(at(0, 64) == 0.0);
  CHECK(at(30, 64) == 0.0);
  CHECK(at(64, 0) == 1.0);
  CHECK(at(64, 127) == 1.0);
  CHECK(at(40, 64) == 1.0);
  CHECK(at(127, 64) == 0.0);
  for (std::size_t y = 0; y < kImageSide; ++y) {
    CHECK(at(y, 10) == at(kImageSide - 1 - y, 10));
  }
}

TEST_CASE("preprocess value range") {
  const auto white = preprocess(gray_image(128, 128, 255.0));
  for (double v : white) CHECK(v == 1.0);
  const auto black = preprocess(gray_image(200, 90, 0.0));
  for (double v : black) CHECK(v == 0.0);

  RawImage rgb;
  rgb.width = 3;
  rgb.height = 3;
  rgb.channels = 3;
  rgb.data.assign(27, 255.0);
  for (double v : preprocess(rgb)) CHECK(v == 1.0);

  CHECK_THROWS(preprocess(gray_image(0, 5, 1.0)));
}

TEST_CASE("preprocess is idempotent on canonical images") {
  Rng rng(1);
  RawImage img = gray_image(128, 128, 0);
  img.max_value = 1.0;
  img.data = rng_uniform(rng, kImagePixels, 0, 1);
  const auto once = preprocess(img);
  RawImage again = img;
  again.data = once;
  CHECK(preprocess(again) == once);
  CHECK(once == img.data);
}

TEST_CASE("to_grayscale uses integer luma weights") {
  RawImage rgb;
  rgb.width = 1;
  rgb.height = 1;
  rgb.channels = 3;
  rgb.data = {100, 50, 10};
  CHECK(to_grayscale(rgb)[0] == doctest::Approx((299 * 100 + 587 * 50 + 114 * 10) / 1000.0));
}

namespace {

Dataset numbered(std::size_t n) {
  std::vector<ImageSample> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].pixels = {static_cast<float>(i)};
    s[i].label = static_cast<int>(i % 2);
  }
  return Dataset::from_samples(std::move(s));
}

std::multiset<float> ids(const Dataset& d) {
  std::multiset<float> out;
  for (const auto& s : d.samples) out.insert(s.pixels[0]);
  return out;
}

}  // namespace

TEST_CASE("split_shuffle sizes and partition") {
  auto [tr, te] = split_shuffle(numbered(10), 42);
  CHECK(tr.size() == 8);
  CHECK(te.size() == 2);

  const auto big = numbered(2140);
  auto [a, b] = split_shuffle(big, 42);
  CHECK(a.size() == 1712);
  CHECK(b.size() == 428);
  auto all = ids(a);
  const auto rest = ids(b);
  all.insert(rest.begin(), rest.end());
  CHECK(all == ids(big));
  CHECK(std::set<float>(all.begin(), all.end()).size() == 2140);

  auto [a2, b2] = split_shuffle(big, 42);
  CHECK(ids(a2) == ids(a));
  std::vector<float> order, order2;
  for (const auto& s : a.samples) order.push_back(s.pixels[0]);
  for (const auto& s : a2.samples) order2.push_back(s.pixels[0]);
  CHECK(order == order2);

  auto [a3, b3] = split_shuffle(big, 43);
  CHECK(ids(a3) != ids(a));
  CHECK_THROWS(split_shuffle(Dataset{}, 1));
  CHECK_THROWS(split_shuffle(big, 1, 1.0));
}

namespace {

ImageSample flat_sample(float v) {
  ImageSample s;
  s.pixels.assign(kImagePixels, v);
  return s;
}

}  // namespace

TEST_CASE("rate_encode statistics") {
  const auto zero = flat_sample(0.0f), one = flat_sample(1.0f), half = flat_sample(0.5f);
  const ImageSample* batch[] = {&zero, &one, &half};
  const auto in = rate_encode(batch, {EncodingMode::kRate, 50, 9});
  REQUIRE(in.is_spiking());
  CHECK(in.steps() == 50);
  CHECK(in.batch() == 3);
  CHECK(in.width() == kImagePixels);
  const auto& s = in.spike_data();
  std::size_t zeros = 0, ones = 0, halves = 0;
  for (std::size_t t = 0; t < 50; ++t) {
    for (std::size_t n = 0; n < kImagePixels; ++n) {
      zeros += s.at(t, 0, n);
      ones += s.at(t, 1, n);
      halves += s.at(t, 2, n);
    }
  }
  CHECK(zeros == 0);
  CHECK(ones == 50 * kImagePixels);
  const double rate = static_cast<double>(halves) / (50.0 * kImagePixels);
  CHECK(std::abs(rate - 0.5) < 0.01);

  const auto again = rate_encode(batch, {EncodingMode::kRate, 50, 9});
  CHECK(again.spike_data().bits == s.bits);
  const auto other = rate_encode(batch, {EncodingMode::kRate, 50, 10});
  CHECK(other.spike_data().bits != s.bits);

  auto bad = flat_sample(1.5f);
  const ImageSample* bad_batch[] = {&bad};
  CHECK_THROWS(rate_encode(bad_batch, {EncodingMode::kRate, 5, 1}));
}

TEST_CASE("constant-current encoding repeats the pixels") {
  const auto half = flat_sample(0.25f);
  const ImageSample* batch[] = {&half};
  const auto in = rate_encode(batch, {EncodingMode::kConstantCurrent, 4, 0});
  CHECK_FALSE(in.is_spiking());
  for (std::size_t t = 0; t < 4; ++t) CHECK(in.step(t)(0, 77) == 0.25);
}

TEST_CASE("encoding names") {
  CHECK(parse_encoding("rate") == EncodingMode::kRate);
  CHECK(parse_encoding("current") == EncodingMode::kConstantCurrent);
  CHECK(std::string(encoding_name(EncodingMode::kRate)) == "rate");
  CHECK_THROWS(parse_encoding("poisson"));
}

TEST_CASE("BatchSampler batch sizes and reshuffling") {
  CHECK(BatchSampler(90, 30, 1, false).batches_per_epoch() == 3);
  const auto b = BatchSampler(95, 30, 1, false).epoch(0);
  REQUIRE(b.size() == 4);
  CHECK(b[0].size() == 30);
  CHECK(b[1].size() == 30);
  CHECK(b[2].size() == 30);
  CHECK(b[3].size() == 5);
  CHECK(b[0][0] == 0);
  CHECK(b[3][4] == 94);

  const BatchSampler s(95, 30, 7, true);
  const auto e1 = s.epoch(1), e2 = s.epoch(2);
  auto flat = [](const std::vector<std::vector<std::size_t>>& bs) {
    std::vector<std::size_t> out;
    for (const auto& x : bs) out.insert(out.end(), x.begin(), x.end());
    return out;
  };
  auto f1 = flat(e1), f2 = flat(e2);
  CHECK(f1 != f2);
  CHECK(flat(s.epoch(1)) == f1);
  std::sort(f1.begin(), f1.end());
  std::sort(f2.begin(), f2.end());
  CHECK(f1 == f2);
  CHECK(f1.front() == 0);
  CHECK(f1.back() == 94);
  CHECK_THROWS(BatchSampler(10, 0, 1, false));
}

TEST_CASE("synth_dataset is balanced, deterministic and separable") {
  const auto a = synth_dataset(20, 3);
  CHECK(a.size() == 40);
  CHECK(a.class_counts[0] == 20);
  CHECK(a.class_counts[1] == 20);
  const auto b = synth_dataset(20, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].pixels == b.samples[i].pixels);
    CHECK(a.samples[i].label == b.samples[i].label);
  }
  double mean[2] = {0, 0};
  for (const auto& s : a.samples) {
    double m = 0;
    for (float v : s.pixels) {
      CHECK((v >= 0.0f && v <= 1.0f));
      m += v;
    }
    mean[s.label] += m / static_cast<double>(s.pixels.size()) / 20.0;
  }
  CHECK(mean[kVehicle] - mean[kNonVehicle] > 0.05);
  CHECK_THROWS_AS(synth_dataset(0, 1), std::invalid_argument);
}

TEST_CASE("write_dataset then load_directory round trips") {
  TempDir tmp("roundtrip");
  const auto ds = synth_dataset(3, 4);
  write_dataset(ds, tmp.path());
  const auto r = load_directory(tmp.path() / "vehicle", tmp.path() / "non-vehicle");
  CHECK(r.dataset.size() == 6);
  CHECK(r.dataset.class_counts[kVehicle] == 3);
  for (const auto& s : r.dataset.samples) {
    // find the synthetic sample with matching label whose pixels agree to 8-bit precision
    bool found = false;
    for (const auto& o : ds.samples) {
      if (o.label != s.label) continue;
      bool same = true;
      for (std::size_t i = 0; i < kImagePixels && same; ++i) {
        same = std::abs(o.pixels[i] - s.pixels[i]) <= 0.5f / 255.0f + 1e-6f;
      }
      found = found || same;
    }
    CHECK(found);
  }
}
