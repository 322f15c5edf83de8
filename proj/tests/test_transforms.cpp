#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace rpfgsm;
using namespace rpfgsm::testing;
using transforms::TransformKind;
using transforms::TransformSpec;

namespace {

TransformSpec spec(TransformKind k, double p, double p2 = 0, double p3 = 0) {
  return TransformSpec{k, p, p2, p3};
}

std::vector<TransformSpec> all_defense_specs() {
  std::vector<TransformSpec> out;
  for (int b = 1; b <= 7; ++b) out.push_back(TransformSpec::requantize(b));
  for (int k : {2, 3, 5}) out.push_back(TransformSpec::median(k));
  for (int q : {25, 50, 75, 100}) out.push_back(TransformSpec::jpeg(q));
  return out;
}

Tensor constant_image(double v, std::size_t h = 32, std::size_t w = 32) { return Tensor({3, h, w}, v); }

// Smooth images with detail: the synthetic corpus plus uniform noise images.
std::vector<Tensor> corpus(std::size_t n, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (auto& r : generate_synthetic(seed, n / 2, 10)) out.push_back(std::move(r.image));
  auto noise = random_images(n - n / 2, seed + 1);
  out.insert(out.end(), noise.begin(), noise.end());
  return out;
}

// Independent JPEG round trip: per-pixel colour conversion, direct DCT sums.
Tensor reference_jpeg(const Tensor& img, int quality) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  const double pi = std::acos(-1.0);
  auto c = [](int u) { return u == 0 ? std::sqrt(0.125) : 0.5; };
  Tensor ycc({3, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const double r = img[i], g = img[h * w + i], b = img[2 * h * w + i];
    ycc[i] = 0.299 * r + 0.587 * g + 0.114 * b - 128;
    ycc[h * w + i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
    ycc[2 * h * w + i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  Tensor rec({3, h, w});
  for (int ch = 0; ch < 3; ++ch) {
    const auto table = transforms::jpeg::channel_table(ch, quality);
    for (std::size_t by = 0; by < h; by += 8) {
      for (std::size_t bx = 0; bx < w; bx += 8) {
        double q[8][8];
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int y = 0; y < 8; ++y)
              for (int x = 0; x < 8; ++x)
                s += ycc[(ch * h + by + y) * w + bx + x] * std::cos((2 * y + 1) * u * pi / 16) *
                     std::cos((2 * x + 1) * v * pi / 16);
            q[u][v] = std::round(c(u) * c(v) * s / table[u * 8 + v]) * table[u * 8 + v];
          }
        }
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int u = 0; u < 8; ++u)
              for (int v = 0; v < 8; ++v)
                s += c(u) * c(v) * q[u][v] * std::cos((2 * y + 1) * u * pi / 16) *
                     std::cos((2 * x + 1) * v * pi / 16);
            rec[(ch * h + by + y) * w + bx + x] = s;
          }
        }
      }
    }
  }
  Tensor out({3, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const double y = rec[i] + 128, cb = rec[h * w + i], cr = rec[2 * h * w + i];
    const double rgb[3] = {y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb};
    for (int ch = 0; ch < 3; ++ch) out[ch * h * w + i] = std::round(std::clamp(rgb[ch], 0.0, 255.0));
  }
  return out;
}

// Scalar sRGB (D65) -> Lab.
std::array<double, 3> reference_lab(double r, double g, double b) {
  auto lin = [](double v) {
    v /= 255.0;
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
  auto f = [](double t) {
    const double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(X / 0.95047), fy = f(Y), fz = f(Z / 1.08883);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) { return linf_distance(a, b); }

Tensor surrogate_forward(const TransformSpec& s, const Tensor& image) {
  return ad::evaluate(transforms::build_differentiable(s, image.shape())(ad::leaf("x")), {{"x", image}});
}

}  // namespace

TEST(Requantize, OneBitExamples) {
  Tensor img = constant_image(0);
  img[0] = 100;
  img[1] = 200;
  const Tensor out = transforms::apply_exact(TransformSpec::requantize(1), img);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 255.0);
}

TEST(Requantize, MatchesMappingForEveryIntensity) {
  for (int b = 1; b <= 7; ++b) {
    const double a = (std::pow(2.0, b) - 1) / 255.0;
    Tensor img({3, 16, 16});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 256);
    const Tensor out = transforms::apply_exact(TransformSpec::requantize(b), img);
    std::set<double> levels;
    for (std::size_t i = 0; i < img.size(); ++i) {
      EXPECT_EQ(out[i], std::round(std::round(img[i] * a) / a)) << "b=" << b;
      levels.insert(out[i]);
    }
    EXPECT_EQ(levels.size(), std::size_t{1} << b);
  }
}

TEST(Requantize, Idempotent) {
  for (const auto& img : corpus(20, 3)) {
    for (int b = 1; b <= 7; ++b) {
      const auto s = TransformSpec::requantize(b);
      const Tensor once = transforms::apply_exact(s, img);
      EXPECT_EQ(transforms::apply_exact(s, once), once) << "b=" << b;
    }
  }
}

TEST(Median, ConstantImageUnchanged) {
  for (int k : {2, 3, 5}) {
    const Tensor img = constant_image(77);
    EXPECT_EQ(transforms::apply_exact(TransformSpec::median(k), img), img);
  }
}

TEST(Median, ReflectBorderAndEvenAnchor) {
  // one plane, 3x3:  1 2 3 / 4 5 6 / 7 8 9
  const Tensor img({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor k3 = transforms::apply_exact(TransformSpec::median(3), img);
  // (0,0) reflects to rows/cols {1,0,1}: 5 4 5 / 2 1 2 / 5 4 5
  EXPECT_EQ(k3[0], 4.0);
  EXPECT_EQ(k3[4], 5.0);
  const Tensor k2 = transforms::apply_exact(TransformSpec::median(2), img);
  // (0,0) covers 1 2 4 5, lower middle 2; (2,2) reflects to 9 8 6 5, lower middle 6
  EXPECT_EQ(k2[0], 2.0);
  EXPECT_EQ(k2[8], 6.0);
}

TEST(Median, SurrogateForwardIsExact) {
  for (const auto& img : corpus(10, 4)) {
    for (int k : {2, 3, 5}) {
      const auto s = TransformSpec::median(k);
      EXPECT_EQ(surrogate_forward(s, img), transforms::apply_exact(s, img));
    }
  }
}

TEST(Jpeg, QualityFiftyUsesBaseTables) {
  EXPECT_EQ(transforms::jpeg::scaled_table(transforms::jpeg::kLuminance, 50), transforms::jpeg::kLuminance);
  for (int v : transforms::jpeg::scaled_table(transforms::jpeg::kChrominance, 100)) EXPECT_EQ(v, 1);
  const auto t25 = transforms::jpeg::scaled_table(transforms::jpeg::kLuminance, 25);
  EXPECT_EQ(t25[0], 32);  // (16 * 200 + 50) / 100
}

TEST(Jpeg, MatchesIndependentReference) {
  for (const auto& img : corpus(6, 5)) {
    for (int q : {25, 50, 75, 100}) {
      const Tensor got = transforms::apply_exact(TransformSpec::jpeg(q), img);
      const Tensor want = reference_jpeg(img, q);
      // Both sides round; a value within 1e-9 of a .5 boundary could split.
      std::size_t differ = 0;
      for (std::size_t i = 0; i < got.size(); ++i) differ += got[i] != want[i];
      EXPECT_EQ(differ, 0u) << "q=" << q;
    }
  }
}

TEST(Jpeg, QualityHundredStaysWithinThreeLevels) {
  double worst = 0;
  for (const auto& img : corpus(300, 6)) {
    worst = std::max(worst, max_abs_diff(transforms::apply_exact(TransformSpec::jpeg(100), img), img));
  }
  EXPECT_LE(worst, 3.0);
}

TEST(Jpeg, RejectsSidesNotMultipleOfEight) {
  EXPECT_THROW(transforms::apply_exact(TransformSpec::jpeg(50), Tensor({3, 12, 16})), ShapeError);
}

TEST(Defenses, ExactOutputsAreIntegerImages) {
  for (const auto& img : corpus(20, 7)) {
    for (const auto& s : all_defense_specs()) {
      EXPECT_TRUE(is_valid_pixel_image(transforms::apply_exact(s, img))) << transforms::to_string(s);
    }
  }
}

TEST(Defenses, IllegalParametersRejected) {
  for (const auto& s : {TransformSpec::requantize(0), TransformSpec::requantize(8), TransformSpec::median(4),
                        TransformSpec::median(1), TransformSpec::jpeg(60), TransformSpec::jpeg(0)}) {
    EXPECT_THROW(transforms::apply_exact(s, constant_image(1)), transforms::TransformError)
        << transforms::to_string(s);
    EXPECT_THROW(transforms::build_differentiable(s, {3, 32, 32}), transforms::TransformError);
  }
  EXPECT_THROW(transforms::apply_exact(spec(TransformKind::requantize, 2.5), constant_image(1)),
               transforms::TransformError);
}

TEST(Surrogate, CubicRoundingExample) {
  const auto y = ad::evaluate(ad::round_cubic(ad::leaf("x")), {{"x", Tensor::vector({2.3})}});
  EXPECT_NEAR(y[0], 2.027, 1e-12);
}

TEST(Surrogate, ErrorWithinBoundForEveryDefense) {
  const auto images = random_images(1000, 8);
  const auto smooth = corpus(200, 9);
  for (const auto& s : all_defense_specs()) {
    const double bound = transforms::surrogate_bound(s);
    double worst = 0;
    const auto& set = s.kind == TransformKind::requantize ? images : smooth;
    for (const auto& img : set) {
      worst = std::max(worst, max_abs_diff(surrogate_forward(s, img), transforms::apply_exact(s, img)));
    }
    EXPECT_LE(worst, bound) << transforms::to_string(s);
    if (s.kind == TransformKind::requantize) {
      EXPECT_DOUBLE_EQ(bound, 0.125 * 255.0 / (std::pow(2.0, s.param) - 1));
    }
  }
}

TEST(Surrogate, JpegBoundHoldsOnNoiseImages) {
  const auto images = random_images(300, 10);
  for (int q : {25, 50, 75, 100}) {
    const auto s = TransformSpec::jpeg(q);
    double worst = 0;
    for (const auto& img : images) {
      worst = std::max(worst, max_abs_diff(surrogate_forward(s, img), transforms::apply_exact(s, img)));
    }
    EXPECT_LE(worst, transforms::surrogate_bound(s)) << q;
  }
}

// Finite differences through every fragment, skipping coordinates whose
// perturbation moves a rounding input across a .5 boundary (the cubic
// surrogate jumps there).
TEST(Surrogate, FragmentsMatchFiniteDifferences) {
  Rng rng(12);
  std::vector<TransformSpec> specs = all_defense_specs();
  specs.push_back(spec(TransformKind::scale, 0.87));
  specs.push_back(spec(TransformKind::translate, 0.13, -0.07));
  specs.push_back(spec(TransformKind::rotate, 23.0));
  specs.push_back(spec(TransformKind::brighten, 7.5));
  specs.push_back(spec(TransformKind::darken, 12.0));
  specs.push_back(TransformSpec{TransformKind::gauss_noise, 25, 0, 0, 99});
  specs.push_back(spec(TransformKind::resize_pad, 13, 1, 2));
  const Shape shape{3, 16, 16};
  for (const auto& s : specs) {
    // JPEG outputs sum ~200 coupled terms near 255; a wider step keeps their
    // roundoff below the tolerance.
    const double h = s.kind == TransformKind::jpeg ? 1e-4 : 1e-5;
    Tensor img = random_tensor(shape, rng, 20, 235);
    if (s.kind == TransformKind::median) img = well_separated(shape, rng);
    const ad::Expr out = transforms::build_differentiable(s, shape)(ad::leaf("x"));
    const Tensor weights = random_tensor(shape, rng, 0.5, 1.5);
    auto skip = [&](std::size_t i) {
      ad::Bindings b{{"x", img}};
      b["x"][i] += h;
      const auto up = rounding_inputs(out, b);
      b["x"][i] -= 2 * h;
      return !same_roundings(up, rounding_inputs(out, b));
    };
    std::vector<std::size_t> coords;
    for (int i = 0; i < 12; ++i) coords.push_back(rng.index(img.size()));
    // Requantize derivatives 3f^2 vanish near integers, where differences of
    // outputs around 100 lose them to cancellation: compare entries above 1e-3.
    const auto r = finite_difference_check(out, weights, {{"x", img}}, "x", coords, h, skip, 1e-3);
    EXPECT_LT(r.worst, 1e-6) << transforms::to_string(s);
    EXPECT_GT(r.checked, 0u) << transforms::to_string(s);
  }
}

TEST(Geometric, RotateZeroIsIdentity) {
  Rng rng(13);
  const Tensor img = random_tensor({3, 32, 32}, rng, 0, 255);
  const Tensor out = surrogate_forward(spec(TransformKind::rotate, 0.0), img);
  EXPECT_LE(max_abs_diff(out, img), 1e-9);
  const Tensor scaled = surrogate_forward(spec(TransformKind::scale, 1.0), img);
  EXPECT_LE(max_abs_diff(scaled, img), 1e-9);
}

TEST(Geometric, BrightenClampsAtTop) {
  const Tensor out = transforms::apply_exact(spec(TransformKind::brighten, 13), constant_image(250));
  EXPECT_EQ(out[0], 255.0);
  const Tensor dark = transforms::apply_exact(spec(TransformKind::darken, 13), constant_image(5));
  EXPECT_EQ(dark[0], 0.0);
}

TEST(Geometric, TranslateOutsideRangeRejected) {
  EXPECT_THROW(transforms::apply_exact(spec(TransformKind::translate, 0.5), constant_image(1)),
               transforms::TransformError);
  EXPECT_THROW(transforms::apply_exact(spec(TransformKind::translate, 0.0, -0.25), constant_image(1)),
               transforms::TransformError);
  EXPECT_THROW(transforms::validate(spec(TransformKind::scale, 1.3)), transforms::TransformError);
  EXPECT_THROW(transforms::validate(spec(TransformKind::rotate, -61)), transforms::TransformError);
  EXPECT_THROW(transforms::validate(spec(TransformKind::brighten, 14)), transforms::TransformError);
  EXPECT_THROW(transforms::validate(spec(TransformKind::resize_pad, 30, 3, 0), {3, 32, 32}),
               transforms::TransformError);
}

TEST(Geometric, IntegerTranslationShiftsColumns) {
  Rng rng(14);
  const Tensor img = random_image(rng);
  const Tensor out = transforms::apply_exact(spec(TransformKind::translate, 4.0 / 32.0), img);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const double want = x < 4 ? 0.0 : img[(c * 32 + y) * 32 + x - 4];
        EXPECT_EQ(out[(c * 32 + y) * 32 + x], want);
      }
    }
  }
}

TEST(Geometric, ResizePadKeepsSizeAndZeroPads) {
  Rng rng(15);
  const Tensor img = random_tensor({3, 32, 32}, rng, 1, 255);
  const Tensor out = surrogate_forward(spec(TransformKind::resize_pad, 28, 3, 1), img);
  ASSERT_EQ(out.shape(), img.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const bool inside = y >= 3 && y < 31 && x >= 1 && x < 29;
        const double v = out[(c * 32 + y) * 32 + x];
        if (!inside) EXPECT_EQ(v, 0.0);
        else EXPECT_GT(v, 0.0);
      }
    }
  }
  const Tensor same = surrogate_forward(spec(TransformKind::resize_pad, 32, 0, 0), img);
  EXPECT_LE(max_abs_diff(same, img), 1e-9);
}

TEST(Geometric, GaussNoiseIsSeeded) {
  Rng rng(16);
  const Tensor img = random_tensor({3, 32, 32}, rng, 100, 150);
  const TransformSpec a{TransformKind::gauss_noise, 25, 0, 0, 1}, b{TransformKind::gauss_noise, 25, 0, 0, 2};
  const Tensor ya = surrogate_forward(a, img);
  EXPECT_EQ(ya, surrogate_forward(a, img));
  EXPECT_NE(ya, surrogate_forward(b, img));
  double mean = 0, var = 0;
  for (std::size_t i = 0; i < img.size(); ++i) mean += ya[i] - img[i];
  mean /= static_cast<double>(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) var += std::pow(ya[i] - img[i] - mean, 2);
  var /= static_cast<double>(img.size());
  EXPECT_NEAR(mean, 0.0, 0.3);
  EXPECT_NEAR(var, 25.0, 2.5);
}

TEST(Geometric, ExactOutputsAreIntegerImages) {
  Rng rng(17);
  const auto set = transforms::eot_set();
  for (int t = 0; t < 30; ++t) {
    const auto s = transforms::sample_transform(set, rng);
    EXPECT_TRUE(is_valid_pixel_image(transforms::apply_exact(s, random_image(rng)))) << transforms::to_string(s);
  }
}

TEST(Sampling, IdentitySingleton) {
  Rng rng(18);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(transforms::sample_transform(transforms::identity_set(), rng), TransformSpec::identity());
  }
}

TEST(Sampling, EmptySetRejected) {
  Rng rng(1);
  EXPECT_THROW(transforms::sample_transform(transforms::TransformSet{}, rng), transforms::TransformError);
}

TEST(Sampling, KindFrequenciesWithinBinomialBand) {
  Rng rng(19);
  std::map<TransformKind, int> kinds;
  std::map<double, int> bits;
  const auto set = transforms::defense_set();
  for (int i = 0; i < 10000; ++i) {
    const auto s = transforms::sample_transform(set, rng);
    ++kinds[s.kind];
    if (s.kind == TransformKind::requantize) ++bits[s.param];
    EXPECT_NO_THROW(transforms::validate(s));
  }
  ASSERT_EQ(kinds.size(), 4u);
  for (const auto& [k, n] : kinds) {
    EXPECT_NEAR(n, 2500, 150) << transforms::kind_name(k);
  }
  EXPECT_EQ(bits.size(), 7u);
}

TEST(Sampling, ContinuousDomainsStayInRange) {
  Rng rng(20);
  const auto set = transforms::eot_set();
  for (int i = 0; i < 2000; ++i) {
    const auto s = transforms::sample_transform(set, rng);
    EXPECT_NO_THROW(transforms::validate(s, {3, 32, 32})) << transforms::to_string(s);
  }
  const transforms::TransformSet di{{transforms::full_domain(TransformKind::resize_pad)}};
  for (int i = 0; i < 500; ++i) {
    const auto s = transforms::sample_transform(di, rng);
    EXPECT_GE(s.param, 28);
    EXPECT_LE(s.param, 31);
    EXPECT_NO_THROW(transforms::validate(s, {3, 32, 32}));
  }
}

TEST(Sampling, SameSeedSameSequence) {
  Rng a(21), b(21);
  const auto set = transforms::eot_set();
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(transforms::sample_transform(set, a), transforms::sample_transform(set, b));
  }
}

TEST(Spec, ParseAndPrintRoundTrip) {
  for (const std::string text : {"identity", "requantize:3", "median:5", "jpeg:75", "scale:0.9",
                                 "translate:0.1,-0.2", "rotate:-30", "brighten:13", "darken:2.5",
                                 "gauss-noise:25", "resize-pad:28,1,3"}) {
    EXPECT_EQ(transforms::to_string(transforms::parse_spec(text)), text);
  }
  EXPECT_THROW(transforms::parse_spec("blur:3"), Error);
  EXPECT_THROW(transforms::parse_spec("jpeg"), transforms::TransformError);
  EXPECT_THROW(transforms::parse_spec("jpeg:high"), transforms::TransformError);
  EXPECT_THROW(transforms::parse_spec("median:4"), transforms::TransformError);
}

TEST(Spec, ParseSetRestrictsParameters) {
  const auto set = transforms::parse_set({"identity", "jpeg:50", "median"});
  ASSERT_EQ(set.size(), 3u);
  EXPECT_TRUE(set.includes_identity());
  EXPECT_EQ(set.entries[1].values, std::vector<double>{50});
  EXPECT_EQ(set.entries[2].values, (std::vector<double>{2, 3, 5}));
  EXPECT_FALSE(transforms::defense_set(false).includes_identity());
}

TEST(Lab, WhiteAndBlack) {
  const Tensor white = transforms::rgb_to_lab(constant_image(255, 1, 1));
  EXPECT_NEAR(white[0], 100.0, 1e-4);  // the Y row of the sRGB matrix sums to 1.0000001
  EXPECT_LT(std::abs(white[1]), 0.01);
  EXPECT_LT(std::abs(white[2]), 0.01);
  const Tensor black = transforms::rgb_to_lab(constant_image(0, 1, 1));
  EXPECT_NEAR(black[0], 0.0, 1e-9);
}

TEST(Lab, MatchesScalarReference) {
  const Tensor gray = transforms::rgb_to_lab(constant_image(119, 1, 1));
  const auto want = reference_lab(119, 119, 119);
  EXPECT_NEAR(gray[0], want[0], 1e-9);
  EXPECT_LT(std::abs(gray[1]), 0.01);
  EXPECT_LT(std::abs(gray[2]), 0.01);
  Rng rng(22);
  const Tensor img = random_tensor({3, 4, 5}, rng, 0, 255);
  const Tensor lab = transforms::rgb_to_lab(img);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto r = reference_lab(img[i], img[20 + i], img[40 + i]);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(lab[c * 20 + i], r[c], 1e-9);
  }
}

TEST(Lab, GradientMatchesFiniteDifferences) {
  Rng rng(23);
  const Tensor img = random_tensor({3, 3, 3}, rng, 5, 250);
  const auto r = finite_difference_check(transforms::rgb_to_lab(ad::leaf("x")),
                                         random_tensor({3, 3, 3}, rng, 0.5, 1.5), {{"x", img}}, "x");
  EXPECT_LT(r.worst, 1e-6);
}
