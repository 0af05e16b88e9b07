#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dufold/dataset.hpp"
#include "dufold/errors.hpp"
#include "dufold/image_io.hpp"
#include "dufold/metrics.hpp"
#include "dufold/rng.hpp"
#include "support.hpp"

using namespace dufold;
using dufold::test::max_abs_diff;
namespace fs = std::filesystem;

TEST_CASE("psnr values and the exact-match cap") {
    Rng rng(1);
    Tensor img = rng.randn({1, 8, 8});
    bool exact = false;
    CHECK(psnr(img, img, 1.0, &exact) == kPsnrCap);
    CHECK(exact);

    // MSE 0.01 -> 20 dB, MSE 1 -> 0 dB
    Tensor ref = Tensor::zeros({100});
    Tensor off = Tensor::full({100}, 0.1);
    CHECK(psnr(off, ref, 1.0, &exact) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_FALSE(exact);
    CHECK(psnr(Tensor::full({100}, 1.0), ref) == doctest::Approx(0.0).epsilon(1e-12));

    // symmetric in its arguments
    Tensor a = rng.randn({1, 8, 8});
    Tensor b = rng.randn({1, 8, 8});
    CHECK(psnr(a, b) == psnr(b, a));

    CHECK_THROWS_AS(psnr(a, rng.randn({1, 4, 4})), ArgumentError);
    CHECK_THROWS_AS(psnr(a, b, 0.0), ArgumentError);
}

TEST_CASE("ssim basics") {
    Rng rng(2);
    Tensor img = rng.randn({1, 9, 9});
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor flat = Tensor::full({1, 16, 16}, 0.5);
    Tensor wobble = flat;
    Rng nz(3);
    for (std::size_t i = 0; i < wobble.raw_size(); ++i) wobble[i] += 1e-4 * nz.normal();
    const double s = ssim(wobble, flat);
    CHECK(s > 0.9);
    CHECK(s <= 1.0);

    Tensor other = rng.randn({1, 9, 9});
    CHECK(ssim(img, other) == doctest::Approx(ssim(other, img)).epsilon(1e-12));

    CHECK_THROWS_AS(ssim(Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 6, 6})), ArgumentError);
}

TEST_CASE("single-window ssim matches the direct formula") {
    Rng rng(4);
    Tensor a = rng.randn({7, 7});
    Tensor b = rng.randn({7, 7});
    const double got = ssim(a, b);

    const double n = 49.0, c1 = 1e-4, c2 = 9e-4;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < 49; ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    const double mua = sa / n, mub = sb / n;
    const double va = saa / n - mua * mua, vb = sbb / n - mub * mub;
    const double cov = sab / n - mua * mub;
    const double want =
        ((2 * mua * mub + c1) * (2 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
    CHECK(std::abs(got - want) < 1e-10);
}

TEST_CASE("synthetic datasets: range, determinism, covariance") {
    Rng rng(5);
    ImageDataset grf = gen_synthetic(SynthKind::grf, 4, 32, rng);
    for (const auto& item : grf.items) {
        CHECK(item.min() >= 0.0);
        CHECK(item.max() <= 1.0);
    }
    Rng rng2(6);
    ImageDataset shapes = gen_synthetic(SynthKind::shapes, 6, 24, rng2);
    for (const auto& item : shapes.items) {
        CHECK(item.min() >= 0.0);
        CHECK(item.max() <= 1.0);
    }

    Rng a(7), b(7);
    ImageDataset d1 = gen_synthetic(SynthKind::shapes, 3, 16, a);
    ImageDataset d2 = gen_synthetic(SynthKind::shapes, 3, 16, b);
    for (std::size_t i = 0; i < 3; ++i) CHECK(max_abs_diff(d1.items[i], d2.items[i]) == 0.0);

    // gauss1d sample covariance within 5% Frobenius over 1e5 draws
    GaussianPriorSpec prior = default_gauss1d_prior(6);
    Rng c(8);
    ImageDataset g = gen_gauss1d(prior, 100000, c);
    Tensor cov = Tensor::zeros({6, 6});
    Tensor mean = Tensor::zeros({6});
    for (const auto& v : g.items)
        for (std::size_t i = 0; i < 6; ++i) mean[i] += v[i] / 1e5;
    for (const auto& v : g.items)
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                cov[i * 6 + j] += (v[i] - mean[i]) * (v[j] - mean[j]) / 1e5;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 36; ++i) {
        num += (cov[i] - prior.cov[i]) * (cov[i] - prior.cov[i]);
        den += prior.cov[i] * prior.cov[i];
    }
    CHECK(std::sqrt(num / den) < 0.05);

    CHECK_THROWS_AS(gen_synthetic(SynthKind::shapes, 0, 16, rng), ArgumentError);
    CHECK_THROWS_AS(synth_kind_from_name("nope"), ArgumentError);
}

TEST_CASE("percentile normalization") {
    Rng rng(9);
    Tensor data = rng.randn({500});
    Normalized n1 = normalize_percentile(data, 99.0);
    // normalizing the already-normalized data changes nothing (scale 1)
    Normalized n2 = normalize_percentile(n1.data, 99.0);
    CHECK(n2.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(n2.data, n1.data) < 1e-12);

    // scale invariance
    Normalized big = normalize_percentile(scaled(data, 10.0), 99.0);
    CHECK(max_abs_diff(big.data, n1.data) < 1e-12);

    // round trip
    Tensor back = denormalize(n1.data, n1.scale);
    CHECK(max_abs_diff(back, data) < 1e-12);

    CHECK_THROWS_AS(normalize_percentile(Tensor::zeros({10}), 99.0), DataError);
    CHECK_THROWS_AS(normalize_percentile(data, 0.0), ArgumentError);
    CHECK_THROWS_AS(normalize_percentile(data, 101.0), ArgumentError);
}

TEST_CASE("png io: full-scale mapping and round trips") {
    const fs::path dir = fs::temp_directory_path() / "dufold_png_test";
    fs::create_directories(dir);

    Tensor black = Tensor::zeros({1, 8, 8});
    save_png((dir / "a_black.png").string(), black);
    Tensor black_back = load_png((dir / "a_black.png").string());
    CHECK(black_back.shape() == Shape{1, 8, 8});
    CHECK(black_back.max_abs() == 0.0);

    Tensor white = Tensor::full({1, 8, 8}, 1.0);
    save_png((dir / "b_white.png").string(), white);
    CHECK(load_png((dir / "b_white.png").string()).min() == 1.0);

    save_png((dir / "c_white16.png").string(), white, 16);
    CHECK(load_png((dir / "c_white16.png").string()).min() == 1.0);

    Rng rng(10);
    ImageDataset ds = gen_synthetic(SynthKind::shapes, 2, 16, rng);
    save_png((dir / "d_img.png").string(), ds.items[0]);
    Tensor round = load_png((dir / "d_img.png").string());
    CHECK(max_abs_diff(round, ds.items[0]) <= 1.0 / 255.0 + 1e-12);

    save_png((dir / "e_img16.png").string(), ds.items[1], 16);
    Tensor round16 = load_png((dir / "e_img16.png").string());
    CHECK(max_abs_diff(round16, ds.items[1]) <= 1.0 / 65535.0 + 1e-12);

    // rgb round trip
    Tensor rgb = rng.randn({3, 8, 8});
    for (std::size_t i = 0; i < rgb.raw_size(); ++i) rgb[i] = std::clamp(0.5 + 0.2 * rgb[i], 0.0, 1.0);
    save_png((dir / "f_rgb.png").string(), rgb);
    CHECK(max_abs_diff(load_png((dir / "f_rgb.png").string()), rgb) <= 1.0 / 255.0 + 1e-12);

    const fs::path dir3 = fs::temp_directory_path() / "dufold_png_uniform";
    fs::create_directories(dir3);
    save_png((dir3 / "b.png").string(), ds.items[0]);
    save_png((dir3 / "a.png").string(), ds.items[1]);
    ImageDataset folder = load_images(dir3.string());
    CHECK(folder.items.size() == 2);
    CHECK(folder.provenance == "folder:" + dir3.string());
    // lexicographic ordering: a.png first
    CHECK(max_abs_diff(folder.items[0], ds.items[1]) <= 1.0 / 255.0 + 1e-12);
    fs::remove_all(dir3);

    // mixed dimensions are rejected with the offending file named
    const fs::path dir2 = fs::temp_directory_path() / "dufold_png_mixed";
    fs::create_directories(dir2);
    save_png((dir2 / "a.png").string(), Tensor::zeros({1, 8, 8}));
    save_png((dir2 / "b.png").string(), Tensor::zeros({1, 4, 4}));
    CHECK_THROWS_WITH_AS(load_images(dir2.string()),
                         doctest::Contains("b.png"), DataError);

    CHECK_THROWS_AS(load_images((dir / "missing").string()), DataError);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("metric report aggregation and writers") {
    MetricReport r;
    r.add("a", 20.0, 0.9, false);
    r.add("b", 30.0, 0.8, false);
    r.finalize();
    CHECK(r.psnr_mean == doctest::Approx(25.0));
    CHECK(r.ssim_mean == doctest::Approx(0.85));
    CHECK(r.psnr_std == doctest::Approx(5.0));

    std::ostringstream csv, jsonl;
    r.write_csv(csv);
    r.write_jsonl(jsonl);
    CHECK(csv.str().find("name,psnr_db,ssim,exact") == 0);
    CHECK(jsonl.str().find("\"aggregate\":true") != std::string::npos);
}
