#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dufold/binio.hpp"
#include "dufold/checkpoint.hpp"
#include "dufold/config.hpp"
#include "dufold/dataset.hpp"
#include "dufold/errors.hpp"
#include "support.hpp"

using namespace dufold;
using dufold::test::max_abs_diff;
namespace fs = std::filesystem;

TEST_CASE("empty document yields the documented defaults") {
    Config cfg = parse_config("");
    CHECK(cfg.sampler.nfe == 18);
    CHECK(cfg.schedule.sigma_max == 80.0);
    CHECK(cfg.schedule.sigma_min == 0.002);
    CHECK(cfg.denoiser.K == 4);
    CHECK(cfg.train.lr == doctest::Approx(2e-4));
    CHECK(cfg.train.sigma_y_lo == 0.0);
    CHECK(cfg.train.sigma_y_hi == doctest::Approx(0.1));
    CHECK(cfg.train.tasks.size() == 2);  // deblur + inpainting pool
    CHECK(cfg.train.tasks[0].kind == OpKind::blur);
    CHECK(cfg.train.tasks[1].kind == OpKind::inpaint);
}

TEST_CASE("keys round-trip and override defaults") {
    Config cfg = parse_config("sampler.nfe = 24\nseed=7\n# comment\ndenoiser.k = 2\n");
    CHECK(cfg.sampler.nfe == 24);
    CHECK(cfg.seed == 7);
    CHECK(cfg.denoiser.K == 2);
    CHECK(cfg.effective.at("sampler.nfe") == "24");
    CHECK(cfg.canonical_text.find("sampler.nfe = 24\n") != std::string::npos);

    // the shipped default is NFE = 18
    Config def = parse_config("");
    CHECK(def.effective.at("sampler.nfe") == "18");
}

TEST_CASE("validation and strictness") {
    CHECK_THROWS_WITH_AS(parse_config("sampler.nfe = -1"), doctest::Contains("sampler.nfe"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("totally.unknown = 3"), doctest::Contains("totally.unknown"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("train.lr = banana"), doctest::Contains("train.lr"),
                         ConfigError);
    CHECK_THROWS_AS(parse_config("denoiser.k = 9"), ConfigError);
    CHECK_THROWS_AS(parse_config("schedule.sigma_min = 100\nschedule.sigma_max = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config("task.0.drop_p = 1.5\ntask.0.kind = inpaint"), ConfigError);
    CHECK_THROWS_AS(parse_config("nonsense line without equals"), ConfigError);
}

TEST_CASE("fingerprint is stable and value-sensitive") {
    Config a = parse_config("sampler.nfe = 24");
    Config b = parse_config("sampler.nfe =   24  # spacing and comments do not matter");
    Config c = parse_config("sampler.nfe = 25");
    CHECK(a.fingerprint == b.fingerprint);
    CHECK(a.fingerprint != c.fingerprint);
    CHECK(a.fingerprint != parse_config("").fingerprint);
    CHECK(fnv1a64("x") != fnv1a64("y"));
}

TEST_CASE("default config text parses to itself") {
    Config def = parse_config("");
    Config round = parse_config(default_config_text());
    CHECK(def.fingerprint == round.fingerprint);
}

namespace {

CheckpointData sample_data() {
    Rng rng(11);
    CheckpointData data;
    data.config_fingerprint = 0xABCDEF1234ull;
    data.step = 420;
    data.params.push_back({"w1", rng.randn({3, 4})});
    data.params.push_back({"w2", rng.randn({8})});
    data.params.push_back({"cplx", rng.randn({2, 2}, true)});
    data.optimizer.push_back({"adam.m.w1", rng.randn({3, 4})});
    data.ema.push_back({"w1", rng.randn({3, 4})});
    return data;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("checkpoint save/load/save is byte-identical") {
    const fs::path dir = fs::temp_directory_path() / "dufold_ckpt_test";
    fs::create_directories(dir);
    const CheckpointData data = sample_data();
    save_checkpoint((dir / "a.duck").string(), data);
    CheckpointData loaded = load_checkpoint((dir / "a.duck").string());
    CHECK(loaded.config_fingerprint == data.config_fingerprint);
    CHECK(loaded.step == 420);
    REQUIRE(loaded.params.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded.params[i].name == data.params[i].name);
        CHECK(max_abs_diff(loaded.params[i].tensor, data.params[i].tensor) == 0.0);
        CHECK(loaded.params[i].tensor.is_complex() == data.params[i].tensor.is_complex());
    }
    save_checkpoint((dir / "b.duck").string(), loaded);
    CHECK(slurp(dir / "a.duck") == slurp(dir / "b.duck"));
    fs::remove_all(dir);
}

TEST_CASE("single-byte corruption is detected") {
    const fs::path dir = fs::temp_directory_path() / "dufold_ckpt_corrupt";
    fs::create_directories(dir);
    save_checkpoint((dir / "c.duck").string(), sample_data());
    std::string bytes = slurp(dir / "c.duck");
    // flip one payload byte in the middle
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    {
        std::ofstream f(dir / "c.duck", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint((dir / "c.duck").string()), IntegrityError);
    fs::remove_all(dir);
}

TEST_CASE("truncation, bad magic, and version mismatch are explicit errors") {
    const fs::path dir = fs::temp_directory_path() / "dufold_ckpt_hdr";
    fs::create_directories(dir);
    save_checkpoint((dir / "d.duck").string(), sample_data());
    std::string bytes = slurp(dir / "d.duck");

    {
        std::ofstream f(dir / "trunc.duck", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint((dir / "trunc.duck").string()), IntegrityError);

    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream f(dir / "magic.duck", std::ios::binary);
        f.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK_THROWS_AS(load_checkpoint((dir / "magic.duck").string()), IntegrityError);

    {
        // bump the version field (bytes 4..5) and refresh the trailing CRC
        std::string bad = bytes;
        bad[4] = 9;
        const std::string body = bad.substr(0, bad.size() - 4);
        const std::uint32_t crc =
            io::crc32(reinterpret_cast<const unsigned char*>(body.data()), body.size());
        for (int i = 0; i < 4; ++i)
            bad[bad.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xFF);
        std::ofstream f(dir / "ver.duck", std::ios::binary);
        f.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "ver.duck").string()), doctest::Contains("version"),
                         IntegrityError);
    fs::remove_all(dir);
}

TEST_CASE("snapshot/restore round trip and exact training resume") {
    const fs::path dir = fs::temp_directory_path() / "dufold_ckpt_resume";
    fs::create_directories(dir);

    DenoiserConfig dcfg;
    dcfg.K = 2;
    dcfg.base_channels = 4;
    dcfg.embed_dim = 8;
    NoiseSchedule sched = NoiseSchedule::edm();
    TrainConfig tcfg;
    tcfg.seed = 5;
    tcfg.batch_size = 2;
    tcfg.lr = 1e-3;
    TaskSpec blur;
    blur.kind = OpKind::blur;
    blur.blur_size = 5;
    blur.blur_sigma1 = blur.blur_sigma2 = 1.2;
    tcfg.tasks = {blur};
    Rng drng(21);
    ImageDataset ds = gen_synthetic(SynthKind::shapes, 6, 8, drng);

    auto make_model = [&](std::uint64_t seed) {
        Rng r(seed);
        return std::make_unique<ConditionalDenoiser>(dcfg, sched, Preconditioner{}, r);
    };

    auto den_a = make_model(1);
    Rng hr(2);
    UncertaintyHead head_a(8, hr);
    TrainState state_a;
    std::vector<double> losses;
    for (int i = 0; i < 5; ++i)
        losses.push_back(train_step(state_a, tcfg, *den_a, ds, sched, head_a));

    std::vector<ad::Param*> params_a = den_a->params();
    {
        auto hp = head_a.params();
        params_a.insert(params_a.end(), hp.begin(), hp.end());
    }
    save_checkpoint((dir / "mid.duck").string(), snapshot_training(777, params_a, &state_a));

    // continue run A
    std::vector<double> tail_a;
    for (int i = 0; i < 5; ++i)
        tail_a.push_back(train_step(state_a, tcfg, *den_a, ds, sched, head_a));

    // fresh model B restored from the checkpoint resumes bit-exactly
    auto den_b = make_model(999);  // different init, fully overwritten by restore
    Rng hr_b(998);
    UncertaintyHead head_b(8, hr_b);
    std::vector<ad::Param*> params_b = den_b->params();
    {
        auto hp = head_b.params();
        params_b.insert(params_b.end(), hp.begin(), hp.end());
    }
    CheckpointData loaded = load_checkpoint((dir / "mid.duck").string());
    CHECK(loaded.config_fingerprint == 777);
    restore_params(loaded, params_b, /*prefer_ema=*/false);
    TrainState state_b;
    state_b.init(params_b, tcfg);
    restore_training(loaded, params_b, state_b);

    for (int i = 0; i < 5; ++i) {
        const double lb = train_step(state_b, tcfg, *den_b, ds, sched, head_b);
        CHECK(lb == tail_a[i]);
    }

    // EMA-preferred restore pulls the averaged weights
    auto den_c = make_model(998);
    restore_params(loaded, den_c->params(), /*prefer_ema=*/true);
    bool matches_ema = true;
    auto pc = den_c->params();
    for (std::size_t i = 0; i < pc.size(); ++i) {
        const Tensor* e = loaded.find(loaded.ema, pc[i]->name);
        REQUIRE(e != nullptr);
        matches_ema = matches_ema && max_abs_diff(pc[i]->value, *e) == 0.0;
    }
    CHECK(matches_ema);

    // missing tensors are an integrity error
    CheckpointData incomplete = loaded;
    incomplete.params.pop_back();
    incomplete.ema.clear();
    CHECK_THROWS_AS(restore_params(incomplete, params_b, false), IntegrityError);
    fs::remove_all(dir);
}
