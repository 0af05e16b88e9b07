#include "dufold/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "dufold/binio.hpp"
#include "dufold/checkpoint.hpp"
#include "dufold/config.hpp"
#include "dufold/dataset.hpp"
#include "dufold/denoiser.hpp"
#include "dufold/errors.hpp"
#include "dufold/image_io.hpp"
#include "dufold/metrics.hpp"
#include "dufold/oracle.hpp"
#include "dufold/sampler.hpp"
#include "dufold/training.hpp"

namespace dufold {

namespace {

namespace fs = std::filesystem;

int worker_count() {
    if (const char* env = std::getenv("DU_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return std::min(n, 64);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return std::max(1u, std::min(hc, 16u));
}

/// Deterministic parallel map: results land by index regardless of timing.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const int workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& t : pool) t.join();
}

Config config_from_flags(const std::string& config_path, std::int64_t seed_override,
                         int nfe_override) {
    Config cfg = config_path.empty() ? parse_config("") : load_config_file(config_path);
    if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.train.seed = cfg.seed;
        cfg.sampler.seed = cfg.seed;
    }
    if (nfe_override >= 1) cfg.sampler.nfe = nfe_override;
    return cfg;
}

ImageDataset build_dataset(const Config& cfg, std::uint64_t seed) {
    if (!cfg.data.path.empty()) return load_images(cfg.data.path);
    Rng rng(seed);
    return gen_synthetic(synth_kind_from_name(cfg.data.kind), cfg.data.count, cfg.data.size, rng);
}

std::unique_ptr<ConditionalDenoiser> build_denoiser(const Config& cfg) {
    Rng rng(cfg.seed ^ 0xDE70153Full);
    return std::make_unique<ConditionalDenoiser>(cfg.denoiser, cfg.schedule, cfg.precond, rng);
}

void load_into(ConditionalDenoiser& den, const std::string& checkpoint_path,
               std::uint64_t fingerprint, bool prefer_ema) {
    const CheckpointData data = load_checkpoint(checkpoint_path);
    if (data.config_fingerprint != fingerprint)
        std::cerr << "warning: checkpoint fingerprint " << data.config_fingerprint
                  << " does not match config fingerprint " << fingerprint << ", loading anyway\n";
    restore_params(data, den.params(), prefer_ema);
}

/// (2, H, W) real pair -> (1, H, W) magnitude; other layouts pass through.
Tensor display_image(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() == 3 && s[0] == 2) {
        Tensor out = Tensor::zeros({1, s[1], s[2]});
        const std::size_t hw = s[1] * s[2];
        for (std::size_t i = 0; i < hw; ++i) out[i] = std::hypot(x[i], x[hw + i]);
        return out;
    }
    return x;
}

struct FileTrajectorySink final : TrajectorySink {
    std::string dir;
    void record(int step_index, double sigma, const Tensor& x) override {
        char name[64];
        std::snprintf(name, sizeof name, "traj_%04d.bin", step_index);
        std::ofstream f(fs::path(dir) / name, std::ios::binary);
        io::write_f64(f, sigma);
        io::write_tensor(f, x);
    }
};

LinOpPtr eval_operator(const TaskSpec& spec, const Shape& image_shape, std::uint64_t seed) {
    Rng rng(seed);
    return instantiate_task(spec, image_shape, rng);
}

struct TaskEval {
    std::string name;
    MetricReport recon;
    MetricReport baseline;
};

TaskEval run_eval_task(const Config& cfg, const ConditionalDenoiser& den, const TaskSpec& spec,
                       const std::vector<Tensor>& images, std::uint64_t seed_base) {
    TaskEval out;
    out.name = op_kind_name(spec.kind);
    out.recon.config_fingerprint = cfg.fingerprint;
    out.baseline.config_fingerprint = cfg.fingerprint;
    std::vector<std::array<double, 4>> rows(images.size());
    LinOpPtr op = eval_operator(spec, images.front().shape(), seed_base);
    parallel_for(images.size(), [&](std::size_t i) {
        Rng rng(seed_base + 1000 + i);
        Measurement meas = measure(op, images[i], cfg.eval.sigma_y, rng);
        SamplerConfig sc = cfg.sampler;
        sc.seed = seed_base + 7777 + i;
        const Tensor recon = sample(meas, *op, den, cfg.schedule, sc);
        const Tensor baseline = op->adjoint(meas.y);
        const Tensor ref = display_image(images[i]);
        const Tensor rec_img = display_image(recon);
        const Tensor base_img = display_image(baseline);
        rows[i] = {psnr(rec_img, ref), ssim(rec_img, ref), psnr(base_img, ref),
                   ssim(base_img, ref)};
    });
    for (std::size_t i = 0; i < images.size(); ++i) {
        out.recon.add("img" + std::to_string(i), rows[i][0], rows[i][1], rows[i][0] >= kPsnrCap);
        out.baseline.add("img" + std::to_string(i), rows[i][2], rows[i][3], rows[i][2] >= kPsnrCap);
    }
    out.recon.finalize();
    out.baseline.finalize();
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_train(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    ImageDataset dataset = build_dataset(cfg, cfg.seed);
    auto den = build_denoiser(cfg);
    Rng head_rng(cfg.seed ^ 0x0EADu);
    UncertaintyHead head(cfg.denoiser.embed_dim, head_rng);
    TrainState state;

    std::ofstream curve(fs::path(out_dir) / "curve.csv");
    curve << "step,loss,bucket0,bucket1,bucket2,bucket3,mean_u\n";

    std::vector<ad::Param*> all_params = den->params();
    {
        auto hp = head.params();
        all_params.insert(all_params.end(), hp.begin(), hp.end());
    }

    for (int step = 0; step < cfg.train.total_steps; ++step) {
        const double loss = train_step(state, cfg.train, *den, dataset, cfg.schedule, head);
        curve << state.step - 1 << "," << loss;
        for (int b = 0; b < 4; ++b)
            curve << ","
                  << (state.bucket_count[b] ? state.bucket_loss_sum[b] / state.bucket_count[b] : 0.0);
        curve << "," << state.last_mean_u << "\n";
        if ((step + 1) % std::max(1, cfg.train.checkpoint_every) == 0) {
            const CheckpointData snap = snapshot_training(cfg.fingerprint, all_params, &state);
            save_checkpoint((fs::path(out_dir) / ("checkpoint_" + std::to_string(step + 1) + ".duck")).string(),
                            snap);
        }
        if ((step + 1) % 200 == 0)
            std::cout << "step " << step + 1 << "/" << cfg.train.total_steps << " loss " << loss
                      << "\n";
    }
    const CheckpointData snap = snapshot_training(cfg.fingerprint, all_params, &state);
    save_checkpoint((fs::path(out_dir) / "checkpoint.duck").string(), snap);
    std::cout << "trained " << cfg.train.total_steps << " steps; final loss " << state.last_loss
              << "\n";
    return 0;
}

int cmd_sample(const Config& cfg, const std::string& out_dir, const std::string& checkpoint_path,
               const std::string& op_blob, const std::string& meas_file,
               const std::string& input_png, bool dump_traj) {
    fs::create_directories(out_dir);
    auto den = build_denoiser(cfg);
    if (!checkpoint_path.empty()) load_into(*den, checkpoint_path, cfg.fingerprint, true);

    Measurement meas;
    Tensor clean;
    bool have_clean = false;
    if (!meas_file.empty()) {
        meas = load_measurement(meas_file);
    } else {
        if (!input_png.empty()) {
            clean = load_png(input_png);
        } else {
            Rng rng(cfg.seed + 17);
            clean = gen_synthetic(synth_kind_from_name(cfg.data.kind), 1, cfg.data.size, rng)
                        .items.front();
        }
        have_clean = true;
        LinOpPtr op;
        if (!op_blob.empty()) {
            op = load_operator_blob(op_blob);
        } else {
            if (cfg.train.tasks.empty()) throw ConfigError("sample: no task configured");
            Rng rng(cfg.seed + 31);
            op = instantiate_task(cfg.train.tasks.front(), clean.shape(), rng);
        }
        Rng rng(cfg.seed + 99);
        meas = measure(op, clean, cfg.eval.sigma_y, rng);
        save_measurement((fs::path(out_dir) / "measurement.dume").string(), meas);
    }

    FileTrajectorySink sink;
    sink.dir = out_dir;
    const Tensor recon =
        sample(meas, *meas.op, *den, cfg.schedule, cfg.sampler, dump_traj ? &sink : nullptr);

    {
        std::ofstream f(fs::path(out_dir) / "recon.bin", std::ios::binary);
        io::write_tensor(f, recon);
    }
    save_png((fs::path(out_dir) / "recon.png").string(), display_image(recon));
    if (have_clean) {
        const double p = psnr(display_image(recon), display_image(clean));
        std::cout << "{\"psnr_db\":" << p << ",\"nfe\":" << cfg.sampler.nfe << "}\n";
    } else {
        std::cout << "{\"nfe\":" << cfg.sampler.nfe << ",\"out\":\"" << out_dir << "\"}\n";
    }
    return 0;
}

int cmd_eval(const Config& cfg, const std::string& out_dir, const std::string& checkpoint_path) {
    fs::create_directories(out_dir);
    auto den = build_denoiser(cfg);
    if (!checkpoint_path.empty()) load_into(*den, checkpoint_path, cfg.fingerprint, true);

    // Held-out images drawn from a stream disjoint from the training seed.
    Rng rng(cfg.seed + 0x5EED);
    ImageDataset holdout = cfg.data.path.empty()
                               ? gen_synthetic(synth_kind_from_name(cfg.data.kind), cfg.eval.count,
                                               cfg.data.size, rng)
                               : load_images(cfg.data.path);
    if (holdout.items.size() > static_cast<std::size_t>(cfg.eval.count))
        holdout.items.resize(cfg.eval.count);

    if (cfg.train.tasks.empty()) throw ConfigError("eval: no task configured");
    for (std::size_t ti = 0; ti < cfg.train.tasks.size(); ++ti) {
        const TaskEval te =
            run_eval_task(cfg, *den, cfg.train.tasks[ti], holdout.items, cfg.seed + 13 * (ti + 1));
        const std::string base = "eval_" + std::to_string(ti) + "_" + te.name;
        {
            std::ofstream f(fs::path(out_dir) / (base + ".csv"));
            te.recon.write_csv(f);
        }
        {
            std::ofstream f(fs::path(out_dir) / (base + ".jsonl"));
            te.recon.write_jsonl(f);
        }
        std::cout << "{\"task\":\"" << te.name << "\",\"psnr_mean\":" << te.recon.psnr_mean
                  << ",\"psnr_std\":" << te.recon.psnr_std << ",\"ssim_mean\":" << te.recon.ssim_mean
                  << ",\"baseline_psnr_mean\":" << te.baseline.psnr_mean << "}\n";
    }
    return 0;
}

int cmd_oracle_check(std::uint64_t seed) {
    const OracleSweepResult res = oracle_sweep(100, seed);
    const bool ok = res.max_residual_b < 1e-10 && res.max_residual_a < 1e-8;
    std::cout << "{\"configs\":" << res.configs << ",\"seed\":" << seed
              << ",\"max_residual_score_identity\":" << res.max_residual_b
              << ",\"max_residual_argmin_identity\":" << res.max_residual_a
              << ",\"pass\":" << (ok ? "true" : "false") << "}\n";
    return ok ? 0 : 4;
}

int cmd_bench(const Config& cfg) {
    Config bench_cfg = cfg;
    bench_cfg.data.kind = "grf";
    bench_cfg.data.size = 256;
    Rng rng(cfg.seed + 3);
    ImageDataset ds = gen_synthetic(SynthKind::grf, 1, 256, rng);
    auto den = build_denoiser(bench_cfg);
    LinOpPtr op = make_gaussian_blur(ds.items.front().shape(), 9, 2.0, 2.0, 0.0);
    Measurement meas = measure(op, ds.items.front(), cfg.eval.sigma_y, rng);

    constexpr int reps = 3;
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) {
        SamplerConfig sc = cfg.sampler;
        sc.seed = cfg.seed + r;
        (void)sample(meas, *op, *den, cfg.schedule, sc);
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count() / reps;
    std::cout << "{\"image\":\"256x256\",\"nfe\":" << cfg.sampler.nfe << ",\"k\":" << cfg.denoiser.K
              << ",\"seconds_per_image\":" << sec << "}\n";
    return 0;
}

Shape parse_shape(const std::string& text) {
    Shape s;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find('x', pos);
        if (next == std::string::npos) next = text.size();
        s.push_back(static_cast<std::size_t>(std::stoull(text.substr(pos, next - pos))));
        pos = next + 1;
    }
    if (s.empty()) throw ArgumentError("make-op: empty shape");
    return s;
}

int cmd_make_op(const std::string& kind, const std::string& shape_text, double drop_p,
                std::size_t factor, std::size_t blur_size, double blur_s1, double blur_s2,
                double blur_angle, std::size_t coils, const std::string& pattern, double accel,
                std::uint64_t seed, const std::string& out_path) {
    const Shape shape = parse_shape(shape_text);
    Rng rng(seed);
    LinOpPtr op;
    if (kind == "identity") {
        op = make_identity(shape);
    } else if (kind == "blur") {
        op = make_gaussian_blur(shape, blur_size, blur_s1, blur_s2, blur_angle);
    } else if (kind == "superres") {
        op = make_superres(shape, factor);
    } else if (kind == "inpaint") {
        op = make_inpainting(drop_p, shape, rng);
    } else if (kind == "mri") {
        MaskSpec spec;
        if (pattern == "uniform1d") spec.pattern = MaskSpec::Pattern::uniform1d;
        else if (pattern == "gaussian1d") spec.pattern = MaskSpec::Pattern::gaussian1d;
        else if (pattern == "gaussian2d") spec.pattern = MaskSpec::Pattern::gaussian2d;
        else if (pattern == "dust") spec.pattern = MaskSpec::Pattern::dust;
        else throw ArgumentError("make-op: unknown pattern '" + pattern + "'");
        spec.accel = accel;
        spec.seed = seed;
        if (shape.size() != 2) throw ArgumentError("make-op: mri expects --shape HxW");
        op = make_mri(shape, coils, spec, rng);
    } else {
        throw ArgumentError("make-op: unknown kind '" + kind + "'");
    }
    save_operator_blob(*op, out_path);
    std::cout << "{\"kind\":\"" << kind << "\",\"out\":\"" << out_path << "\"}\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"deep-unfolded conditional diffusion sampling for linear inverse problems"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", checkpoint_path, op_blob, meas_file, input_png;
    std::int64_t seed_override = -1;
    int nfe_override = -1;
    bool dump_traj = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file path");
        sub->add_option("--seed", seed_override, "seed override");
        sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* train = app.add_subcommand("train", "run the training loop");
    add_common(train);

    CLI::App* smp = app.add_subcommand("sample", "reconstruct one measurement");
    add_common(smp);
    smp->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
    smp->add_option("--op", op_blob, "operator blob path");
    smp->add_option("--meas", meas_file, "measurement file path");
    smp->add_option("--input", input_png, "clean input PNG to measure");
    smp->add_option("--nfe", nfe_override, "sampler NFE override");
    smp->add_flag("--dump-traj", dump_traj, "dump per-step trajectory tensors");

    CLI::App* ev = app.add_subcommand("eval", "batch reconstruction metrics");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
    ev->add_option("--nfe", nfe_override, "sampler NFE override");

    CLI::App* oc = app.add_subcommand("oracle-check", "closed-form posterior identity sweeps");
    std::int64_t oracle_seed = 0;
    oc->add_option("--seed", oracle_seed, "sweep seed");

    CLI::App* bench = app.add_subcommand("bench", "wall-clock seconds per sampled image");
    add_common(bench);
    bench->add_option("--nfe", nfe_override, "sampler NFE override");

    CLI::App* mo = app.add_subcommand("make-op", "export an operator blob");
    std::string mo_kind = "blur", mo_shape = "1x64x64", mo_pattern = "uniform1d", mo_out = "op.duop";
    double mo_drop = 0.3, mo_s1 = 2.0, mo_s2 = 2.0, mo_angle = 0.0, mo_accel = 4.0;
    std::size_t mo_factor = 2, mo_blur_size = 9, mo_coils = 4;
    std::int64_t mo_seed = 0;
    mo->add_option("--kind", mo_kind, "identity|blur|superres|inpaint|mri");
    mo->add_option("--shape", mo_shape, "input shape, e.g. 1x64x64 (mri: HxW)");
    mo->add_option("--drop-p", mo_drop, "inpaint drop probability");
    mo->add_option("--factor", mo_factor, "superres factor");
    mo->add_option("--blur-size", mo_blur_size, "blur kernel size (odd)");
    mo->add_option("--blur-sigma1", mo_s1, "blur sigma along the first axis");
    mo->add_option("--blur-sigma2", mo_s2, "blur sigma along the second axis");
    mo->add_option("--blur-angle", mo_angle, "blur rotation (radians)");
    mo->add_option("--coils", mo_coils, "mri coil count");
    mo->add_option("--pattern", mo_pattern, "mri mask pattern");
    mo->add_option("--accel", mo_accel, "mri acceleration");
    mo->add_option("--seed", mo_seed, "mask/coil seed");
    mo->add_option("--out", mo_out, "output blob path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints help or the parse error
        return rc == 0 ? 0 : 1;     // usage problems exit 1
    }

    try {
        if (*train) return cmd_train(config_from_flags(config_path, seed_override, -1), out_dir);
        if (*smp)
            return cmd_sample(config_from_flags(config_path, seed_override, nfe_override), out_dir,
                              checkpoint_path, op_blob, meas_file, input_png, dump_traj);
        if (*ev)
            return cmd_eval(config_from_flags(config_path, seed_override, nfe_override), out_dir,
                            checkpoint_path);
        if (*oc) return cmd_oracle_check(static_cast<std::uint64_t>(oracle_seed));
        if (*bench) return cmd_bench(config_from_flags(config_path, seed_override, nfe_override));
        if (*mo)
            return cmd_make_op(mo_kind, mo_shape, mo_drop, mo_factor, mo_blur_size, mo_s1, mo_s2,
                               mo_angle, mo_coils, mo_pattern, mo_accel,
                               static_cast<std::uint64_t>(mo_seed), mo_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return 4;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace dufold
