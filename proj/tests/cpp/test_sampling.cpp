#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dufold/errors.hpp"
#include "dufold/sampler.hpp"
#include "support.hpp"

using namespace dufold;
using dufold::test::GaussianOracleDenoiser;
using dufold::test::max_abs_diff;

namespace {

struct IdentityDenoiser final : Denoiser {
    Tensor denoise(const Tensor& x_t, const Measurement&, const LinearOperator&, double,
                   double) const override {
        return x_t;
    }
};

struct ConstantDenoiser final : Denoiser {
    Tensor value;
    Tensor denoise(const Tensor&, const Measurement&, const LinearOperator&, double,
                   double) const override {
        return value;
    }
};

Measurement reference_measurement(const GaussianOracleDenoiser& oracle, LinOpPtr op) {
    return Measurement{oracle.y, oracle.sigma_y, std::move(op)};
}

}  // namespace

TEST_CASE("init_state scaling, determinism, and shape") {
    NoiseSchedule s = NoiseSchedule::edm();
    SamplerState st = init_state(s, {100000}, Rng(5));
    const double std = st.x.norm() / std::sqrt(1e5);
    CHECK(std == doctest::Approx(s.sigma_max).epsilon(0.02));

    SamplerState st2 = init_state(s, {100000}, Rng(5));
    CHECK(max_abs_diff(st.x, st2.x) == 0.0);
    CHECK(st.x.shape() == Shape{100000});

    SamplerState img = init_state(s, {1, 8, 8}, Rng(6));
    CHECK(img.x.shape() == Shape{1, 8, 8});
}

TEST_CASE("one-step deterministic Euler returns the denoiser output") {
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);

    SamplerConfig cfg;
    cfg.nfe = 1;
    cfg.seed = 31;
    const Tensor x0 = sample(meas, *op, oracle, s, cfg);

    SamplerState st = init_state(s, {1}, Rng(cfg.seed));
    const Tensor want = oracle.denoise(st.x, meas, *op, s.sigma_max, 1.0);
    CHECK(max_abs_diff(x0, want) < 1e-12);
}

TEST_CASE("identity denoiser produces zero drift") {
    NoiseSchedule s = NoiseSchedule::edm();
    IdentityDenoiser den;
    LinOpPtr op = make_identity({1, 4, 4});
    Measurement meas{Tensor::zeros({1, 4, 4}), 0.0, op};
    SamplerConfig cfg;
    cfg.nfe = 7;
    cfg.seed = 3;
    SamplerState st = init_state(s, {1, 4, 4}, Rng(cfg.seed));
    const Tensor start = st.x;
    StepGrid grid = step_grid(s, cfg.nfe);
    for (int i = 0; i < cfg.nfe; ++i) reverse_step(st, den, meas, *op, grid, cfg);
    CHECK(max_abs_diff(st.x, start) == 0.0);
    CHECK_THROWS_AS(reverse_step(st, den, meas, *op, grid, cfg), ContractError);
}

TEST_CASE("deterministic sampling is bit-identical across runs") {
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);
    SamplerConfig cfg;
    cfg.nfe = 18;
    cfg.seed = 11;
    const Tensor a = sample(meas, *op, oracle, s, cfg);
    const Tensor b = sample(meas, *op, oracle, s, cfg);
    CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("deterministic mode consumes randomness only at init") {
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);
    SamplerConfig cfg;  // s_churn = 0
    StepGrid grid = step_grid(s, 18);
    SamplerState st = init_state(s, {1}, Rng(4));
    const std::uint64_t counter_after_init = st.rng.counter();
    for (int i = 0; i < 18; ++i) reverse_step(st, oracle, meas, *op, grid, cfg);
    CHECK(st.rng.counter() == counter_after_init);
}

TEST_CASE("denoiser call counts: nfe*K first order, (2 nfe - 1)*K with Heun") {
    NoiseSchedule s = NoiseSchedule::edm();
    DenoiserConfig dcfg;
    dcfg.K = 3;
    dcfg.base_channels = 4;
    dcfg.embed_dim = 8;
    Rng rng(41);
    ConditionalDenoiser den(dcfg, s, Preconditioner{}, rng);
    LinOpPtr op = make_identity({1, 8, 8});
    Measurement meas{rng.randn({1, 8, 8}), 0.0, op};

    SamplerConfig cfg;
    cfg.nfe = 6;
    cfg.second_order = false;
    den.reset_counters();
    (void)sample(meas, *op, den, s, cfg);
    CHECK(den.regularize_calls() == 6u * 3u);
    CHECK(den.fidelity_calls() == 6u * 3u);

    cfg.second_order = true;
    den.reset_counters();
    (void)sample(meas, *op, den, s, cfg);
    CHECK(den.regularize_calls() == (2u * 6u - 1u) * 3u);
}

TEST_CASE("gaussian oracle: deterministic mean and stochastic variance") {
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);

    // deterministic Heun trajectories: mean within 3 SE of the posterior mean
    const int n = 2000;
    {
        SamplerConfig cfg;
        cfg.nfe = 18;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            cfg.seed = 1000 + i;
            const Tensor x0 = sample(meas, *op, oracle, s, cfg);
            sum += x0[0];
            sumsq += x0[0] * x0[0];
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        const double se = std::sqrt(var / n);
        CHECK(std::abs(mean - 0.8) < 3.0 * se);
    }

    // churned trajectories: posterior variance within 10% (2e3 samples)
    {
        SamplerConfig cfg;
        cfg.nfe = 18;
        cfg.s_churn = 10.0;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            cfg.seed = 90000 + i;
            const Tensor x0 = sample(meas, *op, oracle, s, cfg);
            sum += x0[0];
            sumsq += x0[0] * x0[0];
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        CHECK(var == doctest::Approx(0.2).epsilon(0.10));
    }
}

TEST_CASE("ancestral families sample the 1-D posterior") {
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);
    for (ScheduleFamily fam : {ScheduleFamily::VE, ScheduleFamily::VP, ScheduleFamily::iDDPM}) {
        INFO("family: " << schedule_family_name(fam));
        NoiseSchedule s = NoiseSchedule::for_family(fam);
        SamplerConfig cfg;
        cfg.family = fam;
        cfg.nfe = 40;
        const int n = 4000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            cfg.seed = 5000 + i;
            const Tensor x0 = sample(meas, *op, oracle, s, cfg);
            sum += x0[0];
            sumsq += x0[0] * x0[0];
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        CHECK(std::abs(mean - 0.8) < 5.0 * std::sqrt(0.2 / n) + 0.02);
        CHECK(var == doctest::Approx(0.2).epsilon(0.15));
    }
}

TEST_CASE("monotone refinement toward the posterior mean on the oracle") {
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);
    StepGrid grid = step_grid(s, 18);
    SamplerConfig cfg;

    int violations = 0, comparisons = 0;
    for (int traj = 0; traj < 1000; ++traj) {
        SamplerState st = init_state(s, {1}, Rng(100 + traj));
        std::vector<double> dist;
        for (int i = 0; i < 18; ++i) {
            reverse_step(st, oracle, meas, *op, grid, cfg);
            dist.push_back(std::abs(st.x[0] - 0.8));
        }
        for (std::size_t i = dist.size() / 2; i + 1 < dist.size(); ++i) {
            ++comparisons;
            if (dist[i + 1] > dist[i] + 1e-12) ++violations;
        }
    }
    CHECK(violations <= comparisons / 20);
}

TEST_CASE("operator swap: sampling accepts a blob-loaded unseen operator") {
    NoiseSchedule s = NoiseSchedule::edm();
    DenoiserConfig dcfg;
    dcfg.K = 2;
    dcfg.base_channels = 4;
    dcfg.embed_dim = 8;
    Rng rng(51);
    ConditionalDenoiser den(dcfg, s, Preconditioner{}, rng);

    LinOpPtr original = make_inpainting(0.6, {1, 8, 8}, rng);
    std::ostringstream os(std::ios::binary);
    original->write_blob(os);
    std::istringstream is(os.str(), std::ios::binary);
    LinOpPtr loaded = read_operator_blob(is);

    Tensor clean = rng.randn({1, 8, 8});
    Measurement meas = measure(loaded, clean, 0.05, rng);
    SamplerConfig cfg;
    cfg.nfe = 6;
    const Tensor x0 = sample(meas, *loaded, den, s, cfg);
    CHECK(x0.shape() == clean.shape());
    CHECK(x0.all_finite());
}

TEST_CASE("trajectory sink records every step") {
    struct CountingSink final : TrajectorySink {
        int records = 0;
        double last_sigma = -1.0;
        void record(int, double sigma, const Tensor&) override {
            ++records;
            last_sigma = sigma;
        }
    } sink;
    NoiseSchedule s = NoiseSchedule::edm();
    auto oracle = test::reference_oracle_1d();
    LinOpPtr op = make_dense(oracle.A);
    Measurement meas = reference_measurement(oracle, op);
    SamplerConfig cfg;
    cfg.nfe = 9;
    (void)sample(meas, *op, oracle, s, cfg, &sink);
    CHECK(sink.records == 10);  // init plus one per step
    CHECK(sink.last_sigma == 0.0);
}
