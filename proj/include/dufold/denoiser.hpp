#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dufold/autodiff.hpp"
#include "dufold/linop.hpp"
#include "dufold/schedule.hpp"

namespace dufold {

/// Sinusoidal features of a scalar in [0, 1]; dim must be even.
Tensor sincos_embedding(double u, std::size_t dim);

/// Owns Params so their addresses stay stable for the lifetime of a model.
struct ParamStore {
    std::vector<std::unique_ptr<ad::Param>> owned;

    ad::Param* add(std::string name, Tensor init) {
        owned.push_back(std::make_unique<ad::Param>(std::move(name), std::move(init)));
        return owned.back().get();
    }
    std::vector<ad::Param*> all() const {
        std::vector<ad::Param*> out;
        out.reserve(owned.size());
        for (const auto& p : owned) out.push_back(p.get());
        return out;
    }
};

/// Compact 3-scale convolutional encoder-decoder with a residual output and
/// per-block sigma-embedding biases. Input extents must be divisible by 4.
class RegularizerNet {
  public:
    RegularizerNet(std::size_t in_channels, std::size_t base_channels, std::size_t embed_dim,
                   Rng& rng, const std::string& prefix);

    ad::Var raw_forward(const ad::Var& x, double c_noise) const;
    std::vector<ad::Param*> params() const { return store_.all(); }
    std::size_t in_channels() const { return in_channels_; }

  private:
    std::size_t in_channels_, base_, embed_dim_;
    ParamStore store_;
    ad::Param *w_in_, *fe_in_, *fb_in_;
    ad::Param *w_d1_, *fe_d1_, *fb_d1_;
    ad::Param *w_d2_, *fe_d2_, *fb_d2_;
    ad::Param *w_u1_, *fe_u1_, *fb_u1_;
    ad::Param *w_u2_, *fe_u2_, *fb_u2_;
    ad::Param *w_out_, *b_out_;
};

/// One-hidden-layer perceptron (width 64) from (t-embedding, k one-hot) to a
/// strictly positive scalar via softplus, plus a learnable linear skip on the
/// noise coordinate so the output starts as a chosen ramp from init_lo at
/// u = 0 to init_hi at u = 1.
class WeightMLP {
  public:
    WeightMLP(std::size_t embed_dim, int K, double init_lo, double init_hi, Rng& rng,
              const std::string& prefix);

    ad::Var forward(double u, int k) const;
    double value(double u, int k) const;
    std::vector<ad::Param*> params() const { return store_.all(); }

  private:
    std::size_t embed_dim_;
    int K_;
    ParamStore store_;
    ad::Param *W1_, *b1_, *W2_, *b2_, *skip_;
};

/// Clean-image estimator interface used by the samplers: an approximation of
/// E[x | x_t, y] at noise level sigma.
struct Denoiser {
    virtual ~Denoiser() = default;
    virtual Tensor denoise(const Tensor& x_t, const Measurement& meas, const LinearOperator& op,
                           double sigma_t, double t) const = 0;
};

struct DenoiserConfig {
    std::size_t in_channels = 1;
    std::size_t base_channels = 8;
    std::size_t embed_dim = 16;
    int K = 4;
    bool untied = false;  // per-iteration regularizer parameters
    // initial weight ramps over the noise coordinate: the regularizer weight
    // grows toward high noise (prior-driven) while the step size stays the
    // contraction the K iterations need there
    double tau_init = 0.25;
    double tau_init_hi = 1.5;
    double gamma_init = 0.5;
    double gamma_init_hi = 0.6;
};

/// K-step unfolded conditional denoiser: each step descends the composite
/// objective, mixing the data-fidelity gradient A^T(Ax - y) with the
/// preconditioned regularizer residual, using per-(t, k) learned weights.
class ConditionalDenoiser final : public Denoiser {
  public:
    ConditionalDenoiser(const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                        const Preconditioner& pre, Rng& rng);
    ConditionalDenoiser(const ConditionalDenoiser&) = delete;

    ad::Var regularize(const ad::Var& x, double sigma, int k = 0) const;
    Tensor regularize(const Tensor& x, double sigma) const;

    ad::Var unfold_step(const ad::Var& x, const LinearOperator& op, const Measurement& meas,
                        double sigma_t, double t, int k) const;
    Tensor unfold_step(const Tensor& x, const LinearOperator& op, const Measurement& meas,
                       double sigma_t, double t, int k) const;

    ad::Var denoise_graph(const ad::Var& x_t, const Measurement& meas, const LinearOperator& op,
                          double sigma_t, double t) const;
    Tensor denoise(const Tensor& x_t, const Measurement& meas, const LinearOperator& op,
                   double sigma_t, double t) const override;

    Tensor posterior_score(const Tensor& x_t, const Measurement& meas, const LinearOperator& op,
                           double sigma_t, double t) const;

    std::vector<ad::Param*> params() const;

    const DenoiserConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const Preconditioner& preconditioner() const { return pre_; }
    const WeightMLP& tau_net() const { return f_tau_; }
    const WeightMLP& gamma_net() const { return f_gamma_; }

    // --- test instrumentation -------------------------------------------
    void reset_counters() const;
    std::uint64_t regularize_calls() const { return regularize_calls_.load(); }
    std::uint64_t fidelity_calls() const { return fidelity_calls_.load(); }
    /// Force fixed weights (bypasses the MLPs and the operator-norm scaling).
    std::optional<double> fixed_tau;
    std::optional<double> fixed_gamma;
    /// Replace the whole regularizer R(x, sigma); breaks the tape (test only).
    std::function<Tensor(const Tensor&, double)> regularize_override;
    /// Replace the raw network F inside the preconditioner wiring (test only).
    std::function<Tensor(const Tensor&, double)> raw_override;

  private:
    DenoiserConfig cfg_;
    NoiseSchedule schedule_;
    Preconditioner pre_;
    std::vector<std::unique_ptr<RegularizerNet>> regs_;  // 1 (tied) or K (untied)
    WeightMLP f_tau_;
    WeightMLP f_gamma_;
    mutable std::atomic<std::uint64_t> regularize_calls_{0};
    mutable std::atomic<std::uint64_t> fidelity_calls_{0};

    const RegularizerNet& reg_for(int k) const { return *regs_[cfg_.untied ? k : 0]; }
};

}  // namespace dufold
