#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "dufold/dataset.hpp"
#include "dufold/denoiser.hpp"
#include "dufold/linop.hpp"
#include "dufold/schedule.hpp"

namespace dufold {

/// Operator factory recipe for the training task pool; masks are realized
/// fresh for every draw.
struct TaskSpec {
    OpKind kind = OpKind::identity;
    double weight = 1.0;
    // blur
    std::size_t blur_size = 9;
    double blur_sigma1 = 2.0;
    double blur_sigma2 = 2.0;
    double blur_angle = 0.0;
    // superres
    std::size_t sr_factor = 2;
    // inpaint
    double drop_p = 0.3;
    // mri
    std::size_t mri_coils = 4;
    MaskSpec mri_mask;
    /// Pre-built operator (bypasses the factory); not config-expressible.
    LinOpPtr fixed_op;
};

LinOpPtr instantiate_task(const TaskSpec& spec, const Shape& image_shape, Rng& rng);

struct TrainConfig {
    double lr = 2e-4;
    int batch_size = 4;
    int total_steps = 5000;
    double sigma_y_lo = 0.0;
    double sigma_y_hi = 0.1;
    std::vector<TaskSpec> tasks;
    std::uint64_t seed = 0;
    double ema_decay = 0.999;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int checkpoint_every = 1000;
};

/// One-layer head mapping the t-embedding to the log-variance weight u_t,
/// clamped to [-10, 10].
class UncertaintyHead {
  public:
    UncertaintyHead(std::size_t embed_dim, Rng& rng);

    ad::Var forward(double t) const;  // scalar node, shape {}
    double value(double t) const;
    std::vector<ad::Param*> params() const { return store_.all(); }
    ad::Param* bias() const { return b_; }

  private:
    std::size_t embed_dim_;
    ParamStore store_;
    ad::Param *w_, *b_;
};

struct AdamSlot {
    Tensor m, v;
};

struct TrainState {
    std::int64_t step = 0;
    Rng rng{0};
    std::vector<AdamSlot> slots;  // parallel to the param list
    std::vector<Tensor> ema;      // parallel to the param list
    std::array<double, 4> bucket_loss_sum{};
    std::array<std::int64_t, 4> bucket_count{};
    double last_loss = 0.0;
    double last_mean_u = 0.0;

    void init(const std::vector<ad::Param*>& params, const TrainConfig& cfg);
    bool initialized() const { return !slots.empty(); }
};

/// x_t = x + sigma_t * n.
Tensor noising(const Tensor& x, double sigma_t, Rng& rng);

/// Mean over examples of exp(-u_t) * loss + u_t; differentiable in both the
/// model parameters (through the loss nodes) and the head parameters.
ad::Var multitask_loss(const std::vector<std::pair<ad::Var, double>>& per_example_mse,
                       const UncertaintyHead& head);

/// Weighted draw from the task pool (fresh operator instance) plus a uniform
/// sigma_y from the configured range.
std::pair<LinOpPtr, double> sample_task(const TrainConfig& cfg, Rng& rng, const Shape& image_shape);

/// One optimization step over a sampled batch; returns the scalar loss.
double train_step(TrainState& state, const TrainConfig& cfg, ConditionalDenoiser& den,
                  const ImageDataset& dataset, const NoiseSchedule& schedule,
                  UncertaintyHead& head);

/// Swaps EMA parameter values in on construction and back out on destruction.
class EmaScope {
  public:
    EmaScope(TrainState& state, const std::vector<ad::Param*>& params);
    ~EmaScope();
    EmaScope(const EmaScope&) = delete;

  private:
    TrainState& state_;
    std::vector<ad::Param*> params_;
};

}  // namespace dufold
