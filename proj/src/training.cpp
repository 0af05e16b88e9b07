#include "dufold/training.hpp"

#include <cmath>
#include <sstream>

#include "dufold/errors.hpp"

namespace dufold {

LinOpPtr instantiate_task(const TaskSpec& spec, const Shape& image_shape, Rng& rng) {
    if (spec.fixed_op) {
        if (!shape_eq(spec.fixed_op->input_shape(), image_shape))
            throw ArgumentError("fixed task operator expects input " +
                                shape_str(spec.fixed_op->input_shape()) + ", dataset has " +
                                shape_str(image_shape));
        return spec.fixed_op;
    }
    switch (spec.kind) {
        case OpKind::identity:
            return make_identity(image_shape);
        case OpKind::blur:
            return make_gaussian_blur(image_shape, spec.blur_size, spec.blur_sigma1, spec.blur_sigma2,
                                      spec.blur_angle);
        case OpKind::superres:
            return make_superres(image_shape, spec.sr_factor);
        case OpKind::inpaint:
            return make_inpainting(spec.drop_p, image_shape, rng);
        case OpKind::mri: {
            if (image_shape.size() != 3 || image_shape[0] != 2)
                throw ArgumentError("mri task requires a (2, H, W) image layout");
            MaskSpec m = spec.mri_mask;
            m.seed = rng.fork_seed();
            return make_mri({image_shape[1], image_shape[2]}, spec.mri_coils, m, rng);
        }
        case OpKind::dense:
            throw ConfigError("dense operators cannot be drawn from a task pool");
    }
    throw ConfigError("instantiate_task: unknown kind");
}

UncertaintyHead::UncertaintyHead(std::size_t embed_dim, Rng& rng) : embed_dim_(embed_dim) {
    Tensor w = rng.randn({1, embed_dim_});
    for (std::size_t i = 0; i < w.raw_size(); ++i) w[i] *= 0.01 / std::sqrt(static_cast<double>(embed_dim_));
    w_ = store_.add("f_u.w", std::move(w));
    b_ = store_.add("f_u.b", Tensor::zeros({1}));
}

ad::Var UncertaintyHead::forward(double t) const {
    ad::Var u = ad::affine(ad::leaf(*w_), ad::constant(sincos_embedding(t, embed_dim_)),
                           ad::leaf(*b_));
    // Clamp guards against runaway u when the toy MSE reaches zero.
    return ad::reshape(ad::clamp(u, -10.0, 10.0), Shape{});
}

double UncertaintyHead::value(double t) const {
    ad::NoGradGuard ng;
    return ad::val(forward(t));
}

void TrainState::init(const std::vector<ad::Param*>& params, const TrainConfig& cfg) {
    step = 0;
    rng = Rng(cfg.seed);
    slots.clear();
    ema.clear();
    for (ad::Param* p : params) {
        AdamSlot s;
        s.m = Tensor::zeros(p->value.shape(), p->value.is_complex());
        s.v = Tensor::zeros(p->value.shape(), p->value.is_complex());
        slots.push_back(std::move(s));
        ema.push_back(p->value);
    }
    bucket_loss_sum.fill(0.0);
    bucket_count.fill(0);
}

Tensor noising(const Tensor& x, double sigma_t, Rng& rng) {
    if (sigma_t < 0.0) throw ArgumentError("noising: sigma_t must be >= 0");
    Tensor out = x;
    if (sigma_t > 0.0) {
        Tensor n = rng.randn(x.shape(), x.is_complex());
        axpy(out, sigma_t, n);
    }
    return out;
}

ad::Var multitask_loss(const std::vector<std::pair<ad::Var, double>>& per_example_mse,
                       const UncertaintyHead& head) {
    if (per_example_mse.empty()) throw ArgumentError("multitask_loss: empty batch");
    ad::Var total;
    for (const auto& [mse, t] : per_example_mse) {
        if (ad::val(mse) < 0.0) throw ArgumentError("multitask_loss: losses must be >= 0");
        ad::Var u = head.forward(t);
        ad::Var weighted = ad::scale_by(ad::reshape(mse, Shape{}), ad::exp(ad::neg(u)));
        ad::Var term = ad::add(weighted, u);
        total = total ? ad::add(total, term) : term;
    }
    return ad::smul(total, 1.0 / static_cast<double>(per_example_mse.size()));
}

std::pair<LinOpPtr, double> sample_task(const TrainConfig& cfg, Rng& rng, const Shape& image_shape) {
    if (cfg.tasks.empty()) throw ConfigError("sample_task: empty task pool");
    double total = 0.0;
    for (const auto& t : cfg.tasks) {
        if (!(t.weight >= 0.0)) throw ConfigError("sample_task: weights must be >= 0");
        total += t.weight;
    }
    if (!(total > 0.0)) throw ConfigError("sample_task: weights sum to zero");
    const double u = rng.uniform() * total;
    double acc = 0.0;
    const TaskSpec* chosen = &cfg.tasks.back();
    for (const auto& t : cfg.tasks) {
        acc += t.weight;
        if (u < acc) {
            chosen = &t;
            break;
        }
    }
    LinOpPtr op = instantiate_task(*chosen, image_shape, rng);
    const double sigma_y = cfg.sigma_y_lo + rng.uniform() * (cfg.sigma_y_hi - cfg.sigma_y_lo);
    return {std::move(op), sigma_y};
}

namespace {

int sigma_bucket(double t) {
    const int b = static_cast<int>(t * 4.0);
    return std::clamp(b, 0, 3);
}

void adam_update(TrainState& state, const TrainConfig& cfg, const std::vector<ad::Param*>& params) {
    const double t = static_cast<double>(state.step + 1);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ad::Param& p = *params[i];
        AdamSlot& s = state.slots[i];
        for (std::size_t j = 0; j < p.value.raw_size(); ++j) {
            const double g = p.grad[j];
            s.m[j] = cfg.adam_beta1 * s.m[j] + (1.0 - cfg.adam_beta1) * g;
            s.v[j] = cfg.adam_beta2 * s.v[j] + (1.0 - cfg.adam_beta2) * g * g;
            const double mhat = s.m[j] / bc1;
            const double vhat = s.v[j] / bc2;
            p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
        Tensor& e = state.ema[i];
        for (std::size_t j = 0; j < e.raw_size(); ++j)
            e[j] = cfg.ema_decay * e[j] + (1.0 - cfg.ema_decay) * p.value[j];
    }
}

}  // namespace

double train_step(TrainState& state, const TrainConfig& cfg, ConditionalDenoiser& den,
                  const ImageDataset& dataset, const NoiseSchedule& schedule,
                  UncertaintyHead& head) {
    if (dataset.items.empty()) throw ArgumentError("train_step: empty dataset");
    std::vector<ad::Param*> params = den.params();
    {
        auto hp = head.params();
        params.insert(params.end(), hp.begin(), hp.end());
    }
    if (!state.initialized()) state.init(params, cfg);

    ad::zero_grads(params);
    std::vector<std::pair<ad::Var, double>> batch;
    std::vector<double> ts;
    std::vector<Measurement> keep_alive;  // graphs hold raw operator pointers
    std::ostringstream diag;
    for (int b = 0; b < cfg.batch_size; ++b) {
        const Tensor& x = dataset.items[state.rng.below(dataset.items.size())];
        auto [op, sigma_y] = sample_task(cfg, state.rng, x.shape());
        const double sigma_t = sample_sigma_train(schedule, state.rng);
        const double t = noise_time(schedule, sigma_t);
        keep_alive.push_back(measure(op, x, sigma_y, state.rng));
        const Measurement& meas = keep_alive.back();
        Tensor x_t = noising(x, sigma_t, state.rng);
        ad::Var xk = den.denoise_graph(ad::constant(std::move(x_t)), meas, *meas.op, sigma_t, t);
        ad::Var diff = ad::sub(xk, ad::constant(x));
        ad::Var mse = ad::smul(ad::sum_squares(diff), 1.0 / static_cast<double>(x.numel()));
        diag << " ex" << b << "(task=" << op_kind_name(op->kind()) << ", sigma_t=" << sigma_t
             << ", sigma_y=" << sigma_y << ", mse=" << ad::val(mse) << ")";
        batch.emplace_back(std::move(mse), t);
        ts.push_back(t);
    }

    ad::Var loss = multitask_loss(batch, head);
    const double loss_val = ad::val(loss);
    if (!std::isfinite(loss_val))
        throw DivergenceError("train_step: non-finite loss at step " + std::to_string(state.step) +
                              ";" + diag.str());
    ad::backward(loss);
    adam_update(state, cfg, params);

    double mean_u = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double li = ad::val(batch[i].first);
        const int bk = sigma_bucket(ts[i]);
        state.bucket_loss_sum[bk] += li;
        state.bucket_count[bk] += 1;
        mean_u += head.value(ts[i]);
    }
    state.last_mean_u = mean_u / static_cast<double>(batch.size());
    state.last_loss = loss_val;
    ++state.step;
    return loss_val;
}

EmaScope::EmaScope(TrainState& state, const std::vector<ad::Param*>& params)
    : state_(state), params_(params) {
    for (std::size_t i = 0; i < params_.size(); ++i) std::swap(params_[i]->value, state_.ema[i]);
}

EmaScope::~EmaScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) std::swap(params_[i]->value, state_.ema[i]);
}

}  // namespace dufold
