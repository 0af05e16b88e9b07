#include "dufold/denoiser.hpp"

#include <cmath>

#include "dufold/errors.hpp"

namespace dufold {

Tensor sincos_embedding(double u, std::size_t dim) {
    if (dim == 0 || dim % 2) throw ArgumentError("sincos_embedding: dim must be even and > 0");
    Tensor e = Tensor::zeros({dim});
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double w = std::pow(2.0, static_cast<double>(i)) * M_PI * u;
        e[2 * i] = std::sin(w);
        e[2 * i + 1] = std::cos(w);
    }
    return e;
}

namespace {

Tensor randn_scaled(Rng& rng, Shape shape, double std) {
    Tensor t = rng.randn(std::move(shape));
    for (std::size_t i = 0; i < t.raw_size(); ++i) t[i] *= std;
    return t;
}

Tensor conv_init(Rng& rng, std::size_t out_ch, std::size_t in_ch, std::size_t k, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    return randn_scaled(rng, {out_ch, in_ch, k, k}, std);
}

double softplus_inv(double y) {
    return std::log(std::expm1(y));
}

}  // namespace

// ---------------------------------------------------------------------------
// RegularizerNet

RegularizerNet::RegularizerNet(std::size_t in_channels, std::size_t base_channels,
                               std::size_t embed_dim, Rng& rng, const std::string& prefix)
    : in_channels_(in_channels), base_(base_channels), embed_dim_(embed_dim) {
    if (in_channels == 0 || base_channels == 0)
        throw ArgumentError("RegularizerNet: channel counts must be > 0");
    const std::size_t C = base_, C2 = 2 * base_;
    const double film_std = 0.2 / std::sqrt(static_cast<double>(embed_dim_));
    auto film = [&](const std::string& name, std::size_t ch, ad::Param** we, ad::Param** be) {
        *we = store_.add(prefix + name + ".we", randn_scaled(rng, {ch, embed_dim_}, film_std));
        *be = store_.add(prefix + name + ".be", Tensor::zeros({ch}));
    };
    w_in_ = store_.add(prefix + "in.w", conv_init(rng, C, in_channels_, 3));
    film("in", C, &fe_in_, &fb_in_);
    w_d1_ = store_.add(prefix + "d1.w", conv_init(rng, C2, C, 3));
    film("d1", C2, &fe_d1_, &fb_d1_);
    w_d2_ = store_.add(prefix + "d2.w", conv_init(rng, C2, C2, 3));
    film("d2", C2, &fe_d2_, &fb_d2_);
    w_u1_ = store_.add(prefix + "u1.w", conv_init(rng, C2, C2, 3));
    film("u1", C2, &fe_u1_, &fb_u1_);
    w_u2_ = store_.add(prefix + "u2.w", conv_init(rng, C, C2, 3));
    film("u2", C, &fe_u2_, &fb_u2_);
    w_out_ = store_.add(prefix + "out.w", conv_init(rng, in_channels_, C, 3, /*gain=*/0.05));
    b_out_ = store_.add(prefix + "out.b", Tensor::zeros({in_channels_}));
}

ad::Var RegularizerNet::raw_forward(const ad::Var& x, double c_noise) const {
    const Shape& s = x->value.shape();
    if (s.size() != 3 || s[0] != in_channels_ || s[1] % 4 || s[2] % 4)
        throw ArgumentError("RegularizerNet: input must be (" + std::to_string(in_channels_) +
                            ", H, W) with H, W divisible by 4, got " + shape_str(s));

    const ad::Var e = ad::constant(sincos_embedding(c_noise, embed_dim_));
    auto block = [&](const ad::Var& in, ad::Param* w, ad::Param* fe, ad::Param* fb) {
        ad::Var h = ad::conv2d(in, ad::leaf(*const_cast<ad::Param*>(w)));
        ad::Var bias = ad::affine(ad::leaf(*fe), e, ad::leaf(*fb));
        return ad::bias_channels(h, bias);
    };

    ad::Var h0 = ad::silu(block(x, w_in_, fe_in_, fb_in_));
    ad::Var h1 = ad::silu(block(ad::avgpool2(h0), w_d1_, fe_d1_, fb_d1_));
    ad::Var h2 = ad::silu(block(ad::avgpool2(h1), w_d2_, fe_d2_, fb_d2_));
    ad::Var u1 = ad::silu(ad::add(block(ad::upsample2(h2), w_u1_, fe_u1_, fb_u1_), h1));
    ad::Var u0 = ad::silu(ad::add(block(ad::upsample2(u1), w_u2_, fe_u2_, fb_u2_), h0));
    ad::Var out = ad::bias_channels(ad::conv2d(u0, ad::leaf(*w_out_)), ad::leaf(*b_out_));
    return ad::add(x, out);  // residual output
}

// ---------------------------------------------------------------------------
// WeightMLP

WeightMLP::WeightMLP(std::size_t embed_dim, int K, double init_lo, double init_hi, Rng& rng,
                     const std::string& prefix)
    : embed_dim_(embed_dim), K_(K) {
    if (K < 1) throw ArgumentError("WeightMLP: K must be >= 1");
    if (!(init_lo > 0.0) || !(init_hi > 0.0))
        throw ArgumentError("WeightMLP: init values must be > 0");
    const std::size_t in_dim = embed_dim_ + static_cast<std::size_t>(K_);
    constexpr std::size_t width = 64;
    W1_ = store_.add(prefix + ".W1",
                     randn_scaled(rng, {width, in_dim}, 1.0 / std::sqrt(static_cast<double>(in_dim))));
    b1_ = store_.add(prefix + ".b1", Tensor::zeros({width}));
    W2_ = store_.add(prefix + ".W2", randn_scaled(rng, {1, width}, 0.01));
    b2_ = store_.add(prefix + ".b2", Tensor::full({1}, softplus_inv(init_lo)));
    skip_ = store_.add(prefix + ".skip",
                       Tensor::full({1}, softplus_inv(init_hi) - softplus_inv(init_lo)));
}

ad::Var WeightMLP::forward(double u, int k) const {
    if (k < 0 || k >= K_) throw ArgumentError("WeightMLP: k out of range");
    Tensor in = Tensor::zeros({embed_dim_ + static_cast<std::size_t>(K_)});
    const Tensor emb = sincos_embedding(u, embed_dim_);
    for (std::size_t i = 0; i < embed_dim_; ++i) in[i] = emb[i];
    in[embed_dim_ + static_cast<std::size_t>(k)] = 1.0;
    ad::Var h = ad::silu(ad::affine(ad::leaf(*W1_), ad::constant(std::move(in)), ad::leaf(*b1_)));
    ad::Var pre = ad::add(ad::affine(ad::leaf(*W2_), h, ad::leaf(*b2_)),
                          ad::smul(ad::leaf(*skip_), u));
    return ad::softplus(pre);
}

double WeightMLP::value(double u, int k) const {
    ad::NoGradGuard ng;
    return ad::val(forward(u, k));
}

// ---------------------------------------------------------------------------
// ConditionalDenoiser

ConditionalDenoiser::ConditionalDenoiser(const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                                         const Preconditioner& pre, Rng& rng)
    : cfg_(cfg),
      schedule_(schedule),
      pre_(pre),
      f_tau_(cfg.embed_dim, cfg.K, cfg.tau_init, cfg.tau_init_hi, rng, "f_tau"),
      f_gamma_(cfg.embed_dim, cfg.K, cfg.gamma_init, cfg.gamma_init_hi, rng, "f_gamma") {
    if (cfg_.K < 1 || cfg_.K > 8) throw ArgumentError("ConditionalDenoiser: K must be in [1, 8]");
    const std::size_t n_regs = cfg_.untied ? static_cast<std::size_t>(cfg_.K) : 1;
    for (std::size_t i = 0; i < n_regs; ++i)
        regs_.push_back(std::make_unique<RegularizerNet>(cfg_.in_channels, cfg_.base_channels,
                                                         cfg_.embed_dim, rng,
                                                         "reg" + std::to_string(i) + "."));
}

ad::Var ConditionalDenoiser::regularize(const ad::Var& x, double sigma, int k) const {
    if (sigma < 0.0) throw ArgumentError("regularize: sigma must be >= 0");
    regularize_calls_.fetch_add(1, std::memory_order_relaxed);
    if (regularize_override) return ad::constant(regularize_override(x->value, sigma));
    if (sigma == 0.0) return x;  // c_out -> 0 limit
    const PrecondCoeffs c = precondition_coeffs(pre_, sigma);
    ad::Var raw;
    if (raw_override) {
        raw = ad::constant(raw_override(scaled(x->value, c.c_in), c.c_noise));
    } else {
        raw = reg_for(k).raw_forward(ad::smul(x, c.c_in), c.c_noise);
    }
    return ad::add(ad::smul(x, c.c_skip), ad::smul(raw, c.c_out));
}

Tensor ConditionalDenoiser::regularize(const Tensor& x, double sigma) const {
    ad::NoGradGuard ng;
    return regularize(ad::constant(x), sigma, 0)->value;
}

ad::Var ConditionalDenoiser::unfold_step(const ad::Var& x, const LinearOperator& op,
                                         const Measurement& meas, double sigma_t, double t, int k) const {
    (void)t;  // weight nets condition on the log-noise coordinate of sigma_t
    if (k < 0 || k >= cfg_.K) throw ArgumentError("unfold_step: k must lie in [0, K)");
    const double u = noise_time(schedule_, sigma_t);

    fidelity_calls_.fetch_add(1, std::memory_order_relaxed);
    ad::Var fid = ad::linop_adjoint(op, ad::sub(ad::linop_apply(op, x), ad::constant(meas.y)));
    ad::Var rx = regularize(x, sigma_t, k);
    ad::Var tau = fixed_tau ? ad::constant(Tensor::full({1}, *fixed_tau)) : f_tau_.forward(u, k);
    ad::Var g = ad::add(fid, ad::scale_by(ad::sub(x, rx), tau));

    if (fixed_gamma) return ad::sub(x, ad::smul(g, *fixed_gamma));
    // Learned step size, scaled down when ||A^T A|| exceeds 1 so the first
    // iterations stay stable for every operator family.
    const double scale = 1.0 / std::max(1.0, op.norm_bound());
    ad::Var gamma = f_gamma_.forward(u, k);
    return ad::sub(x, ad::scale_by(g, ad::smul(gamma, scale)));
}

Tensor ConditionalDenoiser::unfold_step(const Tensor& x, const LinearOperator& op,
                                        const Measurement& meas, double sigma_t, double t,
                                        int k) const {
    ad::NoGradGuard ng;
    return unfold_step(ad::constant(x), op, meas, sigma_t, t, k)->value;
}

ad::Var ConditionalDenoiser::denoise_graph(const ad::Var& x_t, const Measurement& meas,
                                           const LinearOperator& op, double sigma_t, double t) const {
    ad::Var x = x_t;
    for (int k = 0; k < cfg_.K; ++k) x = unfold_step(x, op, meas, sigma_t, t, k);
    return x;
}

Tensor ConditionalDenoiser::denoise(const Tensor& x_t, const Measurement& meas,
                                    const LinearOperator& op, double sigma_t, double t) const {
    ad::NoGradGuard ng;
    return denoise_graph(ad::constant(x_t), meas, op, sigma_t, t)->value;
}

Tensor ConditionalDenoiser::posterior_score(const Tensor& x_t, const Measurement& meas,
                                            const LinearOperator& op, double sigma_t, double t) const {
    if (!(sigma_t > 0.0))
        throw ArgumentError("posterior_score: sigma_t must be > 0 (score undefined at zero noise)");
    Tensor d = denoise(x_t, meas, op, sigma_t, t);
    Tensor s = sub(d, x_t);
    return scaled(s, 1.0 / (sigma_t * sigma_t));
}

std::vector<ad::Param*> ConditionalDenoiser::params() const {
    std::vector<ad::Param*> out;
    for (const auto& r : regs_) {
        auto p = r->params();
        out.insert(out.end(), p.begin(), p.end());
    }
    auto pt = f_tau_.params();
    out.insert(out.end(), pt.begin(), pt.end());
    auto pg = f_gamma_.params();
    out.insert(out.end(), pg.begin(), pg.end());
    return out;
}

void ConditionalDenoiser::reset_counters() const {
    regularize_calls_.store(0);
    fidelity_calls_.store(0);
}

}  // namespace dufold
