#include "dufold/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "dufold/errors.hpp"
#include "dufold/rng.hpp"

namespace dufold {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MapVec = Eigen::Map<const VectorXd>;
using MapMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr std::size_t kMaxDim = 16;

VectorXd as_vec(const Tensor& t) {
    return MapVec(t.data(), static_cast<Eigen::Index>(t.numel()));
}

MatrixXd as_mat(const Tensor& t) {
    return MapMat(t.data(), static_cast<Eigen::Index>(t.shape()[0]),
                  static_cast<Eigen::Index>(t.shape()[1]));
}

Tensor vec_tensor(const VectorXd& v) {
    Tensor t = Tensor::zeros({static_cast<std::size_t>(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) t[i] = v[i];
    return t;
}

Tensor mat_tensor(const MatrixXd& m) {
    Tensor t = Tensor::zeros({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
    return t;
}

MatrixXd spd_inverse(const MatrixXd& m, const char* what) {
    Eigen::LDLT<MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw DegeneracyError(std::string("singular or indefinite matrix in ") + what);
    return ldlt.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

struct Inputs {
    VectorXd mu;
    MatrixXd sigma;
    MatrixXd a;
    VectorXd y;
};

Inputs check_inputs(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                    const Tensor& y) {
    validate(prior);
    if (A.shape().size() != 2 || A.is_complex())
        throw ArgumentError("oracle: A must be a real dense (m, n) matrix");
    const std::size_t n = prior.mean.numel();
    if (A.shape()[1] != n) throw ArgumentError("oracle: A column count must match prior dim");
    if (y.numel() != A.shape()[0] || y.is_complex())
        throw ArgumentError("oracle: y must be real with dim matching A rows");
    if (!(sigma_y > 0.0)) throw ArgumentError("oracle: sigma_y must be > 0");
    return Inputs{as_vec(prior.mean), as_mat(prior.cov), as_mat(A), as_vec(y)};
}

}  // namespace

void validate(const GaussianPriorSpec& prior) {
    const std::size_t n = prior.mean.numel();
    if (n == 0 || n > kMaxDim)
        throw ArgumentError("GaussianPriorSpec: dim must be in [1, 16], got " + std::to_string(n));
    if (prior.mean.is_complex() || prior.cov.is_complex())
        throw ArgumentError("GaussianPriorSpec: must be real");
    if (prior.cov.shape() != Shape{n, n})
        throw ArgumentError("GaussianPriorSpec: cov must be (n, n)");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(prior.cov[i * n + j] - prior.cov[j * n + i]) > 1e-12)
                throw ArgumentError("GaussianPriorSpec: cov not symmetric to 1e-12");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(as_mat(prior.cov));
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw ArgumentError("GaussianPriorSpec: cov must be positive-definite");
}

void validate(const DiscretePriorSpec& prior) {
    if (prior.atoms.empty()) throw ArgumentError("DiscretePriorSpec: atoms must be nonempty");
    if (prior.atoms.size() != prior.weights.size())
        throw ArgumentError("DiscretePriorSpec: atoms/weights size mismatch");
    const std::size_t n = prior.atoms[0].numel();
    double total = 0.0;
    for (std::size_t i = 0; i < prior.atoms.size(); ++i) {
        if (prior.atoms[i].numel() != n || prior.atoms[i].is_complex())
            throw ArgumentError("DiscretePriorSpec: atoms must be real with a common dim");
        if (!(prior.weights[i] > 0.0)) throw ArgumentError("DiscretePriorSpec: weights must be > 0");
        total += prior.weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ArgumentError("DiscretePriorSpec: weights must sum to 1 within 1e-12");
}

AnalyticPosterior gaussian_posterior(const GaussianPriorSpec& prior, const Tensor& A,
                                     double sigma_y, const Tensor& y) {
    const Inputs in = check_inputs(prior, A, sigma_y, y);
    const MatrixXd prior_prec = spd_inverse(in.sigma, "gaussian_posterior (prior cov)");
    const double inv_sy2 = 1.0 / (sigma_y * sigma_y);
    const MatrixXd prec = prior_prec + inv_sy2 * in.a.transpose() * in.a;
    const MatrixXd cov = spd_inverse(prec, "gaussian_posterior (combined precision)");
    const VectorXd mean = cov * (prior_prec * in.mu + inv_sy2 * in.a.transpose() * in.y);
    AnalyticPosterior post;
    post.mean = vec_tensor(mean);
    post.cov = mat_tensor(cov);
    post.A = A;
    post.sigma_y = sigma_y;
    post.y = y;
    post.sigma_t = 0.0;
    return post;
}

Tensor gaussian_conditional_score(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                                  const Tensor& y, double sigma_t, const Tensor& x_t) {
    if (!(sigma_t > 0.0))
        throw ArgumentError("gaussian_conditional_score: sigma_t must be > 0 (score undefined at 0)");
    const AnalyticPosterior post = gaussian_posterior(prior, A, sigma_y, y);
    const std::size_t n = post.mean.numel();
    if (x_t.numel() != n || x_t.is_complex())
        throw ArgumentError("gaussian_conditional_score: x_t dim mismatch");
    // p(x_t | y) = N(mu_post, Sigma_post + sigma_t^2 I)
    MatrixXd s = as_mat(post.cov);
    s.diagonal().array() += sigma_t * sigma_t;
    Eigen::LDLT<MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success)
        throw DegeneracyError("gaussian_conditional_score: singular marginal covariance");
    const VectorXd score = -ldlt.solve(as_vec(x_t) - as_vec(post.mean));
    return vec_tensor(score);
}

Tensor gaussian_mmse(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                     const Tensor& y, double sigma_t, const Tensor& x_t) {
    if (sigma_t < 0.0) throw ArgumentError("gaussian_mmse: sigma_t must be >= 0");
    if (sigma_t == 0.0) return x_t;
    const AnalyticPosterior post = gaussian_posterior(prior, A, sigma_y, y);
    const std::size_t n = post.mean.numel();
    if (x_t.numel() != n || x_t.is_complex()) throw ArgumentError("gaussian_mmse: x_t dim mismatch");
    const MatrixXd post_prec = spd_inverse(as_mat(post.cov), "gaussian_mmse");
    const double inv_st2 = 1.0 / (sigma_t * sigma_t);
    MatrixXd prec = post_prec;
    prec.diagonal().array() += inv_st2;
    Eigen::LDLT<MatrixXd> ldlt(prec);
    if (ldlt.info() != Eigen::Success) throw DegeneracyError("gaussian_mmse: singular precision");
    const VectorXd mean = ldlt.solve(post_prec * as_vec(post.mean) + inv_st2 * as_vec(x_t));
    return vec_tensor(mean);
}

Tensor composite_argmin_quadratic(const GaussianPriorSpec& prior, const Tensor& A, double sigma_y,
                                  const Tensor& y, double sigma_t, const Tensor& x_t) {
    if (sigma_t < 0.0) throw ArgumentError("composite_argmin_quadratic: sigma_t must be >= 0");
    if (sigma_t == 0.0) return x_t;  // h_t pins x to x_t in the zero-noise limit
    const Inputs in = check_inputs(prior, A, sigma_y, y);
    const std::size_t n = prior.mean.numel();
    if (x_t.numel() != n || x_t.is_complex())
        throw ArgumentError("composite_argmin_quadratic: x_t dim mismatch");

    // p(x | x_t): C_t = (Sigma^-1 + I/sigma_t^2)^-1, m_t = C_t (Sigma^-1 mu + x_t/sigma_t^2)
    const MatrixXd prior_prec = spd_inverse(in.sigma, "composite_argmin_quadratic (prior cov)");
    const double inv_st2 = 1.0 / (sigma_t * sigma_t);
    MatrixXd ct_prec = prior_prec;
    ct_prec.diagonal().array() += inv_st2;
    Eigen::LDLT<MatrixXd> ct_ldlt(ct_prec);
    if (ct_ldlt.info() != Eigen::Success)
        throw DegeneracyError("composite_argmin_quadratic: singular conditional precision");
    const VectorXd m_t = ct_ldlt.solve(prior_prec * in.mu + inv_st2 * as_vec(x_t));

    // Normal equations of 1/2||Ax - y||^2 + (sigma_y^2/2)(x - m_t)^T C_t^-1 (x - m_t)
    const double sy2 = sigma_y * sigma_y;
    const MatrixXd lhs = in.a.transpose() * in.a + sy2 * ct_prec;
    const VectorXd rhs = in.a.transpose() * in.y + sy2 * (ct_prec * m_t);
    Eigen::LDLT<MatrixXd> ldlt(lhs);
    if (ldlt.info() != Eigen::Success)
        throw DegeneracyError("composite_argmin_quadratic: singular normal equations");
    return vec_tensor(ldlt.solve(rhs));
}

Tensor discrete_mmse(const DiscretePriorSpec& prior, const Tensor& A, double sigma_y,
                     const Tensor& y, double sigma_t, const Tensor& x_t) {
    validate(prior);
    if (!(sigma_y > 0.0)) throw ArgumentError("discrete_mmse: sigma_y must be > 0");
    if (!(sigma_t > 0.0)) throw ArgumentError("discrete_mmse: sigma_t must be > 0");
    const std::size_t n = prior.atoms[0].numel();
    if (A.shape().size() != 2 || A.shape()[1] != n)
        throw ArgumentError("discrete_mmse: A must be (m, n) matching atoms");
    if (y.numel() != A.shape()[0]) throw ArgumentError("discrete_mmse: y dim mismatch");
    if (x_t.numel() != n) throw ArgumentError("discrete_mmse: x_t dim mismatch");

    const MatrixXd a = as_mat(A);
    const VectorXd yv = as_vec(y);
    const VectorXd xv = as_vec(x_t);
    const double inv_sy2 = 0.5 / (sigma_y * sigma_y);
    const double inv_st2 = 0.5 / (sigma_t * sigma_t);

    std::vector<double> logw(prior.atoms.size());
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < prior.atoms.size(); ++i) {
        const VectorXd ai = as_vec(prior.atoms[i]);
        logw[i] = std::log(prior.weights[i]) - inv_sy2 * (yv - a * ai).squaredNorm() -
                  inv_st2 * (xv - ai).squaredNorm();
        max_logw = std::max(max_logw, logw[i]);
    }
    if (!std::isfinite(max_logw))
        throw UnderflowError("discrete_mmse: all atom likelihoods underflow");
    VectorXd acc = VectorXd::Zero(static_cast<Eigen::Index>(n));
    double norm = 0.0;
    for (std::size_t i = 0; i < prior.atoms.size(); ++i) {
        const double w = std::exp(logw[i] - max_logw);
        acc += w * as_vec(prior.atoms[i]);
        norm += w;
    }
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw UnderflowError("discrete_mmse: normalizer underflow");
    return vec_tensor(acc / norm);
}

OracleSweepResult oracle_sweep(int n_configs, std::uint64_t seed) {
    Rng rng(seed);
    OracleSweepResult res;
    res.configs = n_configs;
    for (int c = 0; c < n_configs; ++c) {
        const std::size_t n = 1 + rng.below(8);
        const std::size_t m = 1 + rng.below(n + 2);

        GaussianPriorSpec prior;
        prior.mean = rng.randn({n});
        Tensor root = rng.randn({n, n});
        prior.cov = Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = i == j ? 0.3 : 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    acc += root[i * n + k] * root[j * n + k] / static_cast<double>(n);
                prior.cov[i * n + j] = acc;
            }

        Tensor A = rng.randn({m, n});
        const double sigma_t = 0.05 + rng.uniform() * (5.0 - 0.05);
        const double sigma_y = 0.05 + rng.uniform() * (1.0 - 0.05);
        Tensor x_true = add(prior.mean, rng.randn({n}));
        Tensor y = Tensor::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = sigma_y * rng.normal();
            for (std::size_t j = 0; j < n; ++j) acc += A[i * n + j] * x_true[j];
            y[i] = acc;
        }
        Tensor x_t = add(x_true, scaled(rng.randn({n}), sigma_t));

        const Tensor mmse = gaussian_mmse(prior, A, sigma_y, y, sigma_t, x_t);
        const Tensor score = gaussian_conditional_score(prior, A, sigma_y, y, sigma_t, x_t);
        Tensor via_score = x_t;
        axpy(via_score, sigma_t * sigma_t, score);
        res.max_residual_b = std::max(res.max_residual_b, sub(mmse, via_score).norm());

        const Tensor argmin = composite_argmin_quadratic(prior, A, sigma_y, y, sigma_t, x_t);
        res.max_residual_a = std::max(res.max_residual_a, sub(argmin, mmse).norm());
    }
    return res;
}

}  // namespace dufold
