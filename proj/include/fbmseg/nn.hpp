#pragma once

// Minimal sequence-regression building blocks with hand-written backward
// passes. Batches are stored column-wise: a time step is a (features x batch)
// matrix. All parameters of a network live in one flat vector so optimizers
// and serialization see a single block.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fbmseg::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Sequence = std::vector<Mat<Scalar>>;
/// Flat parameter storage. Aligned so vectorized kernels see the same
/// alignment on every run, which keeps results independent of heap layout.
template <typename Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
};

template <typename Scalar>
class ParamStore {
public:
    std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
        blocks_.push_back({std::move(name), values_.size(), rows, cols});
        values_.resize(values_.size() + rows * cols, Scalar(0));
        grads_.resize(values_.size(), Scalar(0));
        return blocks_.size() - 1;
    }

    Eigen::Map<Mat<Scalar>> value(std::size_t block) {
        const auto& b = blocks_[block];
        return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
    }
    Eigen::Map<const Mat<Scalar>> value(std::size_t block) const {
        const auto& b = blocks_[block];
        return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
    }
    Eigen::Map<Mat<Scalar>> grad(std::size_t block) {
        const auto& b = blocks_[block];
        return {grads_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
    }

    void zero_grad() { std::fill(grads_.begin(), grads_.end(), Scalar(0)); }

    ParamVector<Scalar>& values() { return values_; }
    const ParamVector<Scalar>& values() const { return values_; }
    ParamVector<Scalar>& grads() { return grads_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    std::size_t size() const { return values_.size(); }

    void init_uniform(std::size_t block, Scalar limit, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> dist(-static_cast<double>(limit), static_cast<double>(limit));
        auto v = value(block);
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            for (Eigen::Index i = 0; i < v.rows(); ++i) {
                v(i, j) = static_cast<Scalar>(dist(rng));
            }
        }
    }

private:
    std::vector<ParamBlock> blocks_;
    ParamVector<Scalar> values_;
    ParamVector<Scalar> grads_;
};

template <typename Scalar>
Scalar glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return static_cast<Scalar>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
    using S = typename Derived::Scalar;
    return (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

/// Same-padded 1-D convolution over time followed by ReLU.
template <typename Scalar>
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(ParamStore<Scalar>& store, std::size_t in, std::size_t out, std::size_t kernel)
        : in_(in), out_(out), kernel_(kernel) {
        for (std::size_t k = 0; k < kernel; ++k) {
            w_.push_back(store.add("conv.w" + std::to_string(k), out, in));
        }
        b_ = store.add("conv.b", out, 1);
    }

    void init(ParamStore<Scalar>& store, std::mt19937_64& rng) const {
        for (auto w : w_) {
            store.init_uniform(w, glorot_limit<Scalar>(in_ * kernel_, out_), rng);
        }
    }

    /// Post-activation output; valid until the next forward.
    const Sequence<Scalar>& forward(const ParamStore<Scalar>& store, const Sequence<Scalar>& x) {
        const std::size_t len = x.size();
        const Eigen::Index batch = x.front().cols();
        const long pad = static_cast<long>(kernel_ / 2);
        input_ = &x;
        out_post_.resize(len);
        const auto b = store.value(b_);
        for (std::size_t t = 0; t < len; ++t) {
            Mat<Scalar> z = b.replicate(1, batch);
            for (std::size_t k = 0; k < kernel_; ++k) {
                const long src = static_cast<long>(t) + static_cast<long>(k) - pad;
                if (src < 0 || src >= static_cast<long>(len)) {
                    continue;
                }
                z.noalias() += store.value(w_[k]) * x[static_cast<std::size_t>(src)];
            }
            out_post_[t] = z.cwiseMax(Scalar(0));
        }
        return out_post_;
    }

    /// Accumulates parameter gradients; input gradients are not needed.
    void backward(ParamStore<Scalar>& store, const Sequence<Scalar>& dy) {
        const auto& x = *input_;
        const std::size_t len = x.size();
        const long pad = static_cast<long>(kernel_ / 2);
        auto db = store.grad(b_);
        for (std::size_t t = 0; t < len; ++t) {
            Mat<Scalar> dz = dy[t].cwiseProduct((out_post_[t].array() > Scalar(0)).template cast<Scalar>().matrix());
            db += dz.rowwise().sum();
            for (std::size_t k = 0; k < kernel_; ++k) {
                const long src = static_cast<long>(t) + static_cast<long>(k) - pad;
                if (src < 0 || src >= static_cast<long>(len)) {
                    continue;
                }
                store.grad(w_[k]).noalias() += dz * x[static_cast<std::size_t>(src)].transpose();
            }
        }
    }

private:
    std::size_t in_ = 0, out_ = 0, kernel_ = 0;
    std::vector<std::size_t> w_;
    std::size_t b_ = 0;
    const Sequence<Scalar>* input_ = nullptr;
    Sequence<Scalar> out_post_;
};

/// LSTM over a batch of equal-length sequences. Gate order: input, forget,
/// cell, output.
template <typename Scalar>
class Lstm {
public:
    Lstm() = default;
    Lstm(ParamStore<Scalar>& store, const std::string& name, std::size_t in, std::size_t hidden)
        : in_(in), hidden_(hidden) {
        w_ = store.add(name + ".w", 4 * hidden, in);
        u_ = store.add(name + ".u", 4 * hidden, hidden);
        b_ = store.add(name + ".b", 4 * hidden, 1);
    }

    std::size_t hidden() const { return hidden_; }

    void init(ParamStore<Scalar>& store, std::mt19937_64& rng) const {
        store.init_uniform(w_, glorot_limit<Scalar>(in_, 4 * hidden_), rng);
        store.init_uniform(u_, glorot_limit<Scalar>(hidden_, 4 * hidden_), rng);
        auto b = store.value(b_);
        b.setZero();
        b.block(static_cast<Eigen::Index>(hidden_), 0, static_cast<Eigen::Index>(hidden_), 1).setOnes();
    }

    /// Hidden state at every step; valid until the next forward.
    const Sequence<Scalar>& forward(const ParamStore<Scalar>& store, const Sequence<Scalar>& x) {
        const std::size_t len = x.size();
        const Eigen::Index batch = x.front().cols();
        const auto h = static_cast<Eigen::Index>(hidden_);
        input_ = &x;
        gates_.resize(len);
        cells_.resize(len);
        tanh_cells_.resize(len);
        hs_.resize(len);
        const auto w = store.value(w_);
        const auto u = store.value(u_);
        const auto b = store.value(b_);
        Mat<Scalar> h_prev = Mat<Scalar>::Zero(h, batch);
        Mat<Scalar> c_prev = Mat<Scalar>::Zero(h, batch);
        for (std::size_t t = 0; t < len; ++t) {
            Mat<Scalar> z = b.replicate(1, batch);
            z.noalias() += w * x[t];
            z.noalias() += u * h_prev;
            Mat<Scalar>& g = gates_[t];
            g.resize(4 * h, batch);
            g.topRows(2 * h) = sigmoid(z.topRows(2 * h));
            g.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
            g.bottomRows(h) = sigmoid(z.bottomRows(h));
            cells_[t] = g.middleRows(h, h).cwiseProduct(c_prev) + g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
            tanh_cells_[t] = cells_[t].array().tanh().matrix();
            hs_[t] = g.bottomRows(h).cwiseProduct(tanh_cells_[t]);
            h_prev = hs_[t];
            c_prev = cells_[t];
        }
        return hs_;
    }

    /// dh[t] is the loss gradient w.r.t. the emitted hidden state at t (may
    /// be zero-sized when nothing flows in at that step). Returns the input
    /// gradient sequence when `want_dx`.
    Sequence<Scalar> backward(ParamStore<Scalar>& store, const Sequence<Scalar>& dh, bool want_dx) {
        const auto& x = *input_;
        const std::size_t len = x.size();
        const Eigen::Index batch = x.front().cols();
        const auto h = static_cast<Eigen::Index>(hidden_);
        const auto w = store.value(w_);
        const auto u = store.value(u_);
        auto dw = store.grad(w_);
        auto du = store.grad(u_);
        auto db = store.grad(b_);
        Sequence<Scalar> dx(want_dx ? len : 0);
        Mat<Scalar> dh_next = Mat<Scalar>::Zero(h, batch);
        Mat<Scalar> dc_next = Mat<Scalar>::Zero(h, batch);
        Mat<Scalar> dz(4 * h, batch);
        for (std::size_t step = len; step-- > 0;) {
            const Mat<Scalar>& g = gates_[step];
            Mat<Scalar> dht = dh_next;
            if (dh[step].size() != 0) {
                dht += dh[step];
            }
            const auto gi = g.topRows(h).array();
            const auto gf = g.middleRows(h, h).array();
            const auto gg = g.middleRows(2 * h, h).array();
            const auto go = g.bottomRows(h).array();
            const auto tc = tanh_cells_[step].array();
            Mat<Scalar> dc = (dht.array() * go * (Scalar(1) - tc * tc)).matrix() + dc_next;
            Mat<Scalar> c_prev = step > 0 ? cells_[step - 1] : Mat<Scalar>::Zero(h, batch);
            dz.topRows(h) = (dc.array() * gg * gi * (Scalar(1) - gi)).matrix();
            dz.middleRows(h, h) = (dc.array() * c_prev.array() * gf * (Scalar(1) - gf)).matrix();
            dz.middleRows(2 * h, h) = (dc.array() * gi * (Scalar(1) - gg * gg)).matrix();
            dz.bottomRows(h) = (dht.array() * tc * go * (Scalar(1) - go)).matrix();
            dc_next = dc.cwiseProduct(g.middleRows(h, h));

            dw.noalias() += dz * x[step].transpose();
            if (step > 0) {
                du.noalias() += dz * hs_[step - 1].transpose();
            }
            db += dz.rowwise().sum();
            if (want_dx) {
                dx[step].noalias() = w.transpose() * dz;
            }
            dh_next.noalias() = u.transpose() * dz;
        }
        return dx;
    }

private:
    std::size_t in_ = 0, hidden_ = 0;
    std::size_t w_ = 0, u_ = 0, b_ = 0;
    const Sequence<Scalar>* input_ = nullptr;
    Sequence<Scalar> gates_, cells_, tanh_cells_, hs_;
};

enum class Activation { Identity, Relu };

template <typename Scalar>
class Dense {
public:
    Dense() = default;
    Dense(ParamStore<Scalar>& store, const std::string& name, std::size_t in, std::size_t out, Activation act)
        : in_(in), out_(out), act_(act) {
        w_ = store.add(name + ".w", out, in);
        b_ = store.add(name + ".b", out, 1);
    }

    void init(ParamStore<Scalar>& store, std::mt19937_64& rng) const {
        const Scalar limit = act_ == Activation::Relu ? static_cast<Scalar>(std::sqrt(6.0 / static_cast<double>(in_)))
                                                      : glorot_limit<Scalar>(in_, out_);
        store.init_uniform(w_, limit, rng);
        store.value(b_).setZero();
    }

    Mat<Scalar> forward(const ParamStore<Scalar>& store, const Mat<Scalar>& x) {
        input_ = x;
        Mat<Scalar> z = store.value(b_).replicate(1, x.cols());
        z.noalias() += store.value(w_) * x;
        if (act_ == Activation::Relu) {
            z = z.cwiseMax(Scalar(0));
        }
        output_ = z;
        return z;
    }

    Mat<Scalar> backward(ParamStore<Scalar>& store, const Mat<Scalar>& dy) {
        Mat<Scalar> dz = dy;
        if (act_ == Activation::Relu) {
            dz = dz.cwiseProduct((output_.array() > Scalar(0)).template cast<Scalar>().matrix());
        }
        store.grad(w_).noalias() += dz * input_.transpose();
        store.grad(b_) += dz.rowwise().sum();
        return store.value(w_).transpose() * dz;
    }

private:
    std::size_t in_ = 0, out_ = 0;
    Activation act_ = Activation::Identity;
    std::size_t w_ = 0, b_ = 0;
    Mat<Scalar> input_, output_;
};

/// Inverted dropout; identity when not training.
template <typename Scalar>
class Dropout {
public:
    explicit Dropout(double rate = 0.0) : rate_(rate) {}

    double rate() const { return rate_; }

    Mat<Scalar> forward(const Mat<Scalar>& x, bool training, std::mt19937_64* rng) {
        if (!training || rate_ <= 0.0 || rng == nullptr) {
            mask_.resize(0, 0);
            return x;
        }
        std::bernoulli_distribution keep(1.0 - rate_);
        const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - rate_));
        mask_.resize(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                mask_(i, j) = keep(*rng) ? scale : Scalar(0);
            }
        }
        return x.cwiseProduct(mask_);
    }

    Mat<Scalar> backward(const Mat<Scalar>& dy) const {
        return mask_.size() == 0 ? dy : dy.cwiseProduct(mask_);
    }

private:
    double rate_ = 0.0;
    Mat<Scalar> mask_;
};

/// RMSprop (Keras defaults rho=0.9, eps=1e-7).
class RmsProp {
public:
    RmsProp(double lr, double rho = 0.9, double eps = 1e-7) : lr_(lr), rho_(rho), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }

    template <typename Scalar>
    void step(ParamVector<Scalar>& params, const ParamVector<Scalar>& grads) {
        if (acc_.size() != params.size()) {
            acc_.assign(params.size(), 0.0);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grads[i]);
            acc_[i] = rho_ * acc_[i] + (1.0 - rho_) * g * g;
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - lr_ * g / (std::sqrt(acc_[i]) + eps_));
        }
    }

private:
    double lr_, rho_, eps_;
    std::vector<double> acc_;
};

class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }

    template <typename Scalar>
    void step(ParamVector<Scalar>& params, const ParamVector<Scalar>& grads) {
        if (m_.size() != params.size()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grads[i]);
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            const double mhat = m_[i] / c1;
            const double vhat = v_[i] / c2;
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

/// Global-norm gradient clipping. Returns the pre-clip norm.
template <typename Scalar>
double clip_grad_norm(ParamVector<Scalar>& grads, double max_norm) {
    double sq = 0.0;
    for (Scalar g : grads) {
        sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Scalar& g : grads) {
            g = static_cast<Scalar>(static_cast<double>(g) * scale);
        }
    }
    return norm;
}

} // namespace fbmseg::nn
