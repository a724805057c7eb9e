#pragma once

#include "fbmseg/nn.hpp"

#include <nlohmann/json.hpp>

namespace fbmseg::models {

/// Convolutional-recurrent alpha regressor:
/// conv(3 -> filters, ReLU) -> LSTM (full sequence) -> LSTM (last step)
/// -> dense (ReLU) -> dense -> 2 * sigmoid.
struct AlphaNetConfig {
    std::size_t conv_filters = 16;
    std::size_t kernel = 3;
    std::size_t lstm1 = 48;
    std::size_t lstm2 = 48;
    std::size_t dense = 32;

    nlohmann::json to_json() const {
        return {{"conv_filters", conv_filters}, {"kernel", kernel}, {"lstm1", lstm1}, {"lstm2", lstm2}, {"dense", dense}};
    }
    static AlphaNetConfig from_json(const nlohmann::json& j) {
        AlphaNetConfig c;
        c.conv_filters = j.at("conv_filters");
        c.kernel = j.at("kernel");
        c.lstm1 = j.at("lstm1");
        c.lstm2 = j.at("lstm2");
        c.dense = j.at("dense");
        return c;
    }
};

template <typename Scalar>
class AlphaNet {
public:
    static constexpr std::size_t kInputChannels = 3;

    explicit AlphaNet(const AlphaNetConfig& cfg = {}) : cfg_(cfg) {
        conv_ = nn::Conv1d<Scalar>(store_, kInputChannels, cfg.conv_filters, cfg.kernel);
        lstm1_ = nn::Lstm<Scalar>(store_, "lstm1", cfg.conv_filters, cfg.lstm1);
        lstm2_ = nn::Lstm<Scalar>(store_, "lstm2", cfg.lstm1, cfg.lstm2);
        hidden_ = nn::Dense<Scalar>(store_, "dense1", cfg.lstm2, cfg.dense, nn::Activation::Relu);
        head_ = nn::Dense<Scalar>(store_, "dense2", cfg.dense, 1, nn::Activation::Identity);
    }

    const AlphaNetConfig& config() const { return cfg_; }
    nn::ParamStore<Scalar>& params() { return store_; }
    const nn::ParamStore<Scalar>& params() const { return store_; }

    void init(std::mt19937_64& rng) {
        conv_.init(store_, rng);
        lstm1_.init(store_, rng);
        lstm2_.init(store_, rng);
        hidden_.init(store_, rng);
        head_.init(store_, rng);
    }

    /// Returns alpha predictions (1 x batch) in (0, 2).
    nn::Mat<Scalar> forward(const nn::Sequence<Scalar>& x) {
        const auto& conv_out = conv_.forward(store_, x);
        steps_ = conv_out.size();
        const auto& seq1 = lstm1_.forward(store_, conv_out);
        const auto& seq2 = lstm2_.forward(store_, seq1);
        const nn::Mat<Scalar> hid = hidden_.forward(store_, seq2.back());
        squashed_ = nn::sigmoid(head_.forward(store_, hid));
        return Scalar(2) * squashed_;
    }

    /// d_out: loss gradient w.r.t. the alpha predictions of the last forward.
    void backward(const nn::Mat<Scalar>& d_out) {
        const nn::Mat<Scalar> dz =
            (d_out.array() * Scalar(2) * squashed_.array() * (Scalar(1) - squashed_.array())).matrix();
        const nn::Mat<Scalar> dhid = head_.backward(store_, dz);
        const nn::Mat<Scalar> dlast = hidden_.backward(store_, dhid);
        nn::Sequence<Scalar> dh2(steps_);
        dh2.back() = dlast;
        const auto dseq1 = lstm2_.backward(store_, dh2, true);
        const auto dconv = lstm1_.backward(store_, dseq1, true);
        conv_.backward(store_, dconv);
    }

private:
    AlphaNetConfig cfg_;
    nn::ParamStore<Scalar> store_;
    nn::Conv1d<Scalar> conv_;
    nn::Lstm<Scalar> lstm1_, lstm2_;
    nn::Dense<Scalar> hidden_, head_;
    std::size_t steps_ = 0;
    nn::Mat<Scalar> squashed_;
};

/// Fully connected log K regressor with one dropout stage.
struct KNetConfig {
    std::size_t hidden = 128;
    double dropout = 0.1;

    nlohmann::json to_json() const { return {{"hidden", hidden}, {"dropout", dropout}}; }
    static KNetConfig from_json(const nlohmann::json& j) {
        KNetConfig c;
        c.hidden = j.at("hidden");
        c.dropout = j.at("dropout");
        return c;
    }
};

template <typename Scalar>
class KNet {
public:
    explicit KNet(const KNetConfig& cfg = {}) : cfg_(cfg), dropout_(cfg.dropout) {
        l1_ = nn::Dense<Scalar>(store_, "k.dense1", 1, cfg.hidden, nn::Activation::Relu);
        l2_ = nn::Dense<Scalar>(store_, "k.dense2", cfg.hidden, cfg.hidden, nn::Activation::Relu);
        l3_ = nn::Dense<Scalar>(store_, "k.dense3", cfg.hidden, cfg.hidden, nn::Activation::Relu);
        out_ = nn::Dense<Scalar>(store_, "k.out", cfg.hidden, 1, nn::Activation::Identity);
    }

    const KNetConfig& config() const { return cfg_; }
    nn::ParamStore<Scalar>& params() { return store_; }
    const nn::ParamStore<Scalar>& params() const { return store_; }

    void init(std::mt19937_64& rng) {
        l1_.init(store_, rng);
        l2_.init(store_, rng);
        l3_.init(store_, rng);
        out_.init(store_, rng);
    }

    /// x: 1 x batch of K features. `rng` drives dropout when training.
    nn::Mat<Scalar> forward(const nn::Mat<Scalar>& x, bool training = false, std::mt19937_64* rng = nullptr) {
        nn::Mat<Scalar> h = l1_.forward(store_, x);
        h = l2_.forward(store_, h);
        h = dropout_.forward(h, training, rng);
        h = l3_.forward(store_, h);
        return out_.forward(store_, h);
    }

    void backward(const nn::Mat<Scalar>& d_out) {
        nn::Mat<Scalar> d = out_.backward(store_, d_out);
        d = l3_.backward(store_, d);
        d = dropout_.backward(d);
        d = l2_.backward(store_, d);
        l1_.backward(store_, d);
    }

private:
    KNetConfig cfg_;
    nn::ParamStore<Scalar> store_;
    nn::Dense<Scalar> l1_, l2_, l3_, out_;
    nn::Dropout<Scalar> dropout_;
};

/// Mean absolute error; writes d loss / d pred into `grad` when given.
template <typename Scalar>
double mae_loss(const nn::Mat<Scalar>& pred, const nn::Mat<Scalar>& target, nn::Mat<Scalar>* grad) {
    const auto diff = (pred - target).array();
    const double n = static_cast<double>(pred.size());
    if (grad != nullptr) {
        *grad = (diff.sign() / static_cast<Scalar>(n)).matrix();
    }
    return static_cast<double>(diff.abs().sum()) / n;
}

/// Copies parameters between precisions (same configuration assumed).
template <typename To, typename From>
void copy_params(const nn::ParamStore<From>& from, nn::ParamStore<To>& to) {
    for (std::size_t i = 0; i < from.size(); ++i) {
        to.values()[i] = static_cast<To>(from.values()[i]);
    }
}

} // namespace fbmseg::models
