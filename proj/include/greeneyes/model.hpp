#pragma once

// The assembled sequence-to-point network: a 1x1 input projection, stacked
// gated WaveNet blocks whose skip sums feed a ReLU, an optional attention
// layer, temporal average pooling, a bidirectional-LSTM readout (or a
// mean-pool readout when the LSTM is disabled) and a dense head producing
// one scalar.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "greeneyes/layers.hpp"
#include "greeneyes/rng.hpp"
#include "greeneyes/tensor.hpp"

namespace greeneyes {

struct ModelConfig {
    std::size_t window_size = 7200;
    std::size_t input_channels = 1;
    std::vector<std::size_t> block_layers = {8, 5, 3};
    std::size_t kernel_size = 3;
    std::size_t filters = 16;
    AttentionKind attention = AttentionKind::Temporal;
    bool use_lstm = true;
    std::size_t lstm_hidden = 32;
    bool bidirectional = true;
    std::size_t pool_factor = 1;            // temporal pooling before the LSTM
    std::vector<std::size_t> head_hidden;   // empty: single linear layer to the scalar
    std::uint64_t seed = 0;

    void validate() const {
        if (window_size < 1) throw std::invalid_argument("ModelConfig: window_size must be >= 1");
        if (input_channels < 1) throw std::invalid_argument("ModelConfig: input_channels must be >= 1");
        if (block_layers.empty()) throw std::invalid_argument("ModelConfig: block_layers empty");
        for (std::size_t n : block_layers)
            if (n < 1) throw std::invalid_argument("ModelConfig: block with zero layers");
        if (kernel_size < 1) throw std::invalid_argument("ModelConfig: kernel_size must be >= 1");
        if (filters < 1) throw std::invalid_argument("ModelConfig: filters must be >= 1");
        if (pool_factor < 1) throw std::invalid_argument("ModelConfig: pool_factor must be >= 1");
        if (pool_factor > window_size)
            throw std::invalid_argument("ModelConfig: pool_factor exceeds window_size");
        if (use_lstm && lstm_hidden < 1) throw std::invalid_argument("ModelConfig: lstm_hidden must be >= 1");
    }

    // Width of the vector entering the dense head.
    std::size_t readout_dim() const {
        if (!use_lstm) return filters;
        return bidirectional ? 2 * lstm_hidden : lstm_hidden;
    }
};

// Span of past inputs that can influence one output position:
// 1 + (k-1) * sum of all dilations (dilations double per layer within each
// block).
inline std::size_t receptive_field(const ModelConfig& cfg) {
    std::size_t dilation_sum = 0;
    for (std::size_t layers : cfg.block_layers) dilation_sum += (std::size_t{1} << layers) - 1;
    return 1 + (cfg.kernel_size - 1) * dilation_sum;
}

struct DenseParams {
    Tensor weights;  // (in x out)
    Tensor bias;     // (out)
};

struct GreenEyesModel {
    ModelConfig config;
    CausalConvParams input_proj;            // 1x1, input_channels -> filters
    std::vector<WaveNetBlockParams> blocks;
    AttentionParams attention;
    LstmParams lstm;
    std::vector<DenseParams> head;          // hidden layers + final (D x 1) map

    // Visits every parameter tensor in a fixed order with a stable name.
    void visit_parameters(const std::function<void(const std::string&, Tensor&)>& fn) {
        fn("input_proj.kernel", input_proj.kernel);
        fn("input_proj.bias", input_proj.bias);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            for (std::size_t l = 0; l < blocks[b].layers.size(); ++l) {
                WaveNetLayerParams& layer = blocks[b].layers[l];
                std::string prefix = "blocks." + std::to_string(b) + ".layers." + std::to_string(l) + ".";
                fn(prefix + "filter.kernel", layer.filter_conv.kernel);
                fn(prefix + "filter.bias", layer.filter_conv.bias);
                fn(prefix + "gate.kernel", layer.gate_conv.kernel);
                fn(prefix + "gate.bias", layer.gate_conv.bias);
                fn(prefix + "residual.kernel", layer.residual_proj.kernel);
                fn(prefix + "residual.bias", layer.residual_proj.bias);
                fn(prefix + "skip.kernel", layer.skip_proj.kernel);
                fn(prefix + "skip.bias", layer.skip_proj.bias);
            }
        }
        if (config.attention == AttentionKind::Temporal) {
            fn("attention.score_weights", attention.score_weights);
            fn("attention.score_bias", attention.score_bias);
        }
        if (config.use_lstm) {
            fn("lstm.forward.wx", lstm.forward.wx);
            fn("lstm.forward.wh", lstm.forward.wh);
            fn("lstm.forward.bias", lstm.forward.bias);
            if (config.bidirectional) {
                fn("lstm.backward.wx", lstm.backward.wx);
                fn("lstm.backward.wh", lstm.backward.wh);
                fn("lstm.backward.bias", lstm.backward.bias);
            }
        }
        for (std::size_t h = 0; h < head.size(); ++h) {
            fn("head." + std::to_string(h) + ".weights", head[h].weights);
            fn("head." + std::to_string(h) + ".bias", head[h].bias);
        }
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        visit_parameters([&out](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        visit_parameters([&n](const std::string&, Tensor& t) { n += t.size(); });
        return n;
    }
};

namespace detail {

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)). Matrices stored
// (out x in) use fan_in = in, fan_out = out; conv kernels (out x in x k)
// use fan_in = in*k, fan_out = out*k.
inline Tensor glorot_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::create({rows, cols}, std::move(v));
}

inline Tensor glorot_conv_kernel(Rng& rng, std::size_t out_ch, std::size_t in_ch, std::size_t k) {
    double bound = std::sqrt(6.0 / static_cast<double>((in_ch + out_ch) * k));
    std::vector<double> v(out_ch * in_ch * k);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::create({out_ch, in_ch, k}, std::move(v));
}

inline CausalConvParams init_conv(Rng& rng, std::size_t out_ch, std::size_t in_ch, std::size_t k,
                                  std::size_t dilation) {
    return CausalConvParams{glorot_conv_kernel(rng, out_ch, in_ch, k), Tensor::zeros({out_ch}), dilation};
}

inline LstmDirectionParams init_lstm_direction(Rng& rng, std::size_t input_dim, std::size_t hidden) {
    LstmDirectionParams d;
    d.wx = glorot_matrix(rng, 4 * hidden, input_dim);
    d.wh = glorot_matrix(rng, 4 * hidden, hidden);
    std::vector<double> bias(4 * hidden, 0.0);
    for (std::size_t u = 0; u < hidden; ++u) bias[hidden + u] = 1.0;  // forget gate
    d.bias = Tensor::create({4 * hidden}, std::move(bias));
    return d;
}

}  // namespace detail

// Builds a fully initialized model: Glorot-uniform weights, zero biases
// except the LSTM forget gates at 1. Deterministic in the seed.
inline GreenEyesModel init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    GreenEyesModel m;
    m.config = config;
    m.config.seed = seed;

    m.input_proj = detail::init_conv(rng, config.filters, config.input_channels, 1, 1);

    for (std::size_t layer_count : config.block_layers) {
        WaveNetBlockParams block;
        for (std::size_t j = 0; j < layer_count; ++j) {
            std::size_t dilation = std::size_t{1} << j;
            WaveNetLayerParams layer;
            layer.filter_conv =
                detail::init_conv(rng, config.filters, config.filters, config.kernel_size, dilation);
            layer.gate_conv =
                detail::init_conv(rng, config.filters, config.filters, config.kernel_size, dilation);
            layer.residual_proj = detail::init_conv(rng, config.filters, config.filters, 1, 1);
            layer.skip_proj = detail::init_conv(rng, config.filters, config.filters, 1, 1);
            block.layers.push_back(std::move(layer));
        }
        m.blocks.push_back(std::move(block));
    }

    if (config.use_lstm) {
        m.lstm.input_dim = config.filters;
        m.lstm.hidden_dim = config.lstm_hidden;
        m.lstm.bidirectional = config.bidirectional;
        m.lstm.forward = detail::init_lstm_direction(rng, config.filters, config.lstm_hidden);
        if (config.bidirectional)
            m.lstm.backward = detail::init_lstm_direction(rng, config.filters, config.lstm_hidden);
    }

    std::size_t in_dim = config.readout_dim();
    for (std::size_t hidden : config.head_hidden) {
        m.head.push_back({detail::glorot_matrix(rng, in_dim, hidden), Tensor::zeros({hidden})});
        in_dim = hidden;
    }
    m.head.push_back({detail::glorot_matrix(rng, in_dim, 1), Tensor::zeros({1})});

    // Attention draws come last so that models differing only in attention
    // kind share every other parameter for a given seed.
    m.attention.kind = config.attention;
    if (config.attention == AttentionKind::Temporal) {
        double bound = std::sqrt(6.0 / static_cast<double>(config.filters + 1));
        std::vector<double> w(config.filters);
        for (double& x : w) x = rng.uniform(-bound, bound);
        m.attention.score_weights = Tensor::create({config.filters}, std::move(w));
        m.attention.score_bias = Tensor::zeros({1});
    }

    return m;
}

// Features after the block stack, ReLU and attention, before pooling and the
// readout. Exposed separately for causality and receptive-field checks.
inline Tensor pre_pool_features(const Tensor& window, const GreenEyesModel& m) {
    if (window.rank() != 2 || window.extent(0) != m.config.window_size ||
        window.extent(1) != m.config.input_channels)
        throw std::invalid_argument("model_forward: window shape does not match the config");

    Tensor stream = causal_conv1d(window, m.input_proj);
    Tensor skip_total;
    bool first = true;
    for (const WaveNetBlockParams& block : m.blocks) {
        WaveNetBlockOut out = wavenet_block_forward(stream, block);
        stream = std::move(out.residual);
        skip_total = first ? std::move(out.skip_sum) : add(skip_total, out.skip_sum);
        first = false;
    }
    Tensor feat = relu(skip_total);

    switch (m.config.attention) {
        case AttentionKind::Temporal: return temporal_attention(feat, m.attention);
        case AttentionKind::DotProduct: return dot_product_attention(feat);
        case AttentionKind::None: return feat;
    }
    throw std::invalid_argument("model_forward: unknown attention kind");
}

// Full pipeline producing one scalar prediction for the window.
inline Tensor model_forward(const Tensor& window, const GreenEyesModel& m) {
    Tensor feat = pre_pool_features(window, m);
    feat = avg_pool_time(feat, m.config.pool_factor);

    Tensor readout =
        m.config.use_lstm ? bilstm_readout(feat, m.lstm) : reduce_mean(feat, 0);

    Tensor y = reshape(readout, {1, readout.size()});
    for (std::size_t h = 0; h < m.head.size(); ++h) {
        y = add(matmul(y, m.head[h].weights), m.head[h].bias);
        if (h + 1 < m.head.size()) y = relu(y);
    }
    return reshape(y, {1});
}

}  // namespace greeneyes
