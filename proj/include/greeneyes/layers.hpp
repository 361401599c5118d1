#pragma once

// Neural building blocks over the tensor engine: dilated causal convolution,
// the gated WaveNet layer/block, dot-product and temporal attention, LSTM
// sequence processing, and temporal average pooling.
//
// Sequence tensors are (time x channels), row-major. Convolutions left-pad
// with zeros so position t never reads inputs after t and the time length is
// preserved.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "greeneyes/tensor.hpp"

namespace greeneyes {

// ---------------------------------------------------------------------------
// Dilated causal convolution
// ---------------------------------------------------------------------------

struct CausalConvParams {
    Tensor kernel;  // (out_channels x in_channels x kernel_size)
    Tensor bias;    // (out_channels)
    std::size_t dilation = 1;

    std::size_t out_channels() const { return kernel.extent(0); }
    std::size_t in_channels() const { return kernel.extent(1); }
    std::size_t kernel_size() const { return kernel.extent(2); }

    void validate() const {
        if (kernel.rank() != 3) throw std::invalid_argument("CausalConvParams: kernel must be rank 3");
        if (bias.rank() != 1 || bias.extent(0) != out_channels())
            throw std::invalid_argument("CausalConvParams: bias shape mismatch");
        if (dilation < 1) throw std::invalid_argument("CausalConvParams: dilation must be >= 1");
    }
};

// y[t, oc] = bias[oc] + sum_{j, ic} W[oc, ic, j] * x[t - (k-1-j)*d, ic],
// with x[<0] treated as zero. Output length equals input length.
inline Tensor causal_conv1d(const Tensor& x, const CausalConvParams& p) {
    p.validate();
    if (x.rank() != 2) throw std::invalid_argument("causal_conv1d: input must be (time x channels)");
    const std::size_t t_len = x.extent(0);
    const std::size_t cin = x.extent(1);
    const std::size_t cout = p.out_channels();
    const std::size_t k = p.kernel_size();
    const std::size_t d = p.dilation;
    if (cin != p.in_channels())
        throw std::invalid_argument("causal_conv1d: input has " + std::to_string(cin) +
                                    " channels, kernel expects " + std::to_string(p.in_channels()));

    const auto& xd = x.data();
    const auto& wd = p.kernel.data();
    const auto& bd = p.bias.data();

    std::vector<double> y(t_len * cout);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t oc = 0; oc < cout; ++oc) {
            double acc = bd[oc];
            const double* wrow = wd.data() + oc * cin * k;
            for (std::size_t j = 0; j < k; ++j) {
                std::size_t back = (k - 1 - j) * d;
                if (back > t) continue;
                const double* xrow = xd.data() + (t - back) * cin;
                for (std::size_t ic = 0; ic < cin; ++ic) acc += wrow[ic * k + j] * xrow[ic];
            }
            y[t * cout + oc] = acc;
        }
    }

    BackwardFn backward = [t_len, cin, cout, k, d, xp = x.shared_data(), wp = p.kernel.shared_data(),
                           xn = x.node(), wn = p.kernel.node(), bn = p.bias.node(),
                           x_tracked = Tape::tracked_here(x), w_tracked = Tape::tracked_here(p.kernel),
                           b_tracked = Tape::tracked_here(p.bias)](const std::vector<double>& g,
                                                                   GradientSink& sink) {
        const auto& xd = *xp;
        const auto& wd = *wp;
        if (b_tracked) {
            auto& gb = sink.of(bn);
            for (std::size_t t = 0; t < t_len; ++t)
                for (std::size_t oc = 0; oc < cout; ++oc) gb[oc] += g[t * cout + oc];
        }
        if (w_tracked) {
            auto& gw = sink.of(wn);
            for (std::size_t t = 0; t < t_len; ++t) {
                for (std::size_t j = 0; j < k; ++j) {
                    std::size_t back = (k - 1 - j) * d;
                    if (back > t) continue;
                    const double* xrow = xd.data() + (t - back) * cin;
                    for (std::size_t oc = 0; oc < cout; ++oc) {
                        double go = g[t * cout + oc];
                        double* gwrow = gw.data() + oc * cin * k;
                        for (std::size_t ic = 0; ic < cin; ++ic) gwrow[ic * k + j] += go * xrow[ic];
                    }
                }
            }
        }
        if (x_tracked) {
            auto& gx = sink.of(xn);
            for (std::size_t t = 0; t < t_len; ++t) {
                for (std::size_t j = 0; j < k; ++j) {
                    std::size_t back = (k - 1 - j) * d;
                    if (back > t) continue;
                    double* gxrow = gx.data() + (t - back) * cin;
                    for (std::size_t oc = 0; oc < cout; ++oc) {
                        double go = g[t * cout + oc];
                        const double* wrow = wd.data() + oc * cin * k;
                        for (std::size_t ic = 0; ic < cin; ++ic) gxrow[ic] += wrow[ic * k + j] * go;
                    }
                }
            }
        }
    };

    return detail::make_result({t_len, cout}, std::move(y), "causal_conv1d", {&x, &p.kernel, &p.bias},
                               std::move(backward));
}

// WaveNet gated unit: tanh(xf) * sigmoid(xg), elementwise.
inline Tensor gated_activation(const Tensor& xf, const Tensor& xg) {
    if (xf.shape() != xg.shape()) throw std::invalid_argument("gated_activation: shape mismatch");
    return mul(tanh(xf), sigmoid(xg));
}

// ---------------------------------------------------------------------------
// WaveNet layer and block
// ---------------------------------------------------------------------------

struct WaveNetLayerParams {
    CausalConvParams filter_conv;
    CausalConvParams gate_conv;
    CausalConvParams residual_proj;  // 1x1
    CausalConvParams skip_proj;      // 1x1

    void validate() const {
        filter_conv.validate();
        gate_conv.validate();
        residual_proj.validate();
        skip_proj.validate();
        if (filter_conv.dilation != gate_conv.dilation ||
            filter_conv.kernel_size() != gate_conv.kernel_size())
            throw std::invalid_argument("WaveNetLayerParams: filter/gate convs must share dilation and size");
        if (residual_proj.kernel_size() != 1 || skip_proj.kernel_size() != 1)
            throw std::invalid_argument("WaveNetLayerParams: projections must be 1x1");
        if (residual_proj.out_channels() != filter_conv.in_channels())
            throw std::invalid_argument("WaveNetLayerParams: residual path must preserve channel count");
    }
};

struct WaveNetLayerOut {
    Tensor residual;  // x + residual_proj(z), same shape as the input
    Tensor skip;      // skip_proj(z)
};

inline WaveNetLayerOut wavenet_layer_forward(const Tensor& x, const WaveNetLayerParams& p) {
    p.validate();
    Tensor z = gated_activation(causal_conv1d(x, p.filter_conv), causal_conv1d(x, p.gate_conv));
    Tensor residual = add(x, causal_conv1d(z, p.residual_proj));
    Tensor skip = causal_conv1d(z, p.skip_proj);
    return {std::move(residual), std::move(skip)};
}

struct WaveNetBlockParams {
    std::vector<WaveNetLayerParams> layers;  // dilations double per layer: 1, 2, 4, ...

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("WaveNetBlockParams: no layers");
        for (std::size_t j = 0; j < layers.size(); ++j) {
            layers[j].validate();
            std::size_t expected = std::size_t{1} << j;
            if (layers[j].filter_conv.dilation != expected)
                throw std::invalid_argument("WaveNetBlockParams: layer " + std::to_string(j) +
                                            " dilation must be " + std::to_string(expected));
        }
    }
};

struct WaveNetBlockOut {
    Tensor residual;  // output of the residual stream
    Tensor skip_sum;  // sum of all layers' skip outputs
};

inline WaveNetBlockOut wavenet_block_forward(const Tensor& x, const WaveNetBlockParams& p) {
    p.validate();
    Tensor stream = x;
    Tensor skip_sum;
    bool first = true;
    for (const WaveNetLayerParams& layer : p.layers) {
        WaveNetLayerOut out = wavenet_layer_forward(stream, layer);
        stream = std::move(out.residual);
        skip_sum = first ? std::move(out.skip) : add(skip_sum, out.skip);
        first = false;
    }
    return {std::move(stream), std::move(skip_sum)};
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

enum class AttentionKind { Temporal, DotProduct, None };

struct AttentionParams {
    AttentionKind kind = AttentionKind::Temporal;
    // Present only for the temporal kind: a (feature -> scalar) score map.
    Tensor score_weights;  // (feature_dim)
    Tensor score_bias;     // scalar
};

// Per timestep t: s_t = W . V[t] + b; weight w_t = exp(tanh(s_t)); the output
// row is w_t * V[t]. No normalization across time, so every weight lies in
// [1/e, e] and zero scores leave V unchanged.
inline Tensor temporal_attention(const Tensor& v, const AttentionParams& p) {
    if (p.kind != AttentionKind::Temporal)
        throw std::invalid_argument("temporal_attention: params are not the temporal kind");
    if (v.rank() != 2) throw std::invalid_argument("temporal_attention: input must be (time x features)");
    if (p.score_weights.rank() != 1 || p.score_weights.extent(0) != v.extent(1))
        throw std::invalid_argument("temporal_attention: score weight dimension mismatch");
    Tensor scores = add(matmul(v, reshape(p.score_weights, {v.extent(1), 1})), p.score_bias);
    Tensor weights = exp(tanh(scores));  // (T x 1)
    return scale_rows(v, reshape(weights, {v.extent(0)}));
}

// Luong-style self-attention with the input as query, key and value:
// softmax(X X^T) X, row-wise softmax.
inline Tensor dot_product_attention(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("dot_product_attention: input must be (time x features)");
    Tensor scores = matmul(x, transpose(x));
    return matmul(softmax(scores, 1), x);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

enum class SequenceDirection { Forward, Backward };

// One direction's gate parameters, packed in row blocks [input; forget;
// cell; output], each hidden_dim rows.
struct LstmDirectionParams {
    Tensor wx;    // (4H x input_dim)
    Tensor wh;    // (4H x H)
    Tensor bias;  // (4H); forget block initialized to 1
};

struct LstmParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    bool bidirectional = true;
    LstmDirectionParams forward;
    LstmDirectionParams backward;  // independent parameters; unused if unidirectional

    void validate_direction(const LstmDirectionParams& d) const {
        if (d.wx.rank() != 2 || d.wx.extent(0) != 4 * hidden_dim || d.wx.extent(1) != input_dim)
            throw std::invalid_argument("LstmParams: wx shape mismatch");
        if (d.wh.rank() != 2 || d.wh.extent(0) != 4 * hidden_dim || d.wh.extent(1) != hidden_dim)
            throw std::invalid_argument("LstmParams: wh shape mismatch");
        if (d.bias.rank() != 1 || d.bias.extent(0) != 4 * hidden_dim)
            throw std::invalid_argument("LstmParams: bias shape mismatch");
    }

    void validate() const {
        validate_direction(forward);
        if (bidirectional) validate_direction(backward);
    }
};

namespace detail {

// Chronological LSTM sweep with full backpropagation through time.
// c_t = f*c_{t-1} + i*g, h_t = o*tanh(c_t), h_0 = c_0 = 0.
inline Tensor lstm_forward_chrono(const Tensor& seq, const LstmDirectionParams& d, std::size_t hidden) {
    const std::size_t t_len = seq.extent(0);
    const std::size_t in_dim = seq.extent(1);
    const std::size_t h4 = 4 * hidden;

    const auto& xd = seq.data();
    const auto& wxd = d.wx.data();
    const auto& whd = d.wh.data();
    const auto& bd = d.bias.data();

    std::vector<double> hs(t_len * hidden, 0.0);
    // saved activations for the backward sweep
    auto gates = std::make_shared<std::vector<double>>(t_len * h4);   // i, f, g, o per step
    auto cells = std::make_shared<std::vector<double>>(t_len * hidden);

    std::vector<double> h_prev(hidden, 0.0), c_prev(hidden, 0.0), z(h4);
    for (std::size_t t = 0; t < t_len; ++t) {
        const double* xrow = xd.data() + t * in_dim;
        for (std::size_t r = 0; r < h4; ++r) {
            double acc = bd[r];
            const double* wxr = wxd.data() + r * in_dim;
            for (std::size_t c = 0; c < in_dim; ++c) acc += wxr[c] * xrow[c];
            const double* whr = whd.data() + r * hidden;
            for (std::size_t c = 0; c < hidden; ++c) acc += whr[c] * h_prev[c];
            z[r] = acc;
        }
        double* grow = gates->data() + t * h4;
        double* crow = cells->data() + t * hidden;
        for (std::size_t u = 0; u < hidden; ++u) {
            double iv = sigmoid_val(z[u]);
            double fv = sigmoid_val(z[hidden + u]);
            double gv = std::tanh(z[2 * hidden + u]);
            double ov = sigmoid_val(z[3 * hidden + u]);
            grow[u] = iv;
            grow[hidden + u] = fv;
            grow[2 * hidden + u] = gv;
            grow[3 * hidden + u] = ov;
            double cv = fv * c_prev[u] + iv * gv;
            crow[u] = cv;
            hs[t * hidden + u] = ov * std::tanh(cv);
        }
        for (std::size_t u = 0; u < hidden; ++u) {
            h_prev[u] = hs[t * hidden + u];
            c_prev[u] = crow[u];
        }
    }

    Tensor out = Tensor::create({t_len, hidden}, std::move(hs));
    auto hp = out.shared_data();

    BackwardFn backprop = [t_len, in_dim, hidden, h4, xp = seq.shared_data(), wxp = d.wx.shared_data(),
                           whp = d.wh.shared_data(), gates, cells, hp, xn = seq.node(), wxn = d.wx.node(),
                           whn = d.wh.node(), bn = d.bias.node(), x_tracked = Tape::tracked_here(seq),
                           wx_tracked = Tape::tracked_here(d.wx), wh_tracked = Tape::tracked_here(d.wh),
                           b_tracked = Tape::tracked_here(d.bias)](const std::vector<double>& gout,
                                                                   GradientSink& sink) {
        const auto& xd = *xp;
        const auto& wxd = *wxp;
        const auto& whd = *whp;
        const auto& gt = *gates;
        const auto& ct = *cells;
        const auto& ht = *hp;

        std::vector<double> dh_next(hidden, 0.0), dc_next(hidden, 0.0), dz(h4);
        std::vector<double> dwx, dwh, db, dx;
        if (wx_tracked) dwx.assign(h4 * in_dim, 0.0);
        if (wh_tracked) dwh.assign(h4 * hidden, 0.0);
        if (b_tracked) db.assign(h4, 0.0);
        if (x_tracked) dx.assign(t_len * in_dim, 0.0);

        for (std::size_t ti = t_len; ti-- > 0;) {
            const double* grow = gt.data() + ti * h4;
            const double* crow = ct.data() + ti * hidden;
            const double* c_prev = ti > 0 ? ct.data() + (ti - 1) * hidden : nullptr;
            for (std::size_t u = 0; u < hidden; ++u) {
                double dh = gout[ti * hidden + u] + dh_next[u];
                double iv = grow[u], fv = grow[hidden + u], gv = grow[2 * hidden + u],
                       ov = grow[3 * hidden + u];
                double tc = std::tanh(crow[u]);
                double dc = dh * ov * (1.0 - tc * tc) + dc_next[u];
                double cp = c_prev ? c_prev[u] : 0.0;
                dz[u] = dc * gv * iv * (1.0 - iv);                    // input gate
                dz[hidden + u] = dc * cp * fv * (1.0 - fv);           // forget gate
                dz[2 * hidden + u] = dc * iv * (1.0 - gv * gv);       // cell candidate
                dz[3 * hidden + u] = dh * tc * ov * (1.0 - ov);       // output gate
                dc_next[u] = dc * fv;
            }
            const double* xrow = xd.data() + ti * in_dim;
            const double* h_prev = ti > 0 ? ht.data() + (ti - 1) * hidden : nullptr;
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            for (std::size_t r = 0; r < h4; ++r) {
                double dzr = dz[r];
                if (dzr == 0.0) continue;
                if (b_tracked) db[r] += dzr;
                if (wx_tracked) {
                    double* dwxr = dwx.data() + r * in_dim;
                    for (std::size_t c = 0; c < in_dim; ++c) dwxr[c] += dzr * xrow[c];
                }
                if (wh_tracked && h_prev) {
                    double* dwhr = dwh.data() + r * hidden;
                    for (std::size_t c = 0; c < hidden; ++c) dwhr[c] += dzr * h_prev[c];
                }
                if (x_tracked) {
                    const double* wxr = wxd.data() + r * in_dim;
                    double* dxrow = dx.data() + ti * in_dim;
                    for (std::size_t c = 0; c < in_dim; ++c) dxrow[c] += dzr * wxr[c];
                }
                const double* whr = whd.data() + r * hidden;
                for (std::size_t c = 0; c < hidden; ++c) dh_next[c] += dzr * whr[c];
            }
        }

        if (wx_tracked) {
            auto& sink_wx = sink.of(wxn);
            for (std::size_t i = 0; i < dwx.size(); ++i) sink_wx[i] += dwx[i];
        }
        if (wh_tracked) {
            auto& sink_wh = sink.of(whn);
            for (std::size_t i = 0; i < dwh.size(); ++i) sink_wh[i] += dwh[i];
        }
        if (b_tracked) {
            auto& sink_b = sink.of(bn);
            for (std::size_t i = 0; i < db.size(); ++i) sink_b[i] += db[i];
        }
        if (x_tracked) {
            auto& sink_x = sink.of(xn);
            for (std::size_t i = 0; i < dx.size(); ++i) sink_x[i] += dx[i];
        }
    };

    return attach(std::move(out), {&seq, &d.wx, &d.wh, &d.bias}, std::move(backprop));
}

}  // namespace detail

// Hidden states for every timestep. The backward direction processes
// reversed time and re-reverses its outputs, so row t always aligns with
// input row t.
inline Tensor lstm_sequence(const Tensor& seq, const LstmParams& p, SequenceDirection direction) {
    p.validate();
    if (seq.rank() != 2 || seq.extent(1) != p.input_dim)
        throw std::invalid_argument("lstm_sequence: input dimension mismatch");
    if (direction == SequenceDirection::Forward) {
        return detail::lstm_forward_chrono(seq, p.forward, p.hidden_dim);
    }
    if (!p.bidirectional)
        throw std::invalid_argument("lstm_sequence: backward direction requested on unidirectional params");
    return reverse_time(detail::lstm_forward_chrono(reverse_time(seq), p.backward, p.hidden_dim));
}

// Concatenated terminal hidden states: forward h_T, then backward h_1.
// Unidirectional params yield just the forward terminal state.
inline Tensor bilstm_readout(const Tensor& seq, const LstmParams& p) {
    Tensor fw = lstm_sequence(seq, p, SequenceDirection::Forward);
    Tensor fw_last = take_row(fw, seq.extent(0) - 1);
    if (!p.bidirectional) return fw_last;
    Tensor bw = lstm_sequence(seq, p, SequenceDirection::Backward);
    return concat(fw_last, take_row(bw, 0));
}

// ---------------------------------------------------------------------------
// Temporal average pooling
// ---------------------------------------------------------------------------

// Non-overlapping window means along time; a trailing partial window drops.
inline Tensor avg_pool_time(const Tensor& x, std::size_t factor) {
    if (x.rank() != 2) throw std::invalid_argument("avg_pool_time: input must be (time x channels)");
    if (factor < 1) throw std::invalid_argument("avg_pool_time: factor must be >= 1");
    const std::size_t t_len = x.extent(0);
    const std::size_t ch = x.extent(1);
    if (factor > t_len) throw std::invalid_argument("avg_pool_time: factor exceeds sequence length");
    if (factor == 1) return x;

    const std::size_t out_len = t_len / factor;
    std::vector<double> y(out_len * ch, 0.0);
    const auto& xd = x.data();
    for (std::size_t p = 0; p < out_len; ++p) {
        for (std::size_t t = p * factor; t < (p + 1) * factor; ++t)
            for (std::size_t c = 0; c < ch; ++c) y[p * ch + c] += xd[t * ch + c];
        for (std::size_t c = 0; c < ch; ++c) y[p * ch + c] /= static_cast<double>(factor);
    }

    BackwardFn backward = [out_len, factor, ch, xn = x.node()](const std::vector<double>& g,
                                                               GradientSink& sink) {
        auto& gx = sink.of(xn);
        double inv = 1.0 / static_cast<double>(factor);
        for (std::size_t p = 0; p < out_len; ++p)
            for (std::size_t t = p * factor; t < (p + 1) * factor; ++t)
                for (std::size_t c = 0; c < ch; ++c) gx[t * ch + c] += g[p * ch + c] * inv;
    };

    return detail::make_result({out_len, ch}, std::move(y), "avg_pool_time", {&x}, std::move(backward));
}

}  // namespace greeneyes
