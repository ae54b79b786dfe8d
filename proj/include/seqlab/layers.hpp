#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

/// Token-index lookup table, V x D. Row i is the embedding of token i.
/// Forward is a gather (equivalent to one-hot times matrix); backward
/// scatter-adds into the gradient buffer.
template <typename S>
struct EmbeddingLayer {
    Tensor<S> weight;  // [V, D]
    Tensor<S> grad;    // [V, D]

    void init(std::size_t vocab, std::size_t dim, SeededRng& rng) {
        weight = rng_glorot<S>(rng, vocab, dim, {vocab, dim});
        grad = Tensor<S>({vocab, dim});
    }

    std::size_t vocab_size() const { return weight.rows(); }
    std::size_t embed_dim() const { return weight.cols(); }

    Tensor<S> forward(std::span<const int> tokens) const {
        Tensor<S> out({tokens.size(), embed_dim()});
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const int tok = tokens[t];
            if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_size())
                throw std::invalid_argument("embedding: token " + std::to_string(tok) +
                                            " out of range at position " + std::to_string(t));
            std::copy(weight.row_ptr(static_cast<std::size_t>(tok)),
                      weight.row_ptr(static_cast<std::size_t>(tok)) + embed_dim(), out.row_ptr(t));
        }
        return out;
    }

    void backward(std::span<const int> tokens, const Tensor<S>& grad_out) {
        if (grad_out.rank() != 2 || grad_out.rows() != tokens.size() ||
            grad_out.cols() != embed_dim())
            throw std::invalid_argument("embedding backward: gradient shape mismatch " +
                                        grad_out.shape_str());
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            S* g = grad.row_ptr(static_cast<std::size_t>(tokens[t]));
            const S* d = grad_out.row_ptr(t);
            for (std::size_t j = 0; j < embed_dim(); ++j) g[j] += d[j];
        }
    }

    void zero_grad() { grad.fill(S(0)); }
};

/// One LSTM layer over concatenated (x_t, h_{t-1}) inputs:
///   f = sigma(W_f (x,h) + b_f)     i = sigma(W_i (x,h) + b_i)
///   c' = tanh(W_c (x,h) + b_c)     o = sigma(W_o (x,h) + b_o)
///   c_t = i (*) c' + f (*) c_prev  h_t = o (*) tanh(c_t)
/// All matrices carry a leading batch dimension; single vectors are 1 x D.
/// Per-step activations are cached for backpropagation through time.
template <typename S>
struct LstmLayer {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;

    Tensor<S> w_f, w_i, w_c, w_o;  // [H, input_dim + H]
    Tensor<S> b_f, b_i, b_c, b_o;  // [H]
    Tensor<S> gw_f, gw_i, gw_c, gw_o;
    Tensor<S> gb_f, gb_i, gb_c, gb_o;

    struct StepCache {
        Tensor<S> xh;      // [B, input_dim + H]
        Tensor<S> f, i, cand, o;  // gate activations, [B, H]
        Tensor<S> c_prev, c, tanh_c, h;  // [B, H]
    };
    std::vector<StepCache> cache;

    void init(std::size_t in_dim, std::size_t hid_dim, SeededRng& rng) {
        input_dim = in_dim;
        hidden_dim = hid_dim;
        const std::size_t w = in_dim + hid_dim;
        auto make_w = [&] { return rng_glorot<S>(rng, w, hid_dim, {hid_dim, w}); };
        w_f = make_w();
        w_i = make_w();
        w_c = make_w();
        w_o = make_w();
        // Forget bias starts at 1 so cell gradients survive early training.
        b_f = full<S>({hid_dim}, S(1));
        b_i = Tensor<S>({hid_dim});
        b_c = Tensor<S>({hid_dim});
        b_o = Tensor<S>({hid_dim});
        gw_f = Tensor<S>(w_f.shape);
        gw_i = Tensor<S>(w_i.shape);
        gw_c = Tensor<S>(w_c.shape);
        gw_o = Tensor<S>(w_o.shape);
        gb_f = Tensor<S>(b_f.shape);
        gb_i = Tensor<S>(b_i.shape);
        gb_c = Tensor<S>(b_c.shape);
        gb_o = Tensor<S>(b_o.shape);
    }

    void zero_grad() {
        for (Tensor<S>* g : {&gw_f, &gw_i, &gw_c, &gw_o, &gb_f, &gb_i, &gb_c, &gb_o})
            g->fill(S(0));
    }

    void clear_cache() { cache.clear(); }

    Tensor<S> zero_state(std::size_t batch) const { return Tensor<S>({batch, hidden_dim}); }

    /// Transposed weight copies valid for one forward sequence; weights are
    /// only mutated between sequences (by the optimizer), never inside one.
    struct GateWeightsT {
        Tensor<S> f, i, c, o;  // [input_dim + H, H]
    };
    GateWeightsT transposed_weights() const {
        return {transpose(w_f), transpose(w_i), transpose(w_c), transpose(w_o)};
    }

    /// One timestep over a [B x input_dim] slab. Returns (h_t, c_t) and
    /// pushes the activations needed by step_backward.
    std::pair<Tensor<S>, Tensor<S>> step_forward(const Tensor<S>& x, const Tensor<S>& h_prev,
                                                 const Tensor<S>& c_prev) {
        const GateWeightsT wt = transposed_weights();
        return step_forward_with(wt, x, h_prev, c_prev);
    }

    std::pair<Tensor<S>, Tensor<S>> step_forward_with(const GateWeightsT& wt, const Tensor<S>& x,
                                                      const Tensor<S>& h_prev,
                                                      const Tensor<S>& c_prev) {
        check_step_shapes(x, h_prev, c_prev);
        StepCache st;
        st.xh = hconcat(x, h_prev);
        st.f = gate(st.xh, wt.f, b_f, /*is_tanh=*/false);
        st.i = gate(st.xh, wt.i, b_i, false);
        st.cand = gate(st.xh, wt.c, b_c, true);
        st.o = gate(st.xh, wt.o, b_o, false);
        st.c_prev = c_prev;
        st.c = add(hadamard(st.i, st.cand), hadamard(st.f, c_prev));
        st.tanh_c = tanh(st.c);
        st.h = hadamard(st.o, st.tanh_c);
        auto out = std::make_pair(st.h, st.c);
        cache.push_back(std::move(st));
        return out;
    }

    struct StepGrads {
        Tensor<S> dx, dh_prev, dc_prev;
    };

    /// Reverse-mode gradients of the most recent un-consumed forward step.
    /// Accumulates into the weight/bias gradient buffers and pops the cache.
    StepGrads step_backward(const Tensor<S>& dh, const Tensor<S>& dc) {
        if (cache.empty())
            throw std::invalid_argument("lstm step_backward: no cached forward step");
        const StepCache& st = cache.back();
        require_same_shape(dh, st.h, "lstm step_backward dh");
        require_same_shape(dc, st.c, "lstm step_backward dc");

        const std::size_t b = st.h.rows();
        const std::size_t hd = hidden_dim;
        Tensor<S> dzf({b, hd}), dzi({b, hd}), dzc({b, hd}), dzo({b, hd}), dc_prev({b, hd});
        for (std::size_t n = 0; n < b * hd; ++n) {
            const S f = st.f.data[n], ig = st.i.data[n], cd = st.cand.data[n], o = st.o.data[n];
            const S tc = st.tanh_c.data[n];
            const S dht = dh.data[n];
            // d/dc of h = o * tanh(c), plus the grad arriving from step t+1
            const S dct = dc.data[n] + dht * o * (S(1) - tc * tc);
            dzo.data[n] = dht * tc * o * (S(1) - o);
            dzf.data[n] = dct * st.c_prev.data[n] * f * (S(1) - f);
            dzi.data[n] = dct * cd * ig * (S(1) - ig);
            dzc.data[n] = dct * ig * (S(1) - cd * cd);
            dc_prev.data[n] = dct * f;
        }

        gemm_tn_acc(dzf, st.xh, gw_f);
        gemm_tn_acc(dzi, st.xh, gw_i);
        gemm_tn_acc(dzc, st.xh, gw_c);
        gemm_tn_acc(dzo, st.xh, gw_o);
        accumulate_column_sums(dzf, gb_f);
        accumulate_column_sums(dzi, gb_i);
        accumulate_column_sums(dzc, gb_c);
        accumulate_column_sums(dzo, gb_o);

        Tensor<S> dxh({b, input_dim + hd});
        gemm_acc(dzf, w_f, dxh);
        gemm_acc(dzi, w_i, dxh);
        gemm_acc(dzc, w_c, dxh);
        gemm_acc(dzo, w_o, dxh);

        StepGrads g;
        g.dx = Tensor<S>({b, input_dim});
        g.dh_prev = Tensor<S>({b, hd});
        g.dc_prev = std::move(dc_prev);
        for (std::size_t r = 0; r < b; ++r) {
            const S* src = dxh.row_ptr(r);
            std::copy(src, src + input_dim, g.dx.row_ptr(r));
            std::copy(src + input_dim, src + input_dim + hd, g.dh_prev.row_ptr(r));
        }
        cache.pop_back();
        return g;
    }

    /// Left fold of step_forward with h_0 = c_0 = 0. Returns h_t per step.
    std::vector<Tensor<S>> sequence_forward(const std::vector<Tensor<S>>& xs) {
        if (xs.empty()) throw std::invalid_argument("lstm sequence_forward: empty input");
        clear_cache();
        const GateWeightsT wt = transposed_weights();
        const std::size_t b = xs.front().rows();
        Tensor<S> h = zero_state(b);
        Tensor<S> c = zero_state(b);
        std::vector<Tensor<S>> hs;
        hs.reserve(xs.size());
        for (const Tensor<S>& x : xs) {
            auto [hn, cn] = step_forward_with(wt, x, h, c);
            h = std::move(hn);
            c = std::move(cn);
            hs.push_back(h);
        }
        return hs;
    }

    /// Right fold of step_backward: dhs[t] is the upstream gradient on h_t.
    /// Accumulates parameter gradients over all steps, returns dx per step.
    std::vector<Tensor<S>> sequence_backward(const std::vector<Tensor<S>>& dhs) {
        if (dhs.size() != cache.size())
            throw std::invalid_argument("lstm sequence_backward: expected " +
                                        std::to_string(cache.size()) + " gradients, got " +
                                        std::to_string(dhs.size()));
        const std::size_t steps = dhs.size();
        const std::size_t b = dhs.front().rows();
        std::vector<Tensor<S>> dxs(steps);
        Tensor<S> dh_carry = zero_state(b);
        Tensor<S> dc_carry = zero_state(b);
        for (std::size_t t = steps; t-- > 0;) {
            Tensor<S> dh = add(dhs[t], dh_carry);
            StepGrads g = step_backward(dh, dc_carry);
            dxs[t] = std::move(g.dx);
            dh_carry = std::move(g.dh_prev);
            dc_carry = std::move(g.dc_prev);
        }
        return dxs;
    }

private:
    Tensor<S> gate(const Tensor<S>& xh, const Tensor<S>& wt, const Tensor<S>& bias,
                   bool is_tanh) const {
        Tensor<S> z = gemm(xh, wt);
        add_bias_rows(z, bias);
        return is_tanh ? tanh(z) : sigmoid(z);
    }

    static void accumulate_column_sums(const Tensor<S>& m, Tensor<S>& into) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const S* row = m.row_ptr(i);
            for (std::size_t j = 0; j < m.cols(); ++j) into.data[j] += row[j];
        }
    }

    void check_step_shapes(const Tensor<S>& x, const Tensor<S>& h_prev,
                           const Tensor<S>& c_prev) const {
        detail::require(x.rank() == 2 && x.cols() == input_dim,
                        "lstm: input shape " + x.shape_str() + " does not match input_dim " +
                            std::to_string(input_dim));
        detail::require(h_prev.rank() == 2 && h_prev.cols() == hidden_dim &&
                            h_prev.rows() == x.rows(),
                        "lstm: h_prev shape " + h_prev.shape_str() + " mismatch");
        detail::require(c_prev.rank() == 2 && c_prev.cols() == hidden_dim &&
                            c_prev.rows() == x.rows(),
                        "lstm: c_prev shape " + c_prev.shape_str() + " mismatch");
    }
};

/// Final H -> V affine map whose logits feed the softmax.
template <typename S>
struct ProjectionLayer {
    Tensor<S> weight;  // [H, V]
    Tensor<S> bias;    // [V]
    Tensor<S> gw, gb;
    Tensor<S> cached_input;  // [N, H] from the last forward

    void init(std::size_t hidden, std::size_t vocab, SeededRng& rng) {
        weight = rng_glorot<S>(rng, hidden, vocab, {hidden, vocab});
        bias = Tensor<S>({vocab});
        gw = Tensor<S>(weight.shape);
        gb = Tensor<S>(bias.shape);
    }

    std::size_t vocab_size() const { return weight.cols(); }

    Tensor<S> forward(const Tensor<S>& h) {
        detail::require(h.rank() == 2 && h.cols() == weight.rows(),
                        "projection: input shape " + h.shape_str() + " mismatch");
        cached_input = h;
        Tensor<S> logits = gemm(h, weight);
        add_bias_rows(logits, bias);
        return logits;
    }

    Tensor<S> backward(const Tensor<S>& dlogits) {
        detail::require(cached_input.rank() == 2, "projection backward: no cached forward");
        gemm_tn_acc(cached_input, dlogits, gw);
        for (std::size_t i = 0; i < dlogits.rows(); ++i) {
            const S* row = dlogits.row_ptr(i);
            for (std::size_t j = 0; j < dlogits.cols(); ++j) gb.data[j] += row[j];
        }
        return gemm_nt(dlogits, weight);
    }

    void zero_grad() {
        gw.fill(S(0));
        gb.fill(S(0));
    }
};

/// Mean per-position categorical cross entropy over softmax probabilities.
///   loss = -(1/N) sum_t ln probs[t][targets[t]]
///   grad_logits = (probs - onehot(targets)) / N
template <typename S>
struct CrossEntropyResult {
    double loss = 0.0;
    Tensor<S> grad_logits;
};

template <typename S>
CrossEntropyResult<S> cross_entropy(const Tensor<S>& probs, std::span<const int> targets) {
    detail::require(probs.rank() == 2, "cross_entropy: probs must be [N x V]");
    detail::require(probs.rows() == targets.size(),
                    "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(probs.rows()) + " rows");
    const std::size_t n = probs.rows(), v = probs.cols();
    CrossEntropyResult<S> res;
    res.grad_logits = Tensor<S>({n, v});
    const S inv_n = S(1) / static_cast<S>(n);
    double loss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const int tgt = targets[t];
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= v)
            throw std::invalid_argument("cross_entropy: target " + std::to_string(tgt) +
                                        " out of range at position " + std::to_string(t));
        const S* p = probs.row_ptr(t);
        S* g = res.grad_logits.row_ptr(t);
        for (std::size_t j = 0; j < v; ++j) g[j] = p[j] * inv_n;
        g[tgt] -= inv_n;
        // Guard against single-precision underflow of a near-zero probability.
        const S pt = std::max(p[tgt], std::numeric_limits<S>::min());
        loss -= std::log(static_cast<double>(pt));
    }
    res.loss = loss / static_cast<double>(n);
    return res;
}

}  // namespace seqlab
