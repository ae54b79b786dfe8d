#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqlab/layers.hpp"
#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 300;
    std::size_t hidden_size = 128;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t input_length = 25;
    std::size_t output_length = 25;

    void validate() const {
        detail::require(vocab_size >= 2, "model config: vocab_size must be >= 2");
        detail::require(hidden_size >= 1, "model config: hidden_size must be >= 1");
        detail::require(embed_dim >= 1, "model config: embed_dim must be >= 1");
        detail::require(encoder_layers == 2 && decoder_layers == 2,
                        "model config: this architecture is fixed at 2 encoder and 2 decoder layers");
        detail::require(input_length == output_length,
                        "model config: all supported transformations preserve length");
        detail::require(input_length >= 1, "model config: input_length must be >= 1");
    }

    bool operator==(const ModelConfig&) const = default;
};

using TokenBatch = std::vector<std::vector<int>>;

/// A mutable view into one registered parameter and its gradient buffer.
template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* value;
    Tensor<S>* grad;
};

/// Encoder-decoder over token sequences:
///   embedding -> enc1 -> enc2 -> context (enc2's final hidden state)
///   context repeated at every decoder step -> dec1 -> dec2 -> projection -> softmax
/// No teacher forcing; train and inference run the identical graph. Decoder
/// states start at zero, conditioning flows only through the repeated context.
template <typename S>
struct Seq2SeqModel {
    ModelConfig config;
    EmbeddingLayer<S> embedding;
    LstmLayer<S> enc1, enc2, dec1, dec2;
    ProjectionLayer<S> projection;

    void init(const ModelConfig& cfg, SeededRng& rng) {
        cfg.validate();
        config = cfg;
        embedding.init(cfg.vocab_size, cfg.embed_dim, rng);
        enc1.init(cfg.embed_dim, cfg.hidden_size, rng);
        enc2.init(cfg.hidden_size, cfg.hidden_size, rng);
        dec1.init(cfg.hidden_size, cfg.hidden_size, rng);
        dec2.init(cfg.hidden_size, cfg.hidden_size, rng);
        projection.init(cfg.hidden_size, cfg.vocab_size, rng);
    }

    /// Every trainable tensor exactly once, under a stable name. The order
    /// fixes the optimizer state layout and the checkpoint blob layout.
    std::vector<ParamRef<S>> parameters() {
        std::vector<ParamRef<S>> ps;
        ps.push_back({"embedding.weight", &embedding.weight, &embedding.grad});
        auto add_lstm = [&ps](const std::string& prefix, LstmLayer<S>& l) {
            ps.push_back({prefix + ".w_f", &l.w_f, &l.gw_f});
            ps.push_back({prefix + ".w_i", &l.w_i, &l.gw_i});
            ps.push_back({prefix + ".w_c", &l.w_c, &l.gw_c});
            ps.push_back({prefix + ".w_o", &l.w_o, &l.gw_o});
            ps.push_back({prefix + ".b_f", &l.b_f, &l.gb_f});
            ps.push_back({prefix + ".b_i", &l.b_i, &l.gb_i});
            ps.push_back({prefix + ".b_c", &l.b_c, &l.gb_c});
            ps.push_back({prefix + ".b_o", &l.b_o, &l.gb_o});
        };
        add_lstm("enc1", enc1);
        add_lstm("enc2", enc2);
        add_lstm("dec1", dec1);
        add_lstm("dec2", dec2);
        ps.push_back({"projection.weight", &projection.weight, &projection.gw});
        ps.push_back({"projection.bias", &projection.bias, &projection.gb});
        return ps;
    }

    void zero_grads() {
        embedding.zero_grad();
        enc1.zero_grad();
        enc2.zero_grad();
        dec1.zero_grad();
        dec2.zero_grad();
        projection.zero_grad();
    }

    /// Per-step output distributions, shape [B, L', V]. Each [b][t] row is a
    /// valid probability vector.
    Tensor<S> forward(const TokenBatch& inputs) {
        Internal fw = run_forward(inputs);
        const std::size_t b = inputs.size(), lp = config.output_length, v = config.vocab_size;
        Tensor<S> out({b, lp, v});
        // internal rows are timestep-major (t*B + b); callers see batch-major
        for (std::size_t t = 0; t < lp; ++t)
            for (std::size_t r = 0; r < b; ++r)
                std::copy(fw.probs.row_ptr(t * b + r), fw.probs.row_ptr(t * b + r) + v,
                          out.data.data() + (r * lp + t) * v);
        return out;
    }

    /// Mean per-token cross entropy and a fresh full gradient set for the
    /// batch (buffers are zeroed first, so grads are per-call, not cumulative).
    double loss_and_gradients(const TokenBatch& inputs, const TokenBatch& targets) {
        detail::require(targets.size() == inputs.size(),
                        "loss: batch size mismatch between inputs and targets");
        for (const auto& y : targets)
            detail::require(y.size() == config.output_length,
                            "loss: target length must equal output_length");
        zero_grads();
        Internal fw = run_forward(inputs);
        const std::size_t b = inputs.size(), lp = config.output_length;

        std::vector<int> flat(b * lp);
        for (std::size_t t = 0; t < lp; ++t)
            for (std::size_t r = 0; r < b; ++r) flat[t * b + r] = targets[r][t];

        CrossEntropyResult<S> ce = cross_entropy<S>(fw.probs, flat);
        run_backward(fw, ce.grad_logits);
        return ce.loss;
    }

    /// Per-position argmax of forward(); ties resolve to the smallest index.
    TokenBatch predict(const TokenBatch& inputs) {
        Internal fw = run_forward(inputs);
        const std::size_t b = inputs.size(), lp = config.output_length, v = config.vocab_size;
        TokenBatch out(b, std::vector<int>(lp, 0));
        for (std::size_t t = 0; t < lp; ++t)
            for (std::size_t r = 0; r < b; ++r) {
                const S* p = fw.probs.row_ptr(t * b + r);
                int best = 0;
                for (std::size_t j = 1; j < v; ++j)
                    if (p[j] > p[best]) best = static_cast<int>(j);
                out[r][t] = best;
            }
        return out;
    }

private:
    struct Internal {
        std::vector<std::vector<int>> step_tokens;  // [L][B], encoder inputs per step
        std::vector<Tensor<S>> enc1_hs, enc2_hs, dec1_hs, dec2_hs;
        Tensor<S> probs;  // [L'*B, V], timestep-major rows
    };

    Internal run_forward(const TokenBatch& inputs) {
        detail::require(!inputs.empty(), "forward: empty batch");
        const std::size_t b = inputs.size(), l = config.input_length;
        for (const auto& x : inputs)
            detail::require(x.size() == l, "forward: every sequence must have length " +
                                               std::to_string(l));
        Internal fw;
        fw.step_tokens.assign(l, std::vector<int>(b));
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t r = 0; r < b; ++r) fw.step_tokens[t][r] = inputs[r][t];

        std::vector<Tensor<S>> xs;
        xs.reserve(l);
        for (std::size_t t = 0; t < l; ++t) xs.push_back(embedding.forward(fw.step_tokens[t]));

        fw.enc1_hs = enc1.sequence_forward(xs);
        fw.enc2_hs = enc2.sequence_forward(fw.enc1_hs);
        const Tensor<S>& context = fw.enc2_hs.back();

        std::vector<Tensor<S>> dec_in(config.output_length, context);
        fw.dec1_hs = dec1.sequence_forward(dec_in);
        fw.dec2_hs = dec2.sequence_forward(fw.dec1_hs);

        Tensor<S> dec_concat({config.output_length * b, config.hidden_size});
        for (std::size_t t = 0; t < config.output_length; ++t)
            std::copy(fw.dec2_hs[t].data.begin(), fw.dec2_hs[t].data.end(),
                      dec_concat.data.begin() + t * b * config.hidden_size);
        Tensor<S> logits = projection.forward(dec_concat);
        fw.probs = softmax(logits);
        return fw;
    }

    void run_backward(Internal& fw, const Tensor<S>& dlogits) {
        const std::size_t b = fw.step_tokens.front().size();
        const std::size_t lp = config.output_length, h = config.hidden_size;

        Tensor<S> dh_concat = projection.backward(dlogits);
        std::vector<Tensor<S>> d_dec2(lp);
        for (std::size_t t = 0; t < lp; ++t) {
            d_dec2[t] = Tensor<S>({b, h});
            std::copy(dh_concat.data.begin() + t * b * h, dh_concat.data.begin() + (t + 1) * b * h,
                      d_dec2[t].data.begin());
        }

        std::vector<Tensor<S>> d_dec1 = dec2.sequence_backward(d_dec2);
        std::vector<Tensor<S>> d_ctx_steps = dec1.sequence_backward(d_dec1);

        Tensor<S> d_context({b, h});
        for (const Tensor<S>& d : d_ctx_steps) add_inplace(d_context, d);

        std::vector<Tensor<S>> d_enc2(fw.enc2_hs.size(), Tensor<S>({b, h}));
        d_enc2.back() = std::move(d_context);
        std::vector<Tensor<S>> d_enc1 = enc2.sequence_backward(d_enc2);
        std::vector<Tensor<S>> d_embed = enc1.sequence_backward(d_enc1);

        for (std::size_t t = 0; t < d_embed.size(); ++t)
            embedding.backward(fw.step_tokens[t], d_embed[t]);
    }
};

}  // namespace seqlab
