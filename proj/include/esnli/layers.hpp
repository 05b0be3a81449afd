#pragma once

// Neural building blocks: embeddings, the LSTM cell, the bidirectional
// encoder with masked max-pooling over time, the linear 3-layer classifier,
// the context-conditioned decoder cell and the dual premise/hypothesis
// attention. Layers are pure functions of (parameters, inputs); parameters
// live in the store under the layer's name prefix.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esnli/autodiff.hpp"
#include "esnli/corpus.hpp"

namespace esnli::nn {

using ad::Init;
using ad::ParameterStore;
using ad::ParamSpec;
using ad::Var;
using ad::Workspace;

inline void materialize(ParameterStore& store, const std::vector<ParamSpec>& specs) {
    for (const auto& s : specs) store.get_or_init(s.name, s.shape, s.init);
}

// --- linear --------------------------------------------------------------------

struct Linear {
    std::string name;
    std::size_t in = 0, out = 0;

    ParamSpec w_spec() const { return {name + ".w", Shape{in, out}, Init::uniform_fanin()}; }
    ParamSpec b_spec() const { return {name + ".b", Shape{1, out}, Init::zeros()}; }

    void collect(std::vector<ParamSpec>& specs) const {
        specs.push_back(w_spec());
        specs.push_back(b_spec());
    }

    Var apply(Workspace& ws, ParameterStore& store, const Var& x) const {
        if (x->value.cols() != in)
            throw std::invalid_argument(name + ": input width " + std::to_string(x->value.cols()) +
                                        ", expected " + std::to_string(in));
        return ad::add(ad::matmul(x, ws.param(store, w_spec())), ws.param(store, b_spec()));
    }
};

// --- embedding -------------------------------------------------------------------

struct Embedding {
    std::string name;
    std::size_t vocab_size = 0, dim = 0;

    ParamSpec table_spec() const { return {name + ".table", Shape{vocab_size, dim}, Init::uniform(0.1)}; }
    void collect(std::vector<ParamSpec>& specs) const { specs.push_back(table_spec()); }

    Var lookup(Workspace& ws, ParameterStore& store, const std::vector<int>& ids) const {
        return ad::gather_rows(ws.param(store, table_spec()), ids);
    }
};

// --- LSTM cell ---------------------------------------------------------------------
// Gate layout along the 4H axis: input, forget, output, candidate.

struct LstmState {
    Var h, c;
};

struct LstmCell {
    std::string name;
    std::size_t input_dim = 0, hidden_dim = 0;

    ParamSpec wx_spec() const { return {name + ".w_x", Shape{input_dim, 4 * hidden_dim}, Init::uniform_fanin()}; }
    ParamSpec wh_spec() const { return {name + ".w_h", Shape{hidden_dim, 4 * hidden_dim}, Init::uniform_fanin()}; }
    ParamSpec b_spec() const { return {name + ".b", Shape{1, 4 * hidden_dim}, Init::zeros()}; }

    void collect(std::vector<ParamSpec>& specs) const {
        specs.push_back(wx_spec());
        specs.push_back(wh_spec());
        specs.push_back(b_spec());
    }

    LstmState initial(std::size_t batch) const {
        Var z = ad::constant(Tensor(Shape{batch, hidden_dim}));
        return {z, z};
    }

    LstmState step(Workspace& ws, ParameterStore& store, const Var& x, const LstmState& prev) const {
        if (x->value.cols() != input_dim)
            throw std::invalid_argument(name + ": input width " + std::to_string(x->value.cols()) +
                                        ", expected " + std::to_string(input_dim));
        Var gates = ad::add(ad::add(ad::matmul(x, ws.param(store, wx_spec())),
                                    ad::matmul(prev.h, ws.param(store, wh_spec()))),
                            ws.param(store, b_spec()));
        return gate(ws, gates, prev);
    }

    // applies the gate nonlinearities to a precomputed pre-activation sum
    LstmState gate(Workspace&, const Var& gates, const LstmState& prev) const {
        const std::size_t H = hidden_dim;
        Var i = ad::sigmoid_op(ad::slice_cols(gates, 0, H));
        Var f = ad::sigmoid_op(ad::slice_cols(gates, H, 2 * H));
        Var o = ad::sigmoid_op(ad::slice_cols(gates, 2 * H, 3 * H));
        Var g = ad::tanh_op(ad::slice_cols(gates, 3 * H, 4 * H));
        Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
        Var h = ad::mul(o, ad::tanh_op(c));
        return {h, c};
    }
};

// --- bidirectional encoder with max-pooling -------------------------------------------

struct EncoderOutput {
    std::vector<Var> states;  // per original timestep, B×2H; empty unless requested
    Var pooled;               // B×2H
    std::vector<std::size_t> lengths;
};

struct BiLstmEncoder {
    std::string name;
    Embedding embedding;       // shared with the decoder by name
    std::size_t hidden_dim = 0;  // per direction

    LstmCell forward_cell() const { return {name + ".fw", embedding.dim, hidden_dim}; }
    LstmCell backward_cell() const { return {name + ".bw", embedding.dim, hidden_dim}; }

    void collect(std::vector<ParamSpec>& specs) const {
        embedding.collect(specs);
        forward_cell().collect(specs);
        backward_cell().collect(specs);
    }

    std::size_t output_dim() const { return 2 * hidden_dim; }

    // Pooling ignores positions at or beyond each row's true length, so
    // appended padding cannot change any output.
    EncoderOutput encode(Workspace& ws, ParameterStore& store, const corpus::IdMatrix& ids,
                         bool need_states = false) const {
        const std::size_t B = ids.rows, T = ids.cols;
        if (B == 0 || T == 0) throw std::invalid_argument(name + ": empty batch");
        for (std::size_t b = 0; b < B; ++b)
            if (ids.lengths[b] == 0) throw std::invalid_argument(name + ": zero-length sequence");

        const LstmCell fw = forward_cell(), bw = backward_cell();

        std::vector<Var> hf(T);
        LstmState s = fw.initial(B);
        for (std::size_t t = 0; t < T; ++t) {
            s = fw.step(ws, store, embedding.lookup(ws, store, ids.column(t)), s);
            hf[t] = s.h;
        }

        // the reverse direction runs over per-row reversed sequences; state at
        // reversed step t belongs to original position length-1-t
        std::vector<Var> hb(T);
        LstmState sb = bw.initial(B);
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<int> col(B, corpus::Special::pad);
            for (std::size_t b = 0; b < B; ++b)
                if (t < ids.lengths[b]) col[b] = ids.at(b, ids.lengths[b] - 1 - t);
            sb = bw.step(ws, store, embedding.lookup(ws, store, col), sb);
            hb[t] = sb.h;
        }

        EncoderOutput out;
        out.lengths = ids.lengths;
        out.pooled = ad::concat_cols({ad::max_over_steps(hf, ids.lengths).values,
                                      ad::max_over_steps(hb, ids.lengths).values});
        if (need_states) {
            out.states.resize(T);
            for (std::size_t t = 0; t < T; ++t) {
                std::vector<std::size_t> pick(B, 0);
                for (std::size_t b = 0; b < B; ++b)
                    if (t < ids.lengths[b]) pick[b] = ids.lengths[b] - 1 - t;
                out.states[t] = ad::concat_cols({hf[t], ad::select_step_rows(hb, pick)});
            }
        }
        return out;
    }
};

// --- feature vector ---------------------------------------------------------------

// f = [u, v, |u−v|, u⊙v]
inline Var feature_vector(const Var& u, const Var& v) {
    if (u->value.cols() != v->value.cols() || u->value.rows() != v->value.rows())
        throw std::invalid_argument("feature_vector: u and v must have equal shape");
    return ad::concat_cols({u, v, ad::abs_op(ad::sub(u, v)), ad::mul(u, v)});
}

// --- classifier --------------------------------------------------------------------

// Three stacked affine maps, no internal nonlinearity; callers softmax the
// logits where needed.
struct MlpClassifier {
    std::string name;
    std::size_t input_dim = 0, hidden_dim = 512, classes = 3;

    Linear l1() const { return {name + ".l1", input_dim, hidden_dim}; }
    Linear l2() const { return {name + ".l2", hidden_dim, hidden_dim}; }
    Linear l3() const { return {name + ".l3", hidden_dim, classes}; }

    void collect(std::vector<ParamSpec>& specs) const {
        l1().collect(specs);
        l2().collect(specs);
        l3().collect(specs);
    }

    Var logits(Workspace& ws, ParameterStore& store, const Var& features) const {
        return l3().apply(ws, store, l2().apply(ws, store, l1().apply(ws, store, features)));
    }
};

// --- attention ---------------------------------------------------------------------
// Token and context projections share a score space; a third projection maps
// token states to the summary space before the weighted sum.

struct AttentionSide {
    std::string name;
    std::size_t enc_dim = 0;    // encoder state width (2H)
    std::size_t query_dim = 0;  // decoder hidden size
    std::size_t proj_dim = 0;   // score space
    std::size_t value_dim = 0;  // summary width

    Linear proj1() const { return {name + ".proj1", enc_dim, proj_dim}; }
    Linear ctx() const { return {name + ".ctx", query_dim, proj_dim}; }
    Linear proj2() const { return {name + ".proj2", enc_dim, value_dim}; }

    void collect(std::vector<ParamSpec>& specs) const {
        proj1().collect(specs);
        ctx().collect(specs);
        proj2().collect(specs);
    }

    struct Prepared {
        std::vector<Var> keys;    // tanh proj1 per timestep, B×proj_dim
        std::vector<Var> values;  // tanh proj2 per timestep, B×value_dim
        std::vector<std::size_t> lengths;
    };

    Prepared prepare(Workspace& ws, ParameterStore& store, const EncoderOutput& enc) const {
        if (enc.states.empty()) throw std::invalid_argument(name + ": encoder states were not kept");
        Prepared p;
        p.lengths = enc.lengths;
        p.keys.reserve(enc.states.size());
        p.values.reserve(enc.states.size());
        for (const Var& s : enc.states) {
            p.keys.push_back(ad::tanh_op(proj1().apply(ws, store, s)));
            p.values.push_back(ad::tanh_op(proj2().apply(ws, store, s)));
        }
        return p;
    }

    struct Attended {
        Var summary;  // B×value_dim
        Var weights;  // B×T, zero on padded positions
    };

    Attended attend(Workspace& ws, ParameterStore& store, const Prepared& prep, const Var& query) const {
        Var q = ad::tanh_op(ctx().apply(ws, store, query));
        std::vector<Var> scores;
        scores.reserve(prep.keys.size());
        for (const Var& k : prep.keys) scores.push_back(ad::rowwise_sum(ad::mul(q, k)));
        Var weights = ad::masked_softmax_rows(ad::concat_cols(scores), prep.lengths);
        return {ad::weighted_step_sum(weights, prep.values), weights};
    }
};

// Two identical but parameter-disjoint modules over premise and hypothesis
// tokens; T_max bounds the number of attended positions.
struct DualAttention {
    std::string name;
    std::size_t enc_dim = 0, query_dim = 0, proj_dim = 0, value_dim = 0;
    std::size_t t_max = 84;

    AttentionSide premise_side() const { return {name + ".premise", enc_dim, query_dim, proj_dim, value_dim}; }
    AttentionSide hypothesis_side() const {
        return {name + ".hypothesis", enc_dim, query_dim, proj_dim, value_dim};
    }

    void collect(std::vector<ParamSpec>& specs) const {
        premise_side().collect(specs);
        hypothesis_side().collect(specs);
    }

    struct Prepared {
        AttentionSide::Prepared premise, hypothesis;
    };

    Prepared prepare(Workspace& ws, ParameterStore& store, const EncoderOutput& premise,
                     const EncoderOutput& hypothesis) const {
        if (premise.states.size() > t_max || hypothesis.states.size() > t_max)
            throw std::invalid_argument(name + ": sentence exceeds the attended-token bound " +
                                        std::to_string(t_max));
        return {premise_side().prepare(ws, store, premise), hypothesis_side().prepare(ws, store, hypothesis)};
    }

    struct Step {
        AttentionSide::Attended premise, hypothesis;
    };

    Step step(Workspace& ws, ParameterStore& store, const Prepared& prep, const Var& query) const {
        return {premise_side().attend(ws, store, prep.premise, query),
                hypothesis_side().attend(ws, store, prep.hypothesis, query)};
    }
};

// --- decoder cell -----------------------------------------------------------------
// One LSTM step on [word embedding ‖ context], with the context block of the
// input weight matrix kept separate so a per-batch-constant context costs one
// product per batch instead of one per step. Followed by an affine map to
// vocabulary logits.

struct DecoderCell {
    std::string name;
    std::size_t embed_dim = 0, ctx_dim = 0, hidden_dim = 0, vocab_size = 0;

    ParamSpec we_spec() const { return {name + ".w_emb", Shape{embed_dim, 4 * hidden_dim}, Init::uniform_fanin()}; }
    ParamSpec wc_spec() const { return {name + ".w_ctx", Shape{ctx_dim, 4 * hidden_dim}, Init::uniform_fanin()}; }
    ParamSpec wh_spec() const { return {name + ".w_h", Shape{hidden_dim, 4 * hidden_dim}, Init::uniform_fanin()}; }
    ParamSpec b_spec() const { return {name + ".b", Shape{1, 4 * hidden_dim}, Init::zeros()}; }
    Linear out() const { return {name + ".out", hidden_dim, vocab_size}; }

    void collect(std::vector<ParamSpec>& specs) const {
        specs.push_back(we_spec());
        specs.push_back(wc_spec());
        specs.push_back(wh_spec());
        specs.push_back(b_spec());
        out().collect(specs);
    }

    std::size_t input_width() const { return embed_dim + ctx_dim; }

    // context contribution to the gate pre-activations, reusable across steps
    Var context_gates(Workspace& ws, ParameterStore& store, const Var& context) const {
        if (context->value.cols() != ctx_dim)
            throw std::invalid_argument(name + ": context width " + std::to_string(context->value.cols()) +
                                        ", expected " + std::to_string(ctx_dim));
        return ad::matmul(context, ws.param(store, wc_spec()));
    }

    LstmState initial(std::size_t batch) const {
        Var z = ad::constant(Tensor(Shape{batch, hidden_dim}));
        return {z, z};
    }

    LstmState step(Workspace& ws, ParameterStore& store, const Var& embedded, const Var& ctx_gates,
                   const LstmState& prev) const {
        Var gates = ad::add(ad::add(ad::add(ad::matmul(embedded, ws.param(store, we_spec())), ctx_gates),
                                    ad::matmul(prev.h, ws.param(store, wh_spec()))),
                            ws.param(store, b_spec()));
        LstmCell cell{name, input_width(), hidden_dim};
        return cell.gate(ws, gates, prev);
    }

    Var logits(Workspace& ws, ParameterStore& store, const Var& h) const {
        return out().apply(ws, store, h);
    }
};

}  // namespace esnli::nn
