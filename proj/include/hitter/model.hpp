#pragma once

// The hierarchical two-block Transformer. A bottom "entity" encoder turns
// each ([CLS], entity, relation) token triple into one pooled pair vector;
// a top "context" encoder mixes the source pair vector with its neighbor
// pair vectors (no positional encodings, only slot-type embeddings) and is
// read out at the [GCLS] and source positions for scoring and the
// masked-source auxiliary loss. Scalar type is templated so tests can run
// the identical model in fp64.

#include <cstdint>
#include <string>
#include <vector>

#include "hitter/batcher.hpp"
#include "hitter/common.hpp"
#include "hitter/kg.hpp"
#include "hitter/rng.hpp"
#include "hitter/tensor.hpp"

namespace hitter {

struct ModelConfig {
  int64_t d_model = 320;
  int64_t ffn_dim = 1280;
  int64_t heads = 8;
  int64_t entity_layers = 3;
  int64_t context_layers = 6;
  double dropout = 0.1;
  double embedding_dropout = 0.6;
  double label_smoothing = 0.1;
  bool context_enabled = true;
  bool mep_aux_enabled = true;
  bool pre_norm = true;   // pre-norm encoder layers; false = post-norm
  bool gelu_ffn = true;   // false = relu

  void validate() const {
    if (d_model <= 0 || ffn_dim <= 0 || heads <= 0 || entity_layers < 0 || context_layers < 0)
      throw ConfigError("model: dimensions must be positive");
    if (d_model % heads != 0) throw ConfigError("model: d_model not divisible by heads");
    for (double p : {dropout, embedding_dropout, label_smoothing})
      if (p < 0.0 || p >= 1.0) throw ConfigError("model: probabilities must be in [0,1)");
  }
};

template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> tensor;
  bool decay_exempt = false;  // layer-norm parameters and biases
};

template <typename T>
class HitterModelT {
 public:
  // Rows of the special-token table.
  static constexpr int64_t kCls = 0;
  static constexpr int64_t kGcls = 1;
  static constexpr int64_t kMask = 2;

  struct Forward {
    TensorT<T> m_src;   // [B,d] pooled source pair vectors (bottom block)
    TensorT<T> t_gcls;  // [B,d] context output at [GCLS] (context mode only)
    TensorT<T> t_src;   // [B,d] context output at the source slot
    TensorT<T> logits;  // [B,|E|]
  };

  HitterModelT(const ModelConfig& cfg, int64_t num_entities, int64_t num_relations,
               uint64_t seed)
      : cfg_(cfg), num_entities_(num_entities), num_relations_(num_relations) {
    cfg_.validate();
    if (num_entities <= 0 || num_relations <= 0)
      throw ConfigError("model: empty entity or relation vocabulary");
    Rng rng(seed);
    const int64_t d = cfg_.d_model;
    entities_ = add_param("entities", {num_entities, d}, Init::Normal, rng);
    relations_ = add_param("relations", {num_relations, d}, Init::Normal, rng);
    specials_ = add_param("specials", {3, d}, Init::Normal, rng);
    bottom_types_ = add_param("bottom_types", {3, d}, Init::Normal, rng);
    top_types_ = add_param("top_types", {3, d}, Init::Normal, rng);
    bottom_ = make_block("bottom", cfg_.entity_layers, rng);
    top_ = make_block("top", cfg_.context_layers, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int64_t num_entities() const { return num_entities_; }
  int64_t num_relations() const { return num_relations_; }
  EntityId mask_token() const { return static_cast<EntityId>(num_entities_); }

  std::vector<ParamT<T>>& params() { return params_; }
  const std::vector<ParamT<T>>& params() const { return params_; }

  ParamT<T>* find_param(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  TensorT<T>& entity_table() { return entities_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // --- input assembly -------------------------------------------------------

  // Token embeddings for P pairs as one [3P,d] tensor laid out
  // (cls, entity, relation) per pair, slot-type embeddings added, embedding
  // dropout applied in train mode. entity_slot id -1 selects the masked
  // token; other ids index the entity table.
  TensorT<T> embed_pair_tokens(TapeT<T>* tape, const std::vector<EntityId>& entity_slot,
                               const std::vector<RelationId>& relation_slot, Mode mode,
                               Rng& rng) {
    if (entity_slot.size() != relation_slot.size())
      throw ShapeError("embed_pair_tokens: slot lists differ in length");
    const int64_t p = static_cast<int64_t>(entity_slot.size());
    const int64_t d = cfg_.d_model;

    bool any_masked = false;
    std::vector<int64_t> ent_ids(static_cast<size_t>(p));
    for (int64_t i = 0; i < p; ++i) {
      const EntityId e = entity_slot[static_cast<size_t>(i)];
      if (e == -1) {
        any_masked = true;
        ent_ids[static_cast<size_t>(i)] = 0;  // placeholder, blended away below
      } else {
        if (e < 0 || e >= num_entities_)
          throw IndexError("embed_pair_tokens: entity id " + std::to_string(e) + " out of range");
        ent_ids[static_cast<size_t>(i)] = e;
      }
    }
    TensorT<T> ent_rows = gather_rows(tape, entities_, std::move(ent_ids));
    if (any_masked) {
      // blend gathered entity rows with the masked-token row by 0/1 masks
      TensorT<T> keep = TensorT<T>::zeros({p, d});
      TensorT<T> drop = TensorT<T>::zeros({p, d});
      for (int64_t i = 0; i < p; ++i) {
        const bool masked = entity_slot[static_cast<size_t>(i)] == -1;
        for (int64_t j = 0; j < d; ++j) {
          keep.data()[i * d + j] = masked ? T(0) : T(1);
          drop.data()[i * d + j] = masked ? T(1) : T(0);
        }
      }
      TensorT<T> mask_rows =
          gather_rows(tape, specials_, std::vector<int64_t>(static_cast<size_t>(p), kMask));
      ent_rows = add(tape, mul(tape, ent_rows, keep), mul(tape, mask_rows, drop));
    }

    std::vector<int64_t> rel_ids(static_cast<size_t>(p));
    for (int64_t i = 0; i < p; ++i) {
      const RelationId r = relation_slot[static_cast<size_t>(i)];
      if (r < 0 || r >= num_relations_)
        throw IndexError("embed_pair_tokens: relation id " + std::to_string(r) + " out of range");
      rel_ids[static_cast<size_t>(i)] = r;
    }
    TensorT<T> rel_rows = gather_rows(tape, relations_, std::move(rel_ids));
    TensorT<T> cls_rows =
        gather_rows(tape, specials_, std::vector<int64_t>(static_cast<size_t>(p), kCls));

    // interleave the three [P,d] blocks into (cls, entity, relation) order
    TensorT<T> stacked = concat_rows(tape, {cls_rows, ent_rows, rel_rows});
    std::vector<int64_t> interleave(static_cast<size_t>(3 * p));
    std::vector<int64_t> type_ids(static_cast<size_t>(3 * p));
    for (int64_t i = 0; i < p; ++i) {
      interleave[static_cast<size_t>(3 * i)] = i;
      interleave[static_cast<size_t>(3 * i + 1)] = p + i;
      interleave[static_cast<size_t>(3 * i + 2)] = 2 * p + i;
      type_ids[static_cast<size_t>(3 * i)] = 0;
      type_ids[static_cast<size_t>(3 * i + 1)] = 1;
      type_ids[static_cast<size_t>(3 * i + 2)] = 2;
    }
    TensorT<T> x = gather_rows(tape, stacked, std::move(interleave));
    x = add(tape, x, gather_rows(tape, bottom_types_, std::move(type_ids)));
    return dropout_mask(tape, x, cfg_.embedding_dropout, mode, rng);
  }

  // Full bottom block: embed P pairs, run the entity encoder over each
  // 3-token sequence, return the [CLS]-position vector per pair as [P,d].
  TensorT<T> encode_pairs(TapeT<T>* tape, const std::vector<EntityId>& entity_slot,
                          const std::vector<RelationId>& relation_slot, Mode mode, Rng& rng) {
    const int64_t p = static_cast<int64_t>(entity_slot.size());
    TensorT<T> x = embed_pair_tokens(tape, entity_slot, relation_slot, mode, rng);
    const SeqLayout layout = SeqLayout::uniform(p, 3);
    x = encoder_forward(tape, x, layout, bottom_, mode, rng);
    std::vector<int64_t> cls_positions(static_cast<size_t>(p));
    for (int64_t i = 0; i < p; ++i) cls_positions[static_cast<size_t>(i)] = 3 * i;
    return gather_rows(tape, x, std::move(cls_positions));
  }

  // --- full pipeline --------------------------------------------------------

  Forward forward(TapeT<T>* tape, const Batch& batch, Mode mode, Rng& rng) {
    if (batch.mask_token != mask_token())
      throw ConfigError("forward: batch mask token " + std::to_string(batch.mask_token) +
                        " does not match model's " + std::to_string(mask_token()));
    const int64_t b = batch.batch_size;
    if (b <= 0) throw ShapeError("forward: empty batch");

    // pair list: B source pairs first, then valid neighbor pairs per example
    std::vector<EntityId> entity_slot;
    std::vector<RelationId> relation_slot;
    std::vector<int64_t> neighbor_count(static_cast<size_t>(b), 0);
    for (int64_t i = 0; i < b; ++i) {
      const EntityId src = batch.src_input[static_cast<size_t>(i)];
      entity_slot.push_back(src == batch.mask_token ? -1 : src);
      relation_slot.push_back(batch.predicate[static_cast<size_t>(i)]);
    }
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t j = 0; j < batch.cap; ++j) {
        const size_t slot = static_cast<size_t>(i * batch.cap + j);
        if (!batch.nbr_valid[slot]) continue;
        entity_slot.push_back(batch.nbr_entity[slot]);
        relation_slot.push_back(batch.nbr_relation[slot]);
        ++neighbor_count[static_cast<size_t>(i)];
      }
    }
    TensorT<T> pooled = encode_pairs(tape, entity_slot, relation_slot, mode, rng);

    Forward out;
    std::vector<int64_t> src_rows(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) src_rows[static_cast<size_t>(i)] = i;
    out.m_src = gather_rows(tape, pooled, std::move(src_rows));

    if (!cfg_.context_enabled) {
      out.logits = matmul_nt(tape, out.m_src, entities_);
      return out;
    }

    // top sequence per example: ([GCLS], source pair, neighbor pairs...)
    TensorT<T> gcls_rows =
        gather_rows(tape, specials_, std::vector<int64_t>(static_cast<size_t>(b), kGcls));
    TensorT<T> stacked = concat_rows(tape, {gcls_rows, pooled});  // [B + B + N, d]
    SeqLayout layout;
    layout.offsets.assign(1, 0);
    std::vector<int64_t> order;
    std::vector<int64_t> type_ids;
    int64_t neighbor_base = 2 * b;  // neighbors start after gcls block + source pairs
    for (int64_t i = 0; i < b; ++i) {
      order.push_back(i);           // [GCLS] row for example i
      type_ids.push_back(0);
      order.push_back(b + i);       // source pair vector
      type_ids.push_back(1);
      for (int64_t j = 0; j < neighbor_count[static_cast<size_t>(i)]; ++j) {
        order.push_back(neighbor_base + j);
        type_ids.push_back(2);
      }
      neighbor_base += neighbor_count[static_cast<size_t>(i)];
      layout.offsets.push_back(static_cast<int64_t>(order.size()));
    }
    TensorT<T> x = gather_rows(tape, stacked, std::move(order));
    x = add(tape, x, gather_rows(tape, top_types_, std::move(type_ids)));
    x = dropout_mask(tape, x, cfg_.dropout, mode, rng);
    x = encoder_forward(tape, x, layout, top_, mode, rng);

    std::vector<int64_t> gcls_pos(static_cast<size_t>(b)), src_pos(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      gcls_pos[static_cast<size_t>(i)] = layout.offsets[static_cast<size_t>(i)];
      src_pos[static_cast<size_t>(i)] = layout.offsets[static_cast<size_t>(i)] + 1;
    }
    out.t_gcls = gather_rows(tape, x, std::move(gcls_pos));
    out.t_src = gather_rows(tape, x, std::move(src_pos));
    out.logits = matmul_nt(tape, out.t_gcls, entities_);
    return out;
  }

  // Context-free baseline: bottom block only, scored from M_src.
  Forward forward_no_context(TapeT<T>* tape, const Batch& batch, Mode mode, Rng& rng) {
    if (cfg_.context_enabled)
      throw ConfigError("forward_no_context: model is configured with context enabled");
    return forward(tape, batch, mode, rng);
  }

  // --- losses ---------------------------------------------------------------

  TensorT<T> lp_loss(TapeT<T>* tape, const Forward& f, const Batch& batch) {
    std::vector<int64_t> targets(batch.target.begin(), batch.target.end());
    return cross_entropy_smoothed(tape, f.logits, targets, cfg_.label_smoothing);
  }

  // Masked-source recovery loss, averaged over the selected examples only;
  // exactly zero when disabled or when nothing was selected.
  TensorT<T> mep_loss(TapeT<T>* tape, const Forward& f, const Batch& batch) {
    if (!cfg_.mep_aux_enabled || !cfg_.context_enabled) return TensorT<T>::scalar(T(0));
    std::vector<int64_t> selected_rows;
    std::vector<int64_t> labels;
    for (int64_t i = 0; i < batch.batch_size; ++i) {
      if (batch.perturb_code[static_cast<size_t>(i)] ==
          static_cast<uint8_t>(Perturbation::Kind::NotSelected))
        continue;
      selected_rows.push_back(i);
      labels.push_back(batch.src_original[static_cast<size_t>(i)]);
    }
    if (selected_rows.empty()) return TensorT<T>::scalar(T(0));
    TensorT<T> sel = gather_rows(tape, f.t_src, std::move(selected_rows));
    TensorT<T> logits = matmul_nt(tape, sel, entities_);
    return cross_entropy_smoothed(tape, logits, labels, cfg_.label_smoothing);
  }

  // L = L_LP + L_MEP with unit weights.
  TensorT<T> total_loss(TapeT<T>* tape, const Forward& f, const Batch& batch) {
    return add(tape, lp_loss(tape, f, batch), mep_loss(tape, f, batch));
  }

 private:
  struct AttnParams {
    TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct LayerParams {
    TensorT<T> ln1_g, ln1_b, ln2_g, ln2_b;
    AttnParams attn;
    TensorT<T> w1, b1, w2, b2;
  };
  struct BlockParams {
    std::vector<LayerParams> layers;
    TensorT<T> final_g, final_b;
  };

  enum class Init { Normal, Zero, One };

  TensorT<T> add_param(const std::string& name, Shape shape, Init init, Rng& rng) {
    TensorT<T> t = TensorT<T>::zeros(std::move(shape), true);
    if (init == Init::Normal)
      for (T& v : t.values()) v = static_cast<T>(rng.normal(0.0, 0.02));
    else if (init == Init::One)
      std::fill(t.values().begin(), t.values().end(), T(1));
    const bool exempt = init != Init::Normal;  // biases and layer-norm params
    params_.push_back({name, t, exempt});
    return t;
  }

  BlockParams make_block(const std::string& prefix, int64_t layers, Rng& rng) {
    const int64_t d = cfg_.d_model, f = cfg_.ffn_dim;
    BlockParams blk;
    for (int64_t i = 0; i < layers; ++i) {
      const std::string lp = prefix + "." + std::to_string(i) + ".";
      LayerParams layer;
      layer.ln1_g = add_param(lp + "ln1.gain", {d}, Init::One, rng);
      layer.ln1_b = add_param(lp + "ln1.bias", {d}, Init::Zero, rng);
      layer.attn.wq = add_param(lp + "attn.wq", {d, d}, Init::Normal, rng);
      layer.attn.bq = add_param(lp + "attn.bq", {d}, Init::Zero, rng);
      layer.attn.wk = add_param(lp + "attn.wk", {d, d}, Init::Normal, rng);
      layer.attn.bk = add_param(lp + "attn.bk", {d}, Init::Zero, rng);
      layer.attn.wv = add_param(lp + "attn.wv", {d, d}, Init::Normal, rng);
      layer.attn.bv = add_param(lp + "attn.bv", {d}, Init::Zero, rng);
      layer.attn.wo = add_param(lp + "attn.wo", {d, d}, Init::Normal, rng);
      layer.attn.bo = add_param(lp + "attn.bo", {d}, Init::Zero, rng);
      layer.ln2_g = add_param(lp + "ln2.gain", {d}, Init::One, rng);
      layer.ln2_b = add_param(lp + "ln2.bias", {d}, Init::Zero, rng);
      layer.w1 = add_param(lp + "ffn.w1", {d, f}, Init::Normal, rng);
      layer.b1 = add_param(lp + "ffn.b1", {f}, Init::Zero, rng);
      layer.w2 = add_param(lp + "ffn.w2", {f, d}, Init::Normal, rng);
      layer.b2 = add_param(lp + "ffn.b2", {d}, Init::Zero, rng);
      blk.layers.push_back(std::move(layer));
    }
    blk.final_g = add_param(prefix + ".final_ln.gain", {d}, Init::One, rng);
    blk.final_b = add_param(prefix + ".final_ln.bias", {d}, Init::Zero, rng);
    return blk;
  }

  TensorT<T> linear(TapeT<T>* tape, TensorT<T> x, TensorT<T> w, TensorT<T> b) {
    return add_bias(tape, matmul(tape, x, w), b);
  }

  TensorT<T> attention(TapeT<T>* tape, TensorT<T> x, const SeqLayout& layout,
                       const AttnParams& p, Mode mode, Rng& rng) {
    TensorT<T> q = linear(tape, x, p.wq, p.bq);
    TensorT<T> k = linear(tape, x, p.wk, p.bk);
    TensorT<T> v = linear(tape, x, p.wv, p.bv);
    TensorT<T> ctx =
        self_attention(tape, q, k, v, layout, cfg_.heads, cfg_.dropout, mode, rng);
    return linear(tape, ctx, p.wo, p.bo);
  }

  TensorT<T> ffn(TapeT<T>* tape, TensorT<T> x, const LayerParams& p, Mode mode, Rng& rng) {
    TensorT<T> h = linear(tape, x, p.w1, p.b1);
    h = cfg_.gelu_ffn ? gelu(tape, h) : relu(tape, h);
    (void)mode;
    (void)rng;
    return linear(tape, h, p.w2, p.b2);
  }

  TensorT<T> encoder_forward(TapeT<T>* tape, TensorT<T> x, const SeqLayout& layout,
                             const BlockParams& blk, Mode mode, Rng& rng) {
    constexpr T ln_eps = T(1e-5);
    for (const LayerParams& layer : blk.layers) {
      if (cfg_.pre_norm) {
        TensorT<T> h = layer_norm(tape, x, layer.ln1_g, layer.ln1_b, ln_eps);
        h = attention(tape, h, layout, layer.attn, mode, rng);
        h = dropout_mask(tape, h, cfg_.dropout, mode, rng);
        x = add(tape, x, h);
        TensorT<T> h2 = layer_norm(tape, x, layer.ln2_g, layer.ln2_b, ln_eps);
        h2 = ffn(tape, h2, layer, mode, rng);
        h2 = dropout_mask(tape, h2, cfg_.dropout, mode, rng);
        x = add(tape, x, h2);
      } else {
        TensorT<T> h = attention(tape, x, layout, layer.attn, mode, rng);
        h = dropout_mask(tape, h, cfg_.dropout, mode, rng);
        x = layer_norm(tape, add(tape, x, h), layer.ln1_g, layer.ln1_b, ln_eps);
        TensorT<T> h2 = ffn(tape, x, layer, mode, rng);
        h2 = dropout_mask(tape, h2, cfg_.dropout, mode, rng);
        x = layer_norm(tape, add(tape, x, h2), layer.ln2_g, layer.ln2_b, ln_eps);
      }
    }
    if (cfg_.pre_norm) x = layer_norm(tape, x, blk.final_g, blk.final_b, ln_eps);
    return x;
  }

  ModelConfig cfg_;
  int64_t num_entities_;
  int64_t num_relations_;
  std::vector<ParamT<T>> params_;
  TensorT<T> entities_, relations_, specials_, bottom_types_, top_types_;
  BlockParams bottom_, top_;
};

using HitterModel = HitterModelT<float>;

}  // namespace hitter
