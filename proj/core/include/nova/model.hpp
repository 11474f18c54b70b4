#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nova/attention.hpp"
#include "nova/blocks.hpp"
#include "nova/config.hpp"
#include "nova/diffusion_head.hpp"
#include "nova/embeddings.hpp"
#include "nova/params.hpp"
#include "nova/scale_shift.hpp"
#include "nova/schedules.hpp"
#include "nova/tensor.hpp"

namespace nova {

// One training clip in token space: F frames of [M x c_tok] tokens plus its
// conditioning ids.
template <typename T>
struct TokenClip {
  std::vector<Tensor<T>> frames;
  std::size_t prompt_id = 0;
  std::size_t motion_bucket = 0;
};

struct GenerationConfig {
  std::size_t frames = 5;
  std::size_t set_steps = 16;     // K per frame (or per joint decode)
  std::size_t infer_steps = 100;  // sampler steps
  double cfg_scale = 7.0;
  std::uint64_t seed = 0;
  bool joint = false;  // temporal_mode: false = causal, true = joint
  std::size_t prompt_id = 0;
  std::size_t motion_bucket = 0;
  double token_clip = 1.0;  // denoised-sample clamp; tokens are [-1, 1]
};

struct GenTiming {
  double temporal_s = 0.0;
  double spatial_s = 0.0;
  double total() const { return temporal_s + spatial_s; }
};

// Frame-by-frame video generator over continuous tokens: a block-causal
// temporal stack conditioned on prompt/motion/begin-of-video embeddings,
// a masked spatial encoder-decoder assisted by scale-shift indicator
// features, and a per-token denoising head.
template <typename T>
struct Nova {
  NovaConfig cfg;
  NoiseSchedule sched;

  Tensor<T> prompt_table;  // [V x d], row 0 = null prompt
  Tensor<T> motion_table;  // [(Q+1) x d], row Q = null motion
  Tensor<T> bov;           // [M x d]
  Linear<T> temporal_in;   // c_tok -> d
  Linear<T> spatial_in;    // c_tok -> d
  Tensor<T> mask_token;    // [1 x d]
  TransformerStack<T> temporal, spatial_enc, spatial_dec;
  ScaleShift<T> scale_shift;
  DenoiseMlp<T> head;
  ParamSet<T> params;

  Tensor<T> pos2d;  // fixed [M x d] grid embedding

  static Nova build(const NovaConfig& cfg, std::uint64_t init_seed) {
    cfg.validate();
    Nova m;
    m.cfg = cfg;
    m.sched = cfg.noise_schedule == "linear"
                  ? NoiseSchedule::linear(cfg.train_T)
                  : NoiseSchedule::cosine(cfg.train_T);

    Rng rng(init_seed);
    std::size_t d = cfg.dim, M = cfg.tokens_per_frame(),
                c = cfg.token_channels();
    NormPlacement place = parse_norm_placement(cfg.norm_placement);
    T eps = static_cast<T>(cfg.ln_eps);

    m.prompt_table = Tensor<T>::randn({cfg.prompt_vocab, d}, rng, T(0.02), true);
    m.motion_table =
        Tensor<T>::randn({cfg.motion_buckets + 1, d}, rng, T(0.02), true);
    m.bov = Tensor<T>::randn({M, d}, rng, T(0.02), true);
    m.temporal_in = Linear<T>::init(c, d, rng);
    m.spatial_in = Linear<T>::init(c, d, rng);
    m.mask_token = Tensor<T>::randn({1, d}, rng, T(0.02), true);
    m.temporal = TransformerStack<T>::init(cfg.temporal_depth, d, cfg.heads,
                                           place, eps, rng);
    m.spatial_enc = TransformerStack<T>::init(cfg.spatial_enc_depth, d,
                                              cfg.heads, place, eps, rng);
    m.spatial_dec = TransformerStack<T>::init(cfg.spatial_dec_depth, d,
                                              cfg.heads, place, eps, rng);
    m.scale_shift = ScaleShift<T>::init(d, cfg.scale_shift_rank, eps, rng);
    m.head = DenoiseMlp<T>::init(c, d, cfg.head_width, cfg.head_blocks,
                                 cfg.train_T, rng);

    m.params.add("prompt_table", m.prompt_table);
    m.params.add("motion_table", m.motion_table);
    m.params.add("bov", m.bov);
    m.temporal_in.register_params(m.params, "temporal_in");
    m.spatial_in.register_params(m.params, "spatial_in");
    m.params.add("mask_token", m.mask_token);
    m.temporal.register_params(m.params, "temporal");
    m.spatial_enc.register_params(m.params, "spatial_enc");
    m.spatial_dec.register_params(m.params, "spatial_dec");
    m.scale_shift.register_params(m.params, "scale_shift");
    m.head.register_params(m.params, "head");

    m.pos2d = sincos_2d<T>(cfg.grid_h(), cfg.grid_w(), d);
    return m;
  }

  std::size_t tokens_per_frame() const { return cfg.tokens_per_frame(); }

  Tensor<T> time_row(std::size_t index) const {
    return sincos_1d<T>(index, cfg.dim);
  }

  // --- temporal pathway ---------------------------------------------------

  std::size_t null_motion_bucket(std::size_t bucket) const {
    return cfg.cfg_drop_motion ? cfg.motion_buckets : bucket;
  }

  Tensor<T> prefix_embed(Tape<T>* tape, std::size_t prompt_id,
                         std::size_t motion_bucket) const {
    if (prompt_id >= cfg.prompt_vocab)
      throw ContractError("prompt id out of vocabulary");
    if (motion_bucket > cfg.motion_buckets)
      throw ContractError("motion bucket out of range");
    Tensor<T> p = gather_rows(tape, prompt_table, {prompt_id});
    Tensor<T> m = gather_rows(tape, motion_table, {motion_bucket});
    return concat_rows(tape, {p, m});
  }

  Tensor<T> bov_block(Tape<T>* tape) const {
    return add_rowwise(tape, add(tape, bov, pos2d), time_row(0));
  }

  Tensor<T> frame_block(Tape<T>* tape, const Tensor<T>& frame_tokens,
                        std::size_t time_index) const {
    Tensor<T> e = temporal_in.forward(tape, frame_tokens);
    return add_rowwise(tape, add(tape, e, pos2d), time_row(time_index));
  }

  BlockLayout layout_for(std::size_t context_frames) const {
    BlockLayout layout;
    layout.prefix_len = 2;
    layout.block_sizes.assign(1 + context_frames, tokens_per_frame());
    return layout;
  }

  struct TemporalOut {
    std::vector<Tensor<T>> h;  // h[f-1] targets frame f, f = 1..ctx+1
    Tensor<T> anchor;          // output rows of the begin-of-video block
  };

  // Full teacher-forced pass over [prompt, motion, BOV, S_1..S_ctx].
  TemporalOut temporal_forward(Tape<T>* tape, std::size_t prompt_id,
                               std::size_t motion_bucket,
                               const std::vector<Tensor<T>>& context) const {
    std::size_t M = tokens_per_frame();
    std::vector<Tensor<T>> parts;
    parts.push_back(prefix_embed(tape, prompt_id, motion_bucket));
    parts.push_back(bov_block(tape));
    for (std::size_t f = 0; f < context.size(); ++f)
      parts.push_back(frame_block(tape, context[f], f + 1));
    Tensor<T> seq = concat_rows(tape, parts);

    BlockLayout layout = layout_for(context.size());
    BoolMask mask = build_block_causal_mask(layout);
    Tensor<T> u = temporal.forward(tape, seq, mask);

    TemporalOut out;
    for (std::size_t b = 0; b <= context.size(); ++b)
      out.h.push_back(slice_rows(tape, u, 2 + b * M, M));
    out.anchor = out.h[0];
    return out;
  }

  Tensor<T> indicator_for(Tape<T>* tape, const Tensor<T>& h_f,
                          const Tensor<T>& anchor, std::size_t frame) const {
    auto [gamma, beta] = scale_shift.gamma_beta(tape, h_f);
    return scale_shift.apply(tape, anchor, gamma, beta, frame);
  }

  // --- spatial pathway ----------------------------------------------------

  // Masked set decoding pass for one frame. The encoder runs over all M
  // positions: indicator features everywhere, visible token embeddings
  // added at unmasked positions. The decoder swaps encoder outputs for a
  // learned mask token at masked positions, keeping indicator and position
  // signals at every row, and returns one output row per position.
  Tensor<T> spatial_forward(Tape<T>* tape, const Tensor<T>& indicator,
                            const Tensor<T>& frame_tokens,
                            const std::vector<std::uint8_t>& visible,
                            std::size_t frame_time) const {
    std::size_t M = tokens_per_frame(), d = cfg.dim;
    if (visible.size() != M)
      throw ContractError("spatial_forward: visibility mask size mismatch");

    Tensor<T> vis_b = Tensor<T>::zeros({M, d});
    Tensor<T> inv_col = Tensor<T>::zeros({M, 1});
    for (std::size_t i = 0; i < M; ++i) {
      if (visible[i])
        std::fill(vis_b.data() + i * d, vis_b.data() + (i + 1) * d, T(1));
      else
        inv_col.data()[i] = T(1);
    }

    Tensor<T> base = add_rowwise(tape, add(tape, indicator, pos2d),
                                 time_row(frame_time));
    Tensor<T> proj = mul(tape, spatial_in.forward(tape, frame_tokens), vis_b);
    Tensor<T> enc_in = add(tape, base, proj);
    BoolMask open = BoolMask::all_true(M, M);
    Tensor<T> enc_out = spatial_enc.forward(tape, enc_in, open);

    Tensor<T> kept = mul(tape, enc_out, vis_b);
    Tensor<T> mask_rows = matmul(tape, inv_col, mask_token);
    Tensor<T> dec_in = add(tape, add(tape, kept, mask_rows), base);
    return spatial_dec.forward(tape, dec_in, open);
  }

  // Joint (no temporal AR) decoding pass over all frames at once; sequence
  // is F blocks of M positions with per-frame time embeddings.
  Tensor<T> spatial_forward_joint(const Tensor<T>& indicator,
                                  const std::vector<Tensor<T>>& frame_tokens,
                                  const std::vector<std::uint8_t>& visible)
      const {
    std::size_t M = tokens_per_frame(), d = cfg.dim;
    std::size_t F = frame_tokens.size();
    std::size_t L = F * M;
    if (visible.size() != L)
      throw ContractError("spatial_forward_joint: visibility size mismatch");

    Tensor<T> base = Tensor<T>::zeros({L, d});
    for (std::size_t f = 0; f < F; ++f) {
      Tensor<T> t = time_row(f + 1);
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < d; ++j)
          base.data()[((f * M + i) * d) + j] =
              indicator.data()[i * d + j] + pos2d.data()[i * d + j] +
              t.data()[j];
    }

    Tensor<T> vis_b = Tensor<T>::zeros({L, d});
    Tensor<T> inv_col = Tensor<T>::zeros({L, 1});
    for (std::size_t i = 0; i < L; ++i) {
      if (visible[i])
        std::fill(vis_b.data() + i * d, vis_b.data() + (i + 1) * d, T(1));
      else
        inv_col.data()[i] = T(1);
    }

    Tensor<T> all_tokens = concat_rows<T>(nullptr, frame_tokens);
    Tensor<T> proj =
        mul<T>(nullptr, spatial_in.forward(nullptr, all_tokens), vis_b);
    Tensor<T> enc_in = add<T>(nullptr, base, proj);
    BoolMask open = BoolMask::all_true(L, L);
    Tensor<T> enc_out = spatial_enc.forward(nullptr, enc_in, open);

    Tensor<T> kept = mul<T>(nullptr, enc_out, vis_b);
    Tensor<T> mask_rows = matmul<T>(nullptr, inv_col, mask_token);
    Tensor<T> dec_in = add<T>(nullptr, add<T>(nullptr, kept, mask_rows), base);
    return spatial_dec.forward(nullptr, dec_in, open);
  }

  // --- training -----------------------------------------------------------

  // Per-clip loss: teacher-forced temporal pass, per-frame random masking,
  // indicator features through the scale-shift layer, denoising loss over
  // every masked token. The prompt id is dropped to null with probability
  // `prompt_dropout` so guidance has an unconditional pathway to train on.
  Tensor<T> train_loss(Tape<T>* tape, const TokenClip<T>& clip, Rng& rng,
                       double prompt_dropout = 0.1) const {
    std::size_t F = clip.frames.size();
    std::size_t M = tokens_per_frame();
    if (F == 0) throw ContractError("train_loss: empty clip");

    std::size_t pid = clip.prompt_id;
    if (rng.uniform() < prompt_dropout) pid = kNullPromptIdOf();

    std::vector<std::vector<std::size_t>> masked(F);
    for (std::size_t f = 0; f < F; ++f) masked[f] = sample_train_mask(M, rng);

    std::vector<Tensor<T>> context(clip.frames.begin(),
                                   clip.frames.end() - 1);
    TemporalOut to = temporal_forward(tape, pid, clip.motion_bucket, context);

    std::vector<Tensor<T>> zs, x0s;
    for (std::size_t f = 0; f < F; ++f) {
      Tensor<T> ind = indicator_for(tape, to.h[f], to.anchor, f + 1);
      std::vector<std::uint8_t> visible(M, 1);
      for (std::size_t i : masked[f]) visible[i] = 0;
      Tensor<T> dec =
          spatial_forward(tape, ind, clip.frames[f], visible, f + 1);
      zs.push_back(gather_rows(tape, dec, masked[f]));
      x0s.push_back(gather_rows<T>(nullptr, clip.frames[f], masked[f]));
    }
    Tensor<T> z_all = concat_rows(tape, zs);
    Tensor<T> x0_all = concat_rows<T>(nullptr, x0s);
    return diffusion_loss(tape, head, x0_all, z_all, rng, sched, 4);
  }

  static constexpr std::size_t kNullPromptIdOf() { return 0; }

  // --- generation ---------------------------------------------------------

  struct Pathway {
    std::vector<KvCache<T>> caches;
    Tensor<T> anchor;
    Tensor<T> h;  // output rows of the most recent block
    std::size_t prompt_id = 0;
    std::size_t motion_bucket = 0;
    std::vector<Tensor<T>> context;  // generated/prefilled frames (tokens)
  };

  Pathway start_pathway(std::size_t prompt_id, std::size_t motion_bucket,
                        bool use_cache) const {
    Pathway p;
    p.prompt_id = prompt_id;
    p.motion_bucket = motion_bucket;
    if (use_cache) {
      p.caches.assign(temporal.blocks.size(), KvCache<T>());
      temporal.forward_cached(prefix_embed(nullptr, prompt_id, motion_bucket),
                              p.caches);
      p.h = temporal.forward_cached(bov_block(nullptr), p.caches);
      p.anchor = p.h;
    } else {
      TemporalOut to = temporal_forward(nullptr, prompt_id, motion_bucket, {});
      p.h = to.h.back();
      p.anchor = to.anchor;
    }
    return p;
  }

  void pathway_append(Pathway& p, const Tensor<T>& frame_tokens,
                      bool use_cache) const {
    p.context.push_back(frame_tokens);
    if (use_cache) {
      p.h = temporal.forward_cached(
          frame_block(nullptr, frame_tokens, p.context.size()), p.caches);
    } else {
      TemporalOut to =
          temporal_forward(nullptr, p.prompt_id, p.motion_bucket, p.context);
      p.h = to.h.back();
      p.anchor = to.anchor;
    }
  }

  // Set-by-set decoding of one frame given conditional and null indicator
  // features. Tokens revealed at earlier steps are frozen.
  Tensor<T> generate_frame(const Tensor<T>& ind_cond, const Tensor<T>& ind_null,
                           std::size_t frame_time, const GenerationConfig& gc,
                           Rng& order_rng, Rng& noise_rng) const {
    std::size_t M = tokens_per_frame(), c = cfg.token_channels();
    std::size_t K = std::min(gc.set_steps, M);
    MaskPlan plan = make_mask_plan(M, K, order_rng);
    SubSchedule ss = SubSchedule::make(sched, gc.infer_steps);

    Tensor<T> tokens = Tensor<T>::zeros({M, c});
    std::vector<std::uint8_t> visible(M, 0);
    std::size_t revealed = 0;
    for (std::size_t k = 0; k < K; ++k) {
      Tensor<T> dec_c =
          spatial_forward(nullptr, ind_cond, tokens, visible, frame_time);
      Tensor<T> dec_n =
          gc.cfg_scale == 1.0
              ? dec_c
              : spatial_forward(nullptr, ind_null, tokens, visible, frame_time);

      std::vector<std::size_t> idx(plan.order.begin() + revealed,
                                   plan.order.begin() + revealed +
                                       plan.reveal_counts[k]);
      Tensor<T> z_c = gather_rows<T>(nullptr, dec_c, idx);
      Tensor<T> z_n = gather_rows<T>(nullptr, dec_n, idx);
      Tensor<T> x = sample_tokens(head, z_c, z_n, ss, gc.cfg_scale, noise_rng,
                                  gc.token_clip);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(x.data() + i * c, x.data() + (i + 1) * c,
                  tokens.data() + idx[i] * c);
        visible[idx[i]] = 1;
      }
      revealed += idx.size();
    }
    return tokens;
  }

  // Causal frame-by-frame generation; `use_cache=false` recomputes the full
  // temporal pass per frame and must agree with the cached path.
  std::vector<Tensor<T>> generate_tokens(const GenerationConfig& gc,
                                         bool use_cache = true,
                                         GenTiming* timing = nullptr) const {
    if (gc.joint) return generate_tokens_joint(gc, timing);
    Rng master(gc.seed);
    Rng order_rng = master.fork(1);
    Rng noise_rng = master.fork(2);

    auto clock = [] { return std::chrono::steady_clock::now(); };
    auto secs = [](auto a, auto b) {
      return std::chrono::duration<double>(b - a).count();
    };

    auto t0 = clock();
    Pathway cond = start_pathway(gc.prompt_id, gc.motion_bucket, use_cache);
    Pathway nul = start_pathway(kNullPromptIdOf(),
                                null_motion_bucket(gc.motion_bucket), use_cache);
    if (timing) timing->temporal_s += secs(t0, clock());

    std::vector<Tensor<T>> frames;
    for (std::size_t f = 1; f <= gc.frames; ++f) {
      Tensor<T> ind_c = indicator_for(nullptr, cond.h, cond.anchor, f);
      Tensor<T> ind_n = indicator_for(nullptr, nul.h, nul.anchor, f);

      auto t1 = clock();
      Tensor<T> tokens =
          generate_frame(ind_c, ind_n, f, gc, order_rng, noise_rng);
      if (timing) timing->spatial_s += secs(t1, clock());
      frames.push_back(tokens);

      if (f < gc.frames) {
        auto t2 = clock();
        pathway_append(cond, tokens, use_cache);
        pathway_append(nul, tokens, use_cache);
        if (timing) timing->temporal_s += secs(t2, clock());
      }
    }
    return frames;
  }

  // Joint masked decoding over all F*M tokens at once (no frame-by-frame
  // prediction, no kv-cache); the indicator is the normalized anchor from a
  // prefix-only temporal pass, shared by all frames.
  std::vector<Tensor<T>> generate_tokens_joint(const GenerationConfig& gc,
                                               GenTiming* timing = nullptr)
      const {
    Rng master(gc.seed);
    Rng order_rng = master.fork(1);
    Rng noise_rng = master.fork(2);

    auto clock = [] { return std::chrono::steady_clock::now(); };
    auto secs = [](auto a, auto b) {
      return std::chrono::duration<double>(b - a).count();
    };

    std::size_t M = tokens_per_frame(), c = cfg.token_channels();
    std::size_t F = gc.frames, L = F * M;

    auto t0 = clock();
    TemporalOut cond =
        temporal_forward(nullptr, gc.prompt_id, gc.motion_bucket, {});
    TemporalOut nul = temporal_forward(nullptr, kNullPromptIdOf(),
                                       null_motion_bucket(gc.motion_bucket), {});
    Tensor<T> ind_c =
        normalize_rows<T>(nullptr, cond.anchor, static_cast<T>(cfg.ln_eps));
    Tensor<T> ind_n =
        normalize_rows<T>(nullptr, nul.anchor, static_cast<T>(cfg.ln_eps));
    if (timing) timing->temporal_s += secs(t0, clock());

    std::size_t K = std::min(gc.set_steps, L);
    MaskPlan plan = make_mask_plan(L, K, order_rng);
    SubSchedule ss = SubSchedule::make(sched, gc.infer_steps);

    std::vector<Tensor<T>> frames(F);
    for (auto& fr : frames) fr = Tensor<T>::zeros({M, c});
    std::vector<std::uint8_t> visible(L, 0);

    auto t1 = clock();
    std::size_t revealed = 0;
    for (std::size_t k = 0; k < K; ++k) {
      Tensor<T> dec_c = spatial_forward_joint(ind_c, frames, visible);
      Tensor<T> dec_n = gc.cfg_scale == 1.0
                            ? dec_c
                            : spatial_forward_joint(ind_n, frames, visible);
      std::vector<std::size_t> idx(plan.order.begin() + revealed,
                                   plan.order.begin() + revealed +
                                       plan.reveal_counts[k]);
      Tensor<T> z_c = gather_rows<T>(nullptr, dec_c, idx);
      Tensor<T> z_n = gather_rows<T>(nullptr, dec_n, idx);
      Tensor<T> x = sample_tokens(head, z_c, z_n, ss, gc.cfg_scale, noise_rng,
                                  gc.token_clip);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::size_t f = idx[i] / M, pos = idx[i] % M;
        std::copy(x.data() + i * c, x.data() + (i + 1) * c,
                  frames[f].data() + pos * c);
        visible[idx[i]] = 1;
      }
      revealed += idx.size();
    }
    if (timing) timing->spatial_s += secs(t1, clock());
    return frames;
  }

  // Sliding-window continuation: pre-fill the temporal cache with the most
  // recent F-1 frames (re-indexed from time zero) and generate the next
  // frame; repeat. Seed frames are returned unchanged ahead of the
  // extension.
  std::vector<Tensor<T>> extrapolate_tokens(
      const std::vector<Tensor<T>>& seed_frames, std::size_t extra_frames,
      const GenerationConfig& gc) const {
    if (seed_frames.empty())
      throw ContractError("extrapolate: need at least one seed frame");
    Rng master(gc.seed);
    Rng order_rng = master.fork(1);
    Rng noise_rng = master.fork(2);

    std::vector<Tensor<T>> all = seed_frames;
    for (std::size_t e = 0; e < extra_frames; ++e) {
      std::size_t window = cfg.frames > 1 ? cfg.frames - 1 : 0;
      std::size_t ctx_len = std::min(window, all.size());

      auto run_window = [&](std::size_t pid, std::size_t mb) {
        Pathway p = start_pathway(pid, mb, true);
        for (std::size_t i = all.size() - ctx_len; i < all.size(); ++i)
          pathway_append(p, all[i], true);
        return p;
      };
      Pathway cond = run_window(gc.prompt_id, gc.motion_bucket);
      Pathway nul = run_window(kNullPromptIdOf(),
                               null_motion_bucket(gc.motion_bucket));

      std::size_t frame_time = ctx_len + 1;
      Tensor<T> ind_c = indicator_for(nullptr, cond.h, cond.anchor, frame_time);
      Tensor<T> ind_n = indicator_for(nullptr, nul.h, nul.anchor, frame_time);
      all.push_back(generate_frame(ind_c, ind_n, frame_time, gc, order_rng,
                                   noise_rng));
    }
    return all;
  }
};

}  // namespace nova
