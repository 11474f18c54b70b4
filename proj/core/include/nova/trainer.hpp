#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nova/codec.hpp"
#include "nova/io.hpp"
#include "nova/metrics.hpp"
#include "nova/model.hpp"
#include "nova/train.hpp"

namespace nova {

// Tokens live in [-1, 1]; pixels in [0, 1].
inline constexpr float kTokenScale = 2.0f;
inline constexpr float kTokenShift = -1.0f;

// [T x H x W x c] pixel video -> F frames of [M x c_tok] tokens.
inline std::vector<Tensor<float>> tokens_from_video(const Tensor<float>& video,
                                                    const NovaConfig& cfg) {
  Tensor<float> latent = codec_encode(video, cfg.stride_t, cfg.stride_s);
  std::size_t F = latent.dim(0), H = latent.dim(1), W = latent.dim(2),
              c = latent.dim(3);
  std::vector<Tensor<float>> frames;
  frames.reserve(F);
  for (std::size_t f = 0; f < F; ++f) {
    Tensor<float> frame({H, W, c},
                        std::vector<float>(latent.data() + f * H * W * c,
                                           latent.data() + (f + 1) * H * W * c));
    Tensor<float> toks = patchify_frame(frame, cfg.patch_stride);
    for (float& v : toks.values()) v = kTokenScale * v + kTokenShift;
    frames.push_back(std::move(toks));
  }
  return frames;
}

// Inverse mapping; output pixels are clamped to [0, 1].
inline Tensor<float> video_from_tokens(const std::vector<Tensor<float>>& frames,
                                       const NovaConfig& cfg) {
  if (frames.empty()) throw ContractError("video_from_tokens: no frames");
  std::size_t F = frames.size();
  std::size_t lh = cfg.latent_h(), lw = cfg.latent_w(),
              lc = cfg.latent_channels();
  Tensor<float> latent = Tensor<float>::zeros({F, lh, lw, lc});
  for (std::size_t f = 0; f < F; ++f) {
    Tensor<float> toks = frames[f].clone();
    for (float& v : toks.values())
      v = std::min(1.0f, std::max(0.0f, (v - kTokenShift) / kTokenScale));
    Tensor<float> grid = unpatchify_frame(toks, cfg.grid_h(), cfg.grid_w(),
                                          cfg.patch_stride, lc);
    std::copy(grid.data(), grid.data() + grid.size(),
              latent.data() + f * lh * lw * lc);
  }
  return codec_decode(latent, cfg.stride_t, cfg.stride_s, cfg.video_channels);
}

// Motion score of a pixel video sampled at the latent frame rate, then
// bucketized with the configured quantization.
inline std::size_t motion_bucket_for_video(const Tensor<float>& video,
                                           const NovaConfig& cfg) {
  std::size_t T = video.dim(0), H = video.dim(1), W = video.dim(2),
              c = video.dim(3);
  std::size_t lt = T / cfg.stride_t;
  if (lt < 2) return 0;
  Tensor<float> sampled = Tensor<float>::zeros({lt, H, W, c});
  for (std::size_t f = 0; f < lt; ++f)
    std::copy(video.data() + (f * cfg.stride_t) * H * W * c,
              video.data() + (f * cfg.stride_t + 1) * H * W * c,
              sampled.data() + f * H * W * c);
  double score = motion_score(sampled);
  return motion_bucket(score, cfg.motion_buckets, cfg.motion_bucket_width);
}

struct DatasetEntry {
  std::string path;
  std::size_t prompt_id = 0;
  double true_speed = 0.0;
};

inline std::vector<DatasetEntry> read_manifest(const std::string& dir) {
  std::string manifest = dir + "/manifest.jsonl";
  std::ifstream in(manifest);
  if (!in) throw DataError("dataset: cannot open " + manifest);
  std::vector<DatasetEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      DatasetEntry e;
      e.path = dir + "/" + j.at("path").get<std::string>();
      e.prompt_id = j.at("prompt_id").get<std::size_t>();
      e.true_speed = j.at("true_speed").get<double>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("dataset: bad manifest line: ") + ex.what());
    }
  }
  if (entries.empty()) throw DataError("dataset: empty manifest " + manifest);
  return entries;
}

// In-memory token dataset; clips are tokenized and bucketed once.
struct TokenDataset {
  std::vector<TokenClip<float>> clips;

  static TokenDataset load(const std::string& dir, const NovaConfig& cfg,
                           std::size_t limit = 0) {
    TokenDataset ds;
    std::vector<DatasetEntry> entries = read_manifest(dir);
    if (limit && entries.size() > limit) entries.resize(limit);
    for (const auto& e : entries) {
      Tensor<float> video = read_nvt(e.path);
      if (video.rank() != 4 || video.dim(1) != cfg.video_height ||
          video.dim(2) != cfg.video_width ||
          video.dim(3) != cfg.video_channels)
        throw DataError("dataset: video shape mismatch in " + e.path);
      std::size_t need = cfg.frames * cfg.stride_t;
      if (video.dim(0) < need)
        throw DataError("dataset: clip too short in " + e.path);
      if (video.dim(0) > need) {
        Tensor<float> cut = Tensor<float>::zeros(
            {need, cfg.video_height, cfg.video_width, cfg.video_channels});
        std::copy(video.data(), video.data() + cut.size(), cut.data());
        video = cut;
      }
      TokenClip<float> clip;
      clip.frames = tokens_from_video(video, cfg);
      clip.prompt_id = e.prompt_id;
      clip.motion_bucket = motion_bucket_for_video(video, cfg);
      ds.clips.push_back(std::move(clip));
    }
    return ds;
  }
};

// Single-writer training loop; per-element tapes keep peak memory at one
// clip's graph and make batch loss accumulation order-deterministic.
class Trainer {
 public:
  Trainer(Nova<float>& model, const TrainConfig& tc)
      : model_(&model), tc_(tc) {
    typename AdamW<float>::Options opt;
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.weight_decay = tc.weight_decay;
    adam_.emplace(model.params, opt);
  }

  double lr() const { return lr_for(tc_.base_lr, tc_.batch_size); }

  // One optimizer step over `batch` clips; returns the mean loss.
  double step(const std::vector<const TokenClip<float>*>& batch, Rng& rng) {
    double total = 0.0;
    float seed_scale = 1.0f / static_cast<float>(batch.size());
    for (const TokenClip<float>* clip : batch) {
      Tape<float> tape;
      Tensor<float> loss =
          model_->train_loss(&tape, *clip, rng, tc_.prompt_dropout);
      tape.backward(loss, seed_scale);
      total += loss.item();
    }
    adam_->step(lr());
    model_->params.zero_grad();
    return total / static_cast<double>(batch.size());
  }

  // Full run with `step=<i> loss=<f> lr=<f>` log lines through `log`.
  void run(const TokenDataset& ds, std::function<void(const std::string&)> log,
           std::function<void(std::size_t)> on_save = {}) {
    Rng rng(tc_.seed);
    Rng order_rng = rng.fork(101);
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    for (std::size_t s = 1; s <= tc_.steps; ++s) {
      std::vector<const TokenClip<float>*> batch;
      for (std::size_t b = 0; b < tc_.batch_size; ++b) {
        if (cursor >= order.size()) {
          order = order_rng.permutation(ds.clips.size());
          cursor = 0;
        }
        batch.push_back(&ds.clips[order[cursor++]]);
      }
      double loss = step(batch, rng);
      if (s == 1 || tc_.log_every == 0 || s % tc_.log_every == 0 ||
          s == tc_.steps) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "step=%zu loss=%.6f lr=%.8f", s, loss,
                      lr());
        log(buf);
      }
      if (on_save && tc_.save_every && s % tc_.save_every == 0) on_save(s);
    }
  }

 private:
  Nova<float>* model_;
  TrainConfig tc_;
  std::optional<AdamW<float>> adam_;
};

// Checkpoint round trip for a model.
inline void save_model(const std::string& path, const Nova<float>& model) {
  save_checkpoint(path, model.cfg.to_json(), model.params);
}

inline void load_params_into(ParamSet<float>& params, const Checkpoint& ck) {
  for (auto& [name, tensor] : params) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw DataError("checkpoint: missing tensor " + name);
    if (it->second.shape() != tensor.shape())
      throw DataError("checkpoint: shape mismatch for " + name);
    std::copy(it->second.data(), it->second.data() + it->second.size(),
              tensor.data());
  }
}

inline Nova<float> load_model(const std::string& path,
                              std::uint64_t init_seed = 0) {
  Checkpoint ck = load_checkpoint(path);
  NovaConfig cfg = NovaConfig::from_json(ck.config_json);
  Nova<float> model = Nova<float>::build(cfg, init_seed);
  load_params_into(model.params, ck);
  return model;
}

}  // namespace nova
