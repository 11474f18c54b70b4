#pragma once

#include <cstdint>
#include <string>

#include "nova/common.hpp"

namespace nova {

// Model hyperparameters. Defaults are the desk-scale configuration; the
// paper-scale values stay reachable through the config file.
struct NovaConfig {
  std::size_t dim = 128;
  std::size_t heads = 8;
  std::size_t temporal_depth = 2;
  std::size_t spatial_enc_depth = 2;
  std::size_t spatial_dec_depth = 2;
  std::size_t frames = 5;  // latent frames per clip (F)

  std::size_t video_height = 32;
  std::size_t video_width = 32;
  std::size_t video_channels = 3;
  std::size_t stride_t = 2;  // codec temporal stride
  std::size_t stride_s = 4;  // codec spatial stride
  std::size_t patch_stride = 1;

  std::size_t scale_shift_rank = 24;
  std::string norm_placement = "post_norm_before_res";
  std::string temporal_mode = "causal";  // causal | joint

  std::size_t ar_steps = 128;     // set steps per frame (clamped to M)
  std::size_t train_T = 1000;     // diffusion schedule length
  std::size_t infer_steps = 100;  // sampler steps
  double cfg_scale = 7.0;
  std::string noise_schedule = "cosine";  // cosine | linear
  bool cfg_drop_motion = false;

  std::size_t head_width = 256;
  std::size_t head_blocks = 3;

  std::size_t prompt_vocab = 271;  // synth captions + null id 0
  std::size_t motion_buckets = 8;
  double motion_bucket_width = 0.375;

  double ln_eps = 1e-6;

  // Derived quantities.
  std::size_t latent_h() const { return video_height / stride_s; }
  std::size_t latent_w() const { return video_width / stride_s; }
  std::size_t latent_channels() const {
    return video_channels * stride_t * stride_s * stride_s;
  }
  std::size_t grid_h() const { return latent_h() / patch_stride; }
  std::size_t grid_w() const { return latent_w() / patch_stride; }
  std::size_t tokens_per_frame() const { return grid_h() * grid_w(); }  // M
  std::size_t token_channels() const {
    return latent_channels() * patch_stride * patch_stride;
  }
  std::size_t set_steps() const {  // effective K
    return ar_steps > tokens_per_frame() ? tokens_per_frame() : ar_steps;
  }

  void validate() const;

  std::string to_json() const;
  static NovaConfig from_json(const std::string& text);
};

// Training-run settings (the CLI `train` config file carries both).
struct TrainConfig {
  std::string dataset = "";
  std::string checkpoint_out = "nova.ckpt";
  std::size_t batch_size = 8;
  std::size_t steps = 400;
  double base_lr = 1e-4;
  double weight_decay = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double prompt_dropout = 0.1;
  std::uint64_t seed = 1;
  std::size_t log_every = 10;
  std::size_t save_every = 0;  // 0: only at the end
};

// Whole config file: {"model": {...}, "train": {...}}; unknown keys are
// rejected at any level.
struct FullConfig {
  NovaConfig model;
  TrainConfig train;

  static FullConfig from_file(const std::string& path);
  static FullConfig from_json(const std::string& text);
  std::string to_json() const;
};

}  // namespace nova
