#include "nova/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace nova {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw DataError("config: unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void NovaConfig::validate() const {
  if (dim == 0 || dim % heads != 0)
    throw DataError("config: dim must be a positive multiple of heads");
  if (dim % 4 != 0) throw DataError("config: dim must be divisible by 4");
  if (frames == 0) throw DataError("config: frames must be >= 1");
  if (stride_t == 0 || stride_s == 0 || patch_stride == 0)
    throw DataError("config: strides must be positive");
  if (video_height % stride_s != 0 || video_width % stride_s != 0)
    throw DataError("config: video size not divisible by spatial stride");
  if (latent_h() % patch_stride != 0 || latent_w() % patch_stride != 0)
    throw DataError("config: latent grid not divisible by patch stride");
  if (temporal_depth == 0 || spatial_enc_depth == 0 || spatial_dec_depth == 0)
    throw DataError("config: stack depths must be >= 1");
  if (scale_shift_rank < 1 || scale_shift_rank > dim)
    throw DataError("config: scale_shift_rank must be in [1, dim]");
  if (norm_placement != "pre_norm" && norm_placement != "post_norm_after_res" &&
      norm_placement != "post_norm_before_res")
    throw DataError("config: bad norm_placement");
  if (temporal_mode != "causal" && temporal_mode != "joint")
    throw DataError("config: temporal_mode must be causal or joint");
  if (noise_schedule != "cosine" && noise_schedule != "linear")
    throw DataError("config: noise_schedule must be cosine or linear");
  if (train_T == 0 || infer_steps == 0 || infer_steps > train_T)
    throw DataError("config: need 1 <= infer_steps <= train_T");
  if (ar_steps == 0) throw DataError("config: ar_steps must be >= 1");
  if (head_width == 0 || head_width % 2 != 0)
    throw DataError("config: head_width must be positive and even");
  if (head_blocks == 0) throw DataError("config: head_blocks must be >= 1");
  if (prompt_vocab < 2) throw DataError("config: prompt_vocab too small");
  if (motion_buckets == 0 || motion_bucket_width <= 0.0)
    throw DataError("config: bad motion quantization");
  if (ln_eps <= 0.0) throw DataError("config: ln_eps must be positive");
}

namespace {

json model_to_json(const NovaConfig& c) {
  json j;
  j["dim"] = c.dim;
  j["heads"] = c.heads;
  j["temporal_depth"] = c.temporal_depth;
  j["spatial_enc_depth"] = c.spatial_enc_depth;
  j["spatial_dec_depth"] = c.spatial_dec_depth;
  j["frames"] = c.frames;
  j["video_height"] = c.video_height;
  j["video_width"] = c.video_width;
  j["video_channels"] = c.video_channels;
  j["stride_t"] = c.stride_t;
  j["stride_s"] = c.stride_s;
  j["patch_stride"] = c.patch_stride;
  j["scale_shift_rank"] = c.scale_shift_rank;
  j["norm_placement"] = c.norm_placement;
  j["temporal_mode"] = c.temporal_mode;
  j["ar_steps"] = c.ar_steps;
  j["train_T"] = c.train_T;
  j["infer_steps"] = c.infer_steps;
  j["cfg_scale"] = c.cfg_scale;
  j["noise_schedule"] = c.noise_schedule;
  j["cfg_drop_motion"] = c.cfg_drop_motion;
  j["head_width"] = c.head_width;
  j["head_blocks"] = c.head_blocks;
  j["prompt_vocab"] = c.prompt_vocab;
  j["motion_buckets"] = c.motion_buckets;
  j["motion_bucket_width"] = c.motion_bucket_width;
  j["ln_eps"] = c.ln_eps;
  return j;
}

NovaConfig model_from_json(const json& j) {
  static const std::set<std::string> known = {
      "dim", "heads", "temporal_depth", "spatial_enc_depth",
      "spatial_dec_depth", "frames", "video_height", "video_width",
      "video_channels", "stride_t", "stride_s", "patch_stride",
      "scale_shift_rank", "norm_placement", "temporal_mode", "ar_steps",
      "train_T", "infer_steps", "cfg_scale", "noise_schedule",
      "cfg_drop_motion", "head_width", "head_blocks", "prompt_vocab",
      "motion_buckets", "motion_bucket_width", "ln_eps"};
  reject_unknown(j, known, "model");
  NovaConfig c;
  get_to(j, "dim", c.dim);
  get_to(j, "heads", c.heads);
  get_to(j, "temporal_depth", c.temporal_depth);
  get_to(j, "spatial_enc_depth", c.spatial_enc_depth);
  get_to(j, "spatial_dec_depth", c.spatial_dec_depth);
  get_to(j, "frames", c.frames);
  get_to(j, "video_height", c.video_height);
  get_to(j, "video_width", c.video_width);
  get_to(j, "video_channels", c.video_channels);
  get_to(j, "stride_t", c.stride_t);
  get_to(j, "stride_s", c.stride_s);
  get_to(j, "patch_stride", c.patch_stride);
  get_to(j, "scale_shift_rank", c.scale_shift_rank);
  get_to(j, "norm_placement", c.norm_placement);
  get_to(j, "temporal_mode", c.temporal_mode);
  get_to(j, "ar_steps", c.ar_steps);
  get_to(j, "train_T", c.train_T);
  get_to(j, "infer_steps", c.infer_steps);
  get_to(j, "cfg_scale", c.cfg_scale);
  get_to(j, "noise_schedule", c.noise_schedule);
  get_to(j, "cfg_drop_motion", c.cfg_drop_motion);
  get_to(j, "head_width", c.head_width);
  get_to(j, "head_blocks", c.head_blocks);
  get_to(j, "prompt_vocab", c.prompt_vocab);
  get_to(j, "motion_buckets", c.motion_buckets);
  get_to(j, "motion_bucket_width", c.motion_bucket_width);
  get_to(j, "ln_eps", c.ln_eps);
  c.validate();
  return c;
}

json train_to_json(const TrainConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["checkpoint_out"] = c.checkpoint_out;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["base_lr"] = c.base_lr;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["prompt_dropout"] = c.prompt_dropout;
  j["seed"] = c.seed;
  j["log_every"] = c.log_every;
  j["save_every"] = c.save_every;
  return j;
}

TrainConfig train_from_json(const json& j) {
  static const std::set<std::string> known = {
      "dataset", "checkpoint_out", "batch_size", "steps",
      "base_lr", "weight_decay", "beta1", "beta2",
      "prompt_dropout", "seed", "log_every", "save_every"};
  reject_unknown(j, known, "train");
  TrainConfig c;
  get_to(j, "dataset", c.dataset);
  get_to(j, "checkpoint_out", c.checkpoint_out);
  get_to(j, "batch_size", c.batch_size);
  get_to(j, "steps", c.steps);
  get_to(j, "base_lr", c.base_lr);
  get_to(j, "weight_decay", c.weight_decay);
  get_to(j, "beta1", c.beta1);
  get_to(j, "beta2", c.beta2);
  get_to(j, "prompt_dropout", c.prompt_dropout);
  get_to(j, "seed", c.seed);
  get_to(j, "log_every", c.log_every);
  get_to(j, "save_every", c.save_every);
  if (c.batch_size == 0) throw DataError("config: batch_size must be >= 1");
  if (c.prompt_dropout < 0.0 || c.prompt_dropout > 1.0)
    throw DataError("config: prompt_dropout must be in [0, 1]");
  return c;
}

}  // namespace

std::string NovaConfig::to_json() const { return model_to_json(*this).dump(); }

NovaConfig NovaConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: parse failure: ") + e.what());
  }
  return model_from_json(j);
}

FullConfig FullConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: parse failure: ") + e.what());
  }
  reject_unknown(j, {"model", "train"}, "top level");
  FullConfig c;
  try {
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return c;
}

FullConfig FullConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string FullConfig::to_json() const {
  json j;
  j["model"] = model_to_json(model);
  j["train"] = train_to_json(train);
  return j.dump(2);
}

}  // namespace nova
