#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nova/attention.hpp"
#include "nova/io.hpp"
#include "nova/metrics.hpp"
#include "nova/model.hpp"
#include "nova/synth.hpp"
#include "nova/trainer.hpp"

namespace nova {

namespace {

namespace fs = std::filesystem;

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.ppm", index);
  return buf;
}

void write_video_ppm(const Tensor<float>& video, const std::string& dir,
                     std::vector<std::string>* files = nullptr) {
  std::size_t T = video.dim(0), H = video.dim(1), W = video.dim(2),
              c = video.dim(3);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor<float> frame({H, W, c},
                        std::vector<float>(video.data() + t * H * W * c,
                                           video.data() + (t + 1) * H * W * c));
    std::string name = frame_name(t);
    write_ppm(dir + "/" + name, frame);
    if (files) files->push_back(name);
  }
}

Tensor<float> slice_video(const Tensor<float>& video, std::size_t start,
                          std::size_t count) {
  std::size_t H = video.dim(1), W = video.dim(2), c = video.dim(3);
  std::size_t frame = H * W * c;
  Tensor<float> out = Tensor<float>::zeros({count, H, W, c});
  std::copy(video.data() + start * frame, video.data() + (start + count) * frame,
            out.data());
  return out;
}

int run_synth(const std::string& out_dir, std::size_t count,
              std::uint64_t seed, std::size_t frames, std::size_t height,
              std::size_t width) {
  fs::create_directories(out_dir);
  std::ofstream manifest(out_dir + "/manifest.jsonl");
  if (!manifest) throw DataError("synth: cannot write manifest in " + out_dir);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec spec = random_spec(rng, height, width, frames);
    SynthVideo sv = synth_video(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "vid_%05zu.nvt", i);
    write_nvt(out_dir + "/" + name, "video", sv.video);
    nlohmann::json j;
    j["path"] = name;
    j["prompt_id"] = sv.prompt_id;
    j["true_speed"] = sv.true_speed;
    j["caption"] = caption_for_prompt_id(sv.prompt_id);
    manifest << j.dump() << "\n";
  }
  std::cout << "wrote " << count << " clips to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& resume) {
  FullConfig fc = FullConfig::from_file(config_path);
  fc.model.validate();
  if (fc.train.dataset.empty())
    throw ContractError("train: config is missing train.dataset");

  Nova<float> model = Nova<float>::build(fc.model, fc.train.seed);
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    load_params_into(model.params, ck);
    std::cerr << "resumed parameters from " << resume << "\n";
  }

  TokenDataset ds = TokenDataset::load(fc.train.dataset, fc.model);
  std::cerr << "dataset: " << ds.clips.size() << " clips\n";

  Trainer trainer(model, fc.train);
  trainer.run(
      ds,
      [](const std::string& line) { std::cout << line << std::endl; },
      [&](std::size_t) { save_model(fc.train.checkpoint_out, model); });
  save_model(fc.train.checkpoint_out, model);
  std::cerr << "checkpoint written to " << fc.train.checkpoint_out << "\n";
  return 0;
}

GenerationConfig make_gen_config(const Nova<float>& model, std::size_t frames,
                                 std::size_t prompt_id, std::size_t motion,
                                 double cfg_scale, std::size_t ar_steps,
                                 std::size_t infer_steps, std::uint64_t seed,
                                 const std::string& mode) {
  GenerationConfig gc;
  gc.frames = frames;
  gc.prompt_id = prompt_id;
  gc.motion_bucket = motion;
  gc.cfg_scale = cfg_scale;
  std::size_t M = model.cfg.tokens_per_frame();
  if (ar_steps > M) {
    std::cerr << "ar-steps " << ar_steps << " exceeds tokens per frame " << M
              << "; clamping\n";
    ar_steps = M;
  }
  gc.set_steps = ar_steps;
  gc.infer_steps = std::min(infer_steps, model.cfg.train_T);
  gc.seed = seed;
  gc.joint = mode == "joint";
  return gc;
}

int run_generate(const std::string& ckpt, std::size_t prompt_id,
                 std::size_t frames, double cfg_scale, std::size_t ar_steps,
                 std::uint64_t seed, const std::string& out_dir,
                 std::size_t infer_steps, std::size_t motion,
                 const std::string& mode, bool dry_run) {
  if (dry_run) {
    nlohmann::json j;
    j["ckpt"] = ckpt;
    j["prompt_id"] = prompt_id;
    j["frames"] = frames;
    j["cfg_scale"] = cfg_scale;
    j["ar_steps"] = ar_steps;
    j["infer_steps"] = infer_steps;
    j["seed"] = seed;
    j["motion_bucket"] = motion;
    j["temporal_mode"] = mode;
    std::cout << j.dump() << "\n";
    return 0;
  }
  Nova<float> model = load_model(ckpt);
  std::string m = mode.empty() ? model.cfg.temporal_mode : mode;
  GenerationConfig gc = make_gen_config(model, frames, prompt_id, motion,
                                        cfg_scale, ar_steps,
                                        infer_steps ? infer_steps
                                                    : model.cfg.infer_steps,
                                        seed, m);
  auto tokens = model.generate_tokens(gc, !gc.joint);
  Tensor<float> video = video_from_tokens(tokens, model.cfg);

  fs::create_directories(out_dir);
  std::vector<std::string> files;
  write_video_ppm(video, out_dir, &files);

  nlohmann::json j;
  j["prompt_id"] = prompt_id;
  j["caption"] = prompt_id < kPromptVocab ? caption_for_prompt_id(prompt_id)
                                          : std::string("<custom>");
  j["motion_bucket"] = motion;
  j["seed"] = seed;
  j["cfg_scale"] = cfg_scale;
  j["ar_steps"] = gc.set_steps;
  j["infer_steps"] = gc.infer_steps;
  j["temporal_mode"] = m;
  j["frames"] = files;
  std::ofstream mf(out_dir + "/manifest.json");
  mf << j.dump(2) << "\n";
  std::cout << "wrote " << files.size() << " frames to " << out_dir << "\n";
  return 0;
}

int run_extrapolate(const std::string& ckpt, const std::string& seed_video,
                    std::size_t extra, const std::string& out_dir,
                    const std::string& truth_path, const std::string& csv_path,
                    double cfg_scale, std::size_t ar_steps,
                    std::size_t infer_steps, std::uint64_t seed,
                    std::size_t prompt_id, long motion_flag) {
  Nova<float> model = load_model(ckpt);
  const NovaConfig& cfg = model.cfg;
  Tensor<float> video = read_nvt(seed_video);
  if (video.rank() != 4 || video.dim(1) != cfg.video_height ||
      video.dim(2) != cfg.video_width || video.dim(3) != cfg.video_channels)
    throw DataError("extrapolate: seed video shape mismatch");
  if (video.dim(0) < cfg.stride_t || video.dim(0) % cfg.stride_t != 0)
    throw DataError("extrapolate: seed length must be a positive multiple of "
                    "the temporal stride");
  if (extra % cfg.stride_t != 0)
    throw ContractError("extrapolate: --extra must be a multiple of the "
                        "temporal stride " + std::to_string(cfg.stride_t));

  std::size_t motion =
      motion_flag >= 0 ? static_cast<std::size_t>(motion_flag)
                       : (video.dim(0) >= 2 * cfg.stride_t
                              ? motion_bucket_for_video(video, cfg)
                              : 0);

  auto seed_tokens = tokens_from_video(video, cfg);
  GenerationConfig gc = make_gen_config(model, cfg.frames, prompt_id, motion,
                                        cfg_scale, ar_steps,
                                        infer_steps ? infer_steps
                                                    : cfg.infer_steps,
                                        seed, "causal");
  auto all = model.extrapolate_tokens(seed_tokens, extra / cfg.stride_t, gc);
  Tensor<float> out_video = video_from_tokens(all, cfg);

  fs::create_directories(out_dir);
  write_video_ppm(out_video, out_dir);
  std::cout << "wrote " << out_video.dim(0) << " frames (" << video.dim(0)
            << " seed + " << extra << " extrapolated) to " << out_dir << "\n";

  if (!truth_path.empty()) {
    Tensor<float> truth = read_nvt(truth_path);
    if (truth.shape() != out_video.shape())
      throw DataError("extrapolate: ground truth shape mismatch");
    std::string csv = csv_path.empty() ? out_dir + "/psnr.csv" : csv_path;
    std::ofstream f(csv);
    f << "frame,psnr\n";
    for (std::size_t t = video.dim(0); t < out_video.dim(0); ++t) {
      double p = psnr(slice_video(out_video, t, 1), slice_video(truth, t, 1));
      f << t << "," << p << "\n";
    }
    std::cout << "per-frame psnr written to " << csv << "\n";
  }
  return 0;
}

int run_inspect_mask(std::size_t prefix, std::size_t frames,
                     std::size_t tokens) {
  BlockLayout layout;
  layout.prefix_len = prefix;
  layout.block_sizes.assign(frames, tokens);
  std::cout << render_mask(build_block_causal_mask(layout));
  return 0;
}

int run_bench(const std::string& ckpt, std::size_t frames, double cfg_scale,
              std::size_t ar_steps, std::size_t infer_steps,
              std::uint64_t seed, std::size_t prompt_id) {
  Nova<float> model = load_model(ckpt);
  for (const char* mode : {"causal", "joint"}) {
    GenerationConfig gc = make_gen_config(model, frames, prompt_id, 0,
                                          cfg_scale, ar_steps, infer_steps,
                                          seed, mode);
    GenTiming timing;
    auto tokens = model.generate_tokens(gc, !gc.joint, &timing);
    (void)tokens;
    std::printf("mode=%s temporal=%.4f spatial=%.4f total=%.4f\n", mode,
                timing.temporal_s, timing.spatial_s, timing.total());
  }
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& testset,
             const std::string& csv_path, double cfg_scale,
             std::size_t ar_steps, std::size_t infer_steps,
             std::uint64_t seed, std::size_t count) {
  Nova<float> model = load_model(ckpt);
  const NovaConfig& cfg = model.cfg;
  std::vector<DatasetEntry> entries = read_manifest(testset);
  if (count && entries.size() > count) entries.resize(count);

  std::string csv = csv_path.empty() ? testset + "/eval_psnr.csv" : csv_path;
  std::ofstream f(csv);
  f << "case,prompt_id,psnr_model,psnr_copy\n";
  double sum_model = 0, sum_copy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<float> video = read_nvt(entries[i].path);
    if (video.dim(0) < 2 * cfg.stride_t)
      throw DataError("eval: clip too short for next-frame prediction");

    // Condition on the first latent frame plus prompt and motion, predict
    // the second latent frame.
    Tensor<float> seed_raw = slice_video(video, 0, cfg.stride_t);
    Tensor<float> truth_raw = slice_video(video, cfg.stride_t, cfg.stride_t);
    std::size_t motion = motion_bucket_for_video(video, cfg);

    GenerationConfig gc = make_gen_config(model, cfg.frames,
                                          entries[i].prompt_id, motion,
                                          cfg_scale, ar_steps,
                                          infer_steps ? infer_steps
                                                      : cfg.infer_steps,
                                          seed + i, "causal");
    auto seed_tokens = tokens_from_video(seed_raw, cfg);
    auto all = model.extrapolate_tokens(seed_tokens, 1, gc);
    std::vector<Tensor<float>> gen(all.end() - 1, all.end());
    Tensor<float> gen_raw = video_from_tokens(gen, cfg);

    Tensor<float> copy_raw = Tensor<float>::zeros(truth_raw.shape());
    std::size_t frame = cfg.video_height * cfg.video_width * cfg.video_channels;
    for (std::size_t t = 0; t < cfg.stride_t; ++t)
      std::copy(seed_raw.data() + (cfg.stride_t - 1) * frame,
                seed_raw.data() + cfg.stride_t * frame,
                copy_raw.data() + t * frame);

    double p_model = psnr(gen_raw, truth_raw);
    double p_copy = psnr(copy_raw, truth_raw);
    f << i << "," << entries[i].prompt_id << "," << p_model << "," << p_copy
      << "\n";
    sum_model += p_model;
    sum_copy += p_copy;
    ++n;
  }
  std::printf("cases=%zu mean_psnr_model=%.4f mean_psnr_copy=%.4f\n", n,
              sum_model / n, sum_copy / n);
  std::cout << "per-case psnr written to " << csv << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& argv) {
  CLI::App app{"nova: desk-scale autoregressive video generation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "render a synthetic dataset");
  std::string synth_out;
  std::size_t synth_count = 100, synth_frames = 10, synth_h = 32, synth_w = 32;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of clips");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--frames", synth_frames, "raw frames per clip");
  synth->add_option("--height", synth_h, "canvas height");
  synth->add_option("--width", synth_w, "canvas width");

  // train
  auto* train = app.add_subcommand("train", "train a model from a config");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "JSON config file")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // generate
  auto* gen = app.add_subcommand("generate", "generate a video");
  std::string gen_ckpt, gen_out = "out", gen_mode;
  std::size_t gen_prompt = 0, gen_frames = 5, gen_ar = 128, gen_infer = 0,
              gen_motion = 0;
  double gen_cfg = 7.0;
  std::uint64_t gen_seed = 0;
  bool gen_dry = false;
  gen->add_option("--ckpt", gen_ckpt, "checkpoint path")->required();
  gen->add_option("--prompt-id", gen_prompt, "prompt id")->required();
  gen->add_option("--frames", gen_frames, "latent frames to generate");
  gen->add_option("--cfg-scale", gen_cfg, "guidance scale");
  gen->add_option("--ar-steps", gen_ar, "set steps per frame");
  gen->add_option("--infer-steps", gen_infer, "sampler steps (0: config)");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--motion-bucket", gen_motion, "motion conditioning bucket");
  gen->add_option("--temporal-mode", gen_mode, "causal|joint (default config)");
  gen->add_flag("--dry-run", gen_dry, "print resolved settings and exit");

  // extrapolate
  auto* ext = app.add_subcommand("extrapolate", "extend an existing video");
  std::string ext_ckpt, ext_seed_video, ext_out = "out_ext", ext_truth,
              ext_csv;
  std::size_t ext_extra = 0, ext_ar = 128, ext_infer = 0, ext_prompt = 0;
  double ext_cfg = 7.0;
  std::uint64_t ext_seed = 0;
  long ext_motion = -1;
  ext->add_option("--ckpt", ext_ckpt, "checkpoint path")->required();
  ext->add_option("--seed-video", ext_seed_video, "seed video (.nvt)")
      ->required();
  ext->add_option("--extra", ext_extra, "extra raw frames to generate")
      ->required();
  ext->add_option("--out", ext_out, "output directory");
  ext->add_option("--truth", ext_truth, "ground-truth video for PSNR (.nvt)");
  ext->add_option("--csv", ext_csv, "PSNR CSV path");
  ext->add_option("--cfg-scale", ext_cfg, "guidance scale");
  ext->add_option("--ar-steps", ext_ar, "set steps per frame");
  ext->add_option("--infer-steps", ext_infer, "sampler steps (0: config)");
  ext->add_option("--seed", ext_seed, "generation seed");
  ext->add_option("--prompt-id", ext_prompt, "prompt id (0: unconditional)");
  ext->add_option("--motion-bucket", ext_motion,
                  "motion bucket (-1: estimate from the seed video)");

  // inspect-mask
  auto* mask = app.add_subcommand("inspect-mask",
                                  "render the block-causal attention mask");
  std::size_t mask_prefix = 1, mask_frames = 2, mask_tokens = 2;
  mask->add_option("--prefix", mask_prefix, "prefix token count");
  mask->add_option("--frames", mask_frames, "frame block count");
  mask->add_option("--tokens", mask_tokens, "tokens per frame block");

  // bench
  auto* bench = app.add_subcommand("bench", "time causal vs joint inference");
  std::string bench_ckpt;
  std::size_t bench_frames = 8, bench_ar = 16, bench_infer = 4,
              bench_prompt = 1;
  double bench_cfg = 1.0;
  std::uint64_t bench_seed = 0;
  bench->add_option("--ckpt", bench_ckpt, "checkpoint path")->required();
  bench->add_option("--frames", bench_frames, "latent frames");
  bench->add_option("--ar-steps", bench_ar, "set steps");
  bench->add_option("--infer-steps", bench_infer, "sampler steps");
  bench->add_option("--cfg-scale", bench_cfg, "guidance scale");
  bench->add_option("--seed", bench_seed, "generation seed");
  bench->add_option("--prompt-id", bench_prompt, "prompt id");

  // eval
  auto* eval = app.add_subcommand("eval", "next-frame PSNR over a test set");
  std::string eval_ckpt, eval_testset, eval_csv;
  std::size_t eval_ar = 16, eval_infer = 0, eval_count = 0;
  double eval_cfg = 1.0;
  std::uint64_t eval_seed = 0;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--testset", eval_testset, "dataset directory")->required();
  eval->add_option("--csv", eval_csv, "output CSV path");
  eval->add_option("--cfg-scale", eval_cfg, "guidance scale");
  eval->add_option("--ar-steps", eval_ar, "set steps per frame");
  eval->add_option("--infer-steps", eval_infer, "sampler steps (0: config)");
  eval->add_option("--seed", eval_seed, "generation seed");
  eval->add_option("--count", eval_count, "cases to evaluate (0: all)");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << "\n";
      return 0;
    }
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed())
      return run_synth(synth_out, synth_count, synth_seed, synth_frames,
                       synth_h, synth_w);
    if (train->parsed()) return run_train(train_config, train_resume);
    if (gen->parsed())
      return run_generate(gen_ckpt, gen_prompt, gen_frames, gen_cfg, gen_ar,
                          gen_seed, gen_out, gen_infer, gen_motion, gen_mode,
                          gen_dry);
    if (ext->parsed())
      return run_extrapolate(ext_ckpt, ext_seed_video, ext_extra, ext_out,
                             ext_truth, ext_csv, ext_cfg, ext_ar, ext_infer,
                             ext_seed, ext_prompt, ext_motion);
    if (mask->parsed())
      return run_inspect_mask(mask_prefix, mask_frames, mask_tokens);
    if (bench->parsed())
      return run_bench(bench_ckpt, bench_frames, bench_cfg, bench_ar,
                       bench_infer, bench_seed, bench_prompt);
    if (eval->parsed())
      return run_eval(eval_ckpt, eval_testset, eval_csv, eval_cfg, eval_ar,
                      eval_infer, eval_seed, eval_count);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace nova
