#include "nova/synth.hpp"

#include <algorithm>
#include <cmath>

namespace nova {

namespace {

struct Rgb {
  float r, g, b;
};

constexpr std::array<Rgb, kSynthColors> kPalette = {{
    {1.0f, 0.15f, 0.15f},  // red
    {0.15f, 1.0f, 0.15f},  // green
    {0.2f, 0.35f, 1.0f},   // blue
    {1.0f, 1.0f, 0.2f},    // yellow
    {1.0f, 0.25f, 1.0f},   // magenta
    {0.2f, 1.0f, 1.0f},    // cyan
}};

constexpr const char* kColorWords[kSynthColors] = {"red",    "green",  "blue",
                                                   "yellow", "magenta", "cyan"};
constexpr const char* kShapeWords[kSynthShapes] = {"square", "circle", "bar"};
constexpr const char* kDirectionWords[kSynthDirections] = {
    "right", "left", "up", "down", "nowhere"};
constexpr const char* kSpeedWords[kSynthSpeeds] = {"slowly", "steadily",
                                                   "quickly"};

void shape_extent(ShapeKind kind, std::size_t* w, std::size_t* h) {
  switch (kind) {
    case ShapeKind::kCircle: *w = 9; *h = 9; return;
    case ShapeKind::kBar: *w = 12; *h = 4; return;
    case ShapeKind::kSquare:
    default: *w = 8; *h = 8; return;
  }
}

bool inside_shape(ShapeKind kind, std::size_t w, std::size_t h, std::size_t x,
                  std::size_t y) {
  switch (kind) {
    case ShapeKind::kSquare:
    case ShapeKind::kBar:
      return true;  // full bounding box
    case ShapeKind::kCircle: {
      double cx = (static_cast<double>(w) - 1.0) / 2.0;
      double cy = (static_cast<double>(h) - 1.0) / 2.0;
      double dx = static_cast<double>(x) - cx;
      double dy = static_cast<double>(y) - cy;
      double r = static_cast<double>(w) / 2.0;
      return dx * dx + dy * dy <= r * r;
    }
  }
  return false;
}

// Reflects p into [0, limit], flipping v as needed.
void reflect(double* p, double* v, double limit) {
  while (*p < 0.0 || *p > limit) {
    if (*p < 0.0) {
      *p = -*p;
      *v = -*v;
    } else {
      *p = 2.0 * limit - *p;
      *v = -*v;
    }
  }
}

}  // namespace

std::size_t prompt_id_for(ShapeKind shape, std::size_t color, Direction dir,
                          std::size_t speed_slot) {
  if (color >= kSynthColors || speed_slot >= kSynthSpeeds)
    throw ContractError("prompt_id_for: index out of range");
  std::size_t s = static_cast<std::size_t>(shape);
  std::size_t d = static_cast<std::size_t>(dir);
  return 1 + ((s * kSynthColors + color) * kSynthDirections + d) * kSynthSpeeds +
         speed_slot;
}

std::string caption_for(ShapeKind shape, std::size_t color, Direction dir,
                        std::size_t speed_slot) {
  std::string out = "a ";
  out += kColorWords[color];
  out += " ";
  out += kShapeWords[static_cast<std::size_t>(shape)];
  out += " moving ";
  out += kDirectionWords[static_cast<std::size_t>(dir)];
  out += " ";
  out += kSpeedWords[speed_slot];
  return out;
}

std::string caption_for_prompt_id(std::size_t prompt_id) {
  if (prompt_id == kNullPromptId) return "<null>";
  std::size_t v = prompt_id - 1;
  std::size_t speed = v % kSynthSpeeds;
  v /= kSynthSpeeds;
  std::size_t dir = v % kSynthDirections;
  v /= kSynthDirections;
  std::size_t color = v % kSynthColors;
  v /= kSynthColors;
  if (v >= kSynthShapes) throw ContractError("caption: prompt id out of range");
  return caption_for(static_cast<ShapeKind>(v), color,
                     static_cast<Direction>(dir), speed);
}

SynthVideo synth_video(const SynthSpec& spec) {
  std::size_t sw, sh;
  shape_extent(spec.shape, &sw, &sh);
  if (sw > spec.width || sh > spec.height)
    throw ContractError("synth_video: shape larger than canvas");
  if (spec.frames == 0) throw ContractError("synth_video: no frames");

  double speed = kSynthSpeedValues[spec.speed_slot];
  double vx = 0.0, vy = 0.0;
  switch (spec.direction) {
    case Direction::kRight: vx = speed; break;
    case Direction::kLeft: vx = -speed; break;
    case Direction::kUp: vy = -speed; break;
    case Direction::kDown: vy = speed; break;
    case Direction::kNone: speed = 0.0; break;
  }

  double limit_x = static_cast<double>(spec.width - sw);
  double limit_y = static_cast<double>(spec.height - sh);
  Rng rng(spec.seed);
  double px = rng.uniform(0.0, limit_x);
  double py = rng.uniform(0.0, limit_y);

  const Rgb color = kPalette[spec.color];
  Tensor<float> video =
      Tensor<float>::zeros({spec.frames, spec.height, spec.width, 3});
  for (std::size_t t = 0; t < spec.frames; ++t) {
    std::size_t ox = static_cast<std::size_t>(std::llround(px));
    std::size_t oy = static_cast<std::size_t>(std::llround(py));
    for (std::size_t y = 0; y < sh; ++y)
      for (std::size_t x = 0; x < sw; ++x) {
        if (!inside_shape(spec.shape, sw, sh, x, y)) continue;
        float* px_ptr = video.data() +
                        ((t * spec.height + oy + y) * spec.width + ox + x) * 3;
        px_ptr[0] = color.r;
        px_ptr[1] = color.g;
        px_ptr[2] = color.b;
      }
    px += vx;
    py += vy;
    reflect(&px, &vx, limit_x);
    reflect(&py, &vy, limit_y);
  }

  SynthVideo out;
  out.video = std::move(video);
  out.prompt_id =
      prompt_id_for(spec.shape, spec.color, spec.direction, spec.speed_slot);
  out.true_speed = spec.direction == Direction::kNone
                       ? 0.0
                       : kSynthSpeedValues[spec.speed_slot];
  return out;
}

SynthSpec random_spec(Rng& rng, std::size_t height, std::size_t width,
                      std::size_t frames) {
  SynthSpec spec;
  spec.height = height;
  spec.width = width;
  spec.frames = frames;
  spec.shape = static_cast<ShapeKind>(rng.index(kSynthShapes));
  spec.color = rng.index(kSynthColors);
  // Static clips are 1 in 20; otherwise a uniform cardinal direction.
  spec.direction = rng.uniform() < 0.05
                       ? Direction::kNone
                       : static_cast<Direction>(rng.index(4));
  spec.speed_slot = rng.index(kSynthSpeeds);
  spec.seed = rng.next_u64();
  return spec;
}

}  // namespace nova
