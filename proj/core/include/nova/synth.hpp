#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "nova/rng.hpp"
#include "nova/tensor.hpp"

namespace nova {

// Synthetic moving-shapes world: one colored shape per clip bouncing on a
// black canvas, captioned by a fixed template. Prompt ids enumerate the
// caption vocabulary; id 0 is reserved for the null (unconditional) prompt.
enum class ShapeKind : std::uint8_t { kSquare = 0, kCircle = 1, kBar = 2 };
enum class Direction : std::uint8_t {
  kRight = 0,
  kLeft = 1,
  kUp = 2,
  kDown = 3,
  kNone = 4,
};

inline constexpr std::size_t kSynthColors = 6;
inline constexpr std::size_t kSynthShapes = 3;
inline constexpr std::size_t kSynthDirections = 5;
inline constexpr std::size_t kSynthSpeeds = 3;
inline constexpr std::size_t kPromptVocab =
    kSynthColors * kSynthShapes * kSynthDirections * kSynthSpeeds + 1;
inline constexpr std::size_t kNullPromptId = 0;

// Speed slots in pixels per frame.
inline constexpr std::array<double, kSynthSpeeds> kSynthSpeedValues = {0.5, 1.0,
                                                                       1.5};

struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t frames = 10;
  ShapeKind shape = ShapeKind::kSquare;
  std::size_t color = 0;      // palette index
  Direction direction = Direction::kRight;
  std::size_t speed_slot = 1;  // index into kSynthSpeedValues
  std::uint64_t seed = 0;      // start position
};

struct SynthVideo {
  Tensor<float> video;  // [T x H x W x 3], values in [0, 1]
  std::size_t prompt_id = 0;
  double true_speed = 0.0;  // pixels per frame
};

std::size_t prompt_id_for(ShapeKind shape, std::size_t color, Direction dir,
                          std::size_t speed_slot);
std::string caption_for(ShapeKind shape, std::size_t color, Direction dir,
                        std::size_t speed_slot);
std::string caption_for_prompt_id(std::size_t prompt_id);

SynthVideo synth_video(const SynthSpec& spec);

// Uniform random spec on the canvas; static clips are kept rare so motion
// dominates the corpus.
SynthSpec random_spec(Rng& rng, std::size_t height, std::size_t width,
                      std::size_t frames);

}  // namespace nova
