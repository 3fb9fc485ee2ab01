#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskcert/certifier.hpp"

namespace maskcert {

// One adversarial rectangle and the pixels written into it. Content is
// [height, width, C] and is clamped to [0, 1] when applied.
struct PatchPlacement {
  PixelRect rect;
  Tensor content;
};

// x' = (1 - p) * x + p * clamp(content). Throws GeometryError when the
// rectangle leaves the image or the content shape does not match it.
Image apply_patch(const Image& image, const PatchPlacement& placement);

enum class PatchPattern { kUniform, kConstant, kCheckerboard, kCopied, kGreedy };
const char* pattern_name(PatchPattern p);

struct AttackTrial {
  std::size_t index = 0;
  PixelRect rect;
  PatchPattern pattern = PatchPattern::kUniform;
  std::size_t prediction = 0;
  bool verified = false;
  bool violation = false;
  std::size_t steps_accepted = 0;  // greedy only
};

struct Counterexample {
  std::size_t trial = 0;
  PatchPlacement placement;
  Image adversarial;
  CertifiedOutput adversarial_output;
};

struct AttackReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t clean_prediction = 0;
  bool clean_verified = false;
  std::size_t flipped = 0;          // f(x') != f(x)
  std::size_t detected = 0;         // v(x') == 0
  std::size_t flipped_detected = 0; // both of the above
  std::size_t soundness_checks = 0;
  std::size_t violations = 0;
  std::vector<AttackTrial> log;     // filled when keep_log is set
  std::optional<Counterexample> first_violation;
};

struct RandomAttackOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  bool keep_log = false;
  // Sources for the copied-content pattern; the clean image itself when empty.
  std::span<const Image> donors = {};
};

// Uniform random placements (any size up to the adversary bound) filled with
// uniform noise, a constant colour, a checkerboard, or pixels copied from
// another image. Each trial is a soundness check against the clean image.
AttackReport random_attack(const Certifier& certifier, const Image& clean,
                           const AdversaryGeometry& adv, const RandomAttackOptions& options);

struct GreedyAttackOptions {
  std::size_t runs = 1;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  std::size_t candidate_placements = 8;
  bool keep_log = false;
};

// Starting point of one greedy run: the best of `candidate_placements`
// random full-size placements with uniform content, scored by the unmasked
// pass's target-class margin.
PatchPlacement greedy_start(const Certifier& certifier, const Image& clean,
                            const AdversaryGeometry& adv, std::uint64_t seed, std::size_t run,
                            std::size_t candidate_placements);

// Coordinate search over patch pixels maximizing the runner-up class margin
// of the unmasked pass. A soundness check runs whenever the unmasked
// prediction changes and once at the end of each run.
AttackReport greedy_attack(const Certifier& certifier, const Image& clean,
                           const AdversaryGeometry& adv, const GreedyAttackOptions& options);

}  // namespace maskcert
