#include "maskcert/adversary.hpp"

#include <algorithm>
#include <exception>
#include <limits>

#include "maskcert/errors.hpp"
#include "maskcert/random.hpp"

namespace maskcert {
namespace {

// Substream tags so the random and greedy attacks never share a stream.
constexpr std::uint64_t kRandomTag = 0x72616e64;  // "rand"
constexpr std::uint64_t kGreedyTag = 0x67726479;  // "grdy"

PixelRect random_rect(Rng& rng, const Image& image, const AdversaryGeometry& adv, bool full_size) {
  PixelRect r;
  r.width = full_size ? adv.width : 1 + rng.below(adv.width);
  r.height = full_size ? adv.height : 1 + rng.below(adv.height);
  r.x = rng.below(image.width() - r.width + 1);
  r.y = rng.below(image.height() - r.height + 1);
  return r;
}

Tensor uniform_content(Rng& rng, const PixelRect& r, std::size_t channels) {
  Tensor t({r.height, r.width, channels});
  for (float& v : t.data()) v = rng.uniform();
  return t;
}

Tensor make_content(Rng& rng, PatchPattern pattern, const PixelRect& r, const Image& clean,
                    std::span<const Image> donors) {
  const std::size_t ch = clean.channels();
  Tensor t({r.height, r.width, ch});
  switch (pattern) {
    case PatchPattern::kUniform:
    case PatchPattern::kGreedy:
      return uniform_content(rng, r, ch);
    case PatchPattern::kConstant: {
      std::vector<float> colour(ch);
      for (float& c : colour) c = rng.uniform();
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = colour[i % ch];
      return t;
    }
    case PatchPattern::kCheckerboard: {
      std::vector<float> a(ch), b(ch);
      for (std::size_t c = 0; c < ch; ++c) {
        a[c] = rng.uniform();
        b[c] = rng.uniform();
      }
      const std::size_t cell = 1 + rng.below(4);
      for (std::size_t y = 0; y < r.height; ++y) {
        for (std::size_t x = 0; x < r.width; ++x) {
          const auto& colour = ((y / cell + x / cell) % 2 == 0) ? a : b;
          for (std::size_t c = 0; c < ch; ++c) t[(y * r.width + x) * ch + c] = colour[c];
        }
      }
      return t;
    }
    case PatchPattern::kCopied: {
      const Image& src = donors.empty() ? clean : donors[rng.below(donors.size())];
      const std::size_t sx = rng.below(src.width() - r.width + 1);
      const std::size_t sy = rng.below(src.height() - r.height + 1);
      for (std::size_t y = 0; y < r.height; ++y) {
        for (std::size_t x = 0; x < r.width; ++x) {
          for (std::size_t c = 0; c < ch; ++c) {
            t[(y * r.width + x) * ch + c] = src.at(sy + y, sx + x, c);
          }
        }
      }
      return t;
    }
  }
  return t;
}

// Margin of `target` over the best other class.
float target_margin(const Logits& logits, std::size_t target) {
  float best_other = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != target) best_other = std::max(best_other, logits[i]);
  }
  return logits[target] - best_other;
}

std::size_t runner_up(const Logits& logits, std::size_t top) {
  std::size_t best = top == 0 ? 1 : 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != top && logits[i] > logits[best]) best = i;
  }
  return best;
}

void check_adversary(const Image& image, const AdversaryGeometry& adv) {
  if (adv.width == 0 || adv.height == 0 || adv.width > image.width() ||
      adv.height > image.height()) {
    throw GeometryError("adversary rectangle does not fit the image");
  }
}

struct TrialResult {
  AttackTrial trial;
  bool flipped = false;
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::optional<Counterexample> counterexample;
};

AttackReport aggregate(std::string mode, std::uint64_t seed, const CertifiedOutput& clean,
                       std::vector<TrialResult>& results, bool keep_log) {
  AttackReport report;
  report.mode = std::move(mode);
  report.seed = seed;
  report.trials = results.size();
  report.clean_prediction = clean.prediction;
  report.clean_verified = clean.verified;
  for (TrialResult& r : results) {
    report.flipped += r.flipped;
    report.detected += !r.trial.verified;
    report.flipped_detected += r.flipped && !r.trial.verified;
    report.soundness_checks += r.checks;
    report.violations += r.violations;
    if (r.counterexample && !report.first_violation) report.first_violation = std::move(r.counterexample);
    if (keep_log) report.log.push_back(r.trial);
  }
  return report;
}

template <typename Body>
void parallel_trials(std::size_t n, Body&& body) {
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(maskcert_attack_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

const char* pattern_name(PatchPattern p) {
  switch (p) {
    case PatchPattern::kUniform: return "uniform";
    case PatchPattern::kConstant: return "constant";
    case PatchPattern::kCheckerboard: return "checkerboard";
    case PatchPattern::kCopied: return "copied";
    case PatchPattern::kGreedy: return "greedy";
  }
  return "unknown";
}

Image apply_patch(const Image& image, const PatchPlacement& placement) {
  const PixelRect& r = placement.rect;
  if (r.width == 0 || r.height == 0 || r.x + r.width > image.width() ||
      r.y + r.height > image.height()) {
    throw GeometryError("patch placement is outside the image");
  }
  if (placement.content.shape() != Shape{r.height, r.width, image.channels()}) {
    throw GeometryError("patch content shape " + shape_to_string(placement.content.shape()) +
                        " does not match its placement");
  }
  Image out = image;
  const std::size_t ch = image.channels();
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        out.at(r.y + y, r.x + x, c) =
            std::clamp(placement.content[(y * r.width + x) * ch + c], 0.0f, 1.0f);
      }
    }
  }
  return out;
}

AttackReport random_attack(const Certifier& certifier, const Image& clean,
                           const AdversaryGeometry& adv, const RandomAttackOptions& options) {
  if (options.trials == 0) throw PreconditionError("random_attack: trials must be >= 1");
  check_adversary(clean, adv);
  for (const Image& d : options.donors) {
    if (d.width() < adv.width || d.height() < adv.height || d.channels() != clean.channels()) {
      throw PreconditionError("random_attack: donor image incompatible with the adversary");
    }
  }
  const CertifiedOutput clean_out = certifier.certify(clean);
  std::vector<TrialResult> results(options.trials);
  parallel_trials(options.trials, [&](std::size_t i) {
    Rng rng{options.seed, kRandomTag, i};
    const auto pattern = static_cast<PatchPattern>(rng.below(4));
    PatchPlacement placement;
    placement.rect = random_rect(rng, clean, adv, rng.below(2) == 0);
    placement.content = make_content(rng, pattern, placement.rect, clean, options.donors);
    Image adversarial = apply_patch(clean, placement);
    const SoundnessVerdict v = soundness_check(certifier, clean, clean_out, adversarial, adv);

    TrialResult& r = results[i];
    r.trial = {i, placement.rect, pattern, v.adversarial.prediction, v.adversarial.verified,
               v.violation, 0};
    r.flipped = v.adversarial.prediction != clean_out.prediction;
    r.checks = 1;
    r.violations = v.violation;
    if (v.violation) {
      r.counterexample = Counterexample{i, std::move(placement), std::move(adversarial), v.adversarial};
    }
  });
  return aggregate("random", options.seed, clean_out, results, options.keep_log);
}

PatchPlacement greedy_start(const Certifier& certifier, const Image& clean,
                            const AdversaryGeometry& adv, std::uint64_t seed, std::size_t run,
                            std::size_t candidate_placements) {
  check_adversary(clean, adv);
  const Logits base = certifier.model().forward(clean);
  const std::size_t target = runner_up(base, argmax(base));
  Rng rng{seed, kGreedyTag, run};
  PatchPlacement best;
  float best_score = -std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < std::max<std::size_t>(candidate_placements, 1); ++c) {
    PatchPlacement p;
    p.rect = random_rect(rng, clean, adv, true);
    p.content = uniform_content(rng, p.rect, clean.channels());
    const float score = target_margin(certifier.model().forward(apply_patch(clean, p)), target);
    if (score > best_score) {
      best_score = score;
      best = std::move(p);
    }
  }
  return best;
}

AttackReport greedy_attack(const Certifier& certifier, const Image& clean,
                           const AdversaryGeometry& adv, const GreedyAttackOptions& options) {
  if (options.runs == 0) throw PreconditionError("greedy_attack: runs must be >= 1");
  check_adversary(clean, adv);
  const VitModel& model = certifier.model();
  const CertifiedOutput clean_out = certifier.certify(clean);
  const Logits base = model.forward(clean);
  const std::size_t target = runner_up(base, clean_out.prediction);
  const std::size_t ch = clean.channels();

  std::vector<TrialResult> results(options.runs);
  parallel_trials(options.runs, [&](std::size_t run) {
    TrialResult& r = results[run];
    PatchPlacement p = greedy_start(certifier, clean, adv, options.seed, run,
                                    options.candidate_placements);
    // Separate stream from greedy_start so steps=0 leaves the start untouched.
    Rng rng{options.seed, kGreedyTag, run, 1};
    Image current = apply_patch(clean, p);
    Logits logits = model.forward(current);
    float score = target_margin(logits, target);
    std::size_t prediction = argmax(logits);
    std::size_t accepted = 0;

    auto check = [&](const Image& candidate, const PatchPlacement& placement) {
      const SoundnessVerdict v = soundness_check(certifier, clean, clean_out, candidate, adv);
      ++r.checks;
      if (v.violation) {
        ++r.violations;
        if (!r.counterexample) r.counterexample = Counterexample{run, placement, candidate, v.adversarial};
      }
      return v;
    };

    for (std::size_t step = 0; step < options.steps; ++step) {
      PatchPlacement trial = p;
      const std::size_t py = rng.below(p.rect.height), px = rng.below(p.rect.width);
      float* pixel = trial.content.raw() + (py * p.rect.width + px) * ch;
      switch (rng.below(3)) {
        case 0:
          for (std::size_t c = 0; c < ch; ++c) pixel[c] = rng.uniform();
          break;
        case 1:
          for (std::size_t c = 0; c < ch; ++c) pixel[c] = static_cast<float>(rng.below(2));
          break;
        default:
          pixel[rng.below(ch)] = static_cast<float>(rng.below(2));
          break;
      }
      Image candidate = apply_patch(clean, trial);
      const Logits next = model.forward(candidate);
      const float next_score = target_margin(next, target);
      if (!(next_score > score)) continue;
      ++accepted;
      const std::size_t next_prediction = argmax(next);
      p = std::move(trial);
      current = std::move(candidate);
      score = next_score;
      if (next_prediction != prediction && next_prediction != clean_out.prediction) {
        check(current, p);
      }
      prediction = next_prediction;
    }

    const SoundnessVerdict final_verdict = check(current, p);
    r.trial = {run,
               p.rect,
               PatchPattern::kGreedy,
               final_verdict.adversarial.prediction,
               final_verdict.adversarial.verified,
               r.violations > 0,
               accepted};
    r.flipped = final_verdict.adversarial.prediction != clean_out.prediction;
  });
  return aggregate("greedy", options.seed, clean_out, results, options.keep_log);
}

}  // namespace maskcert
