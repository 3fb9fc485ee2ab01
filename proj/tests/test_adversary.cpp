#include <gtest/gtest.h>
#include <omp.h>

#include "maskcert/adversary.hpp"
#include "maskcert/errors.hpp"
#include "maskcert/report.hpp"
#include "test_support.hpp"

using namespace maskcert;
using namespace maskcert::testing;

namespace {

struct Fixture {
  VitModel model = brightness_model();
  AdversaryGeometry adv{5, 5};
  Certifier cert{model, build_plan(model.config(), adv)};
  std::vector<LabeledImage> data = brightness_images(model.config(), 6, 11);
};

std::string dump(const AttackReport& r) { return attack_to_json(r, true).dump(); }

}  // namespace

TEST(ApplyPatch, WritesClampedContent) {
  const ModelConfig c = toy_config();
  const Image img = Image::blank(c, 0.5f);
  PatchPlacement p{{2, 3, 2, 1}, Tensor({1, 2, 3}, std::vector<float>{2, -1, 0.25f, 0, 0, 0})};
  const Image out = apply_patch(img, p);
  EXPECT_EQ(out.at(3, 2, 0), 1.0f);
  EXPECT_EQ(out.at(3, 2, 1), 0.0f);
  EXPECT_EQ(out.at(3, 2, 2), 0.25f);
  EXPECT_EQ(out.at(3, 4, 0), 0.5f);
  EXPECT_EQ(difference_box(img, out), (PixelRect{2, 3, 2, 1}));
}

TEST(ApplyPatch, RejectsBadPlacement) {
  const ModelConfig c = toy_config();
  const Image img = Image::blank(c);
  EXPECT_THROW(apply_patch(img, {{23, 0, 2, 1}, Tensor({1, 2, 3})}), GeometryError);
  EXPECT_THROW(apply_patch(img, {{0, 0, 2, 1}, Tensor({2, 1, 3})}), GeometryError);
}

TEST(RandomAttack, SoundUnderCorrectMasking) {
  Fixture f;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    RandomAttackOptions o;
    o.trials = 40;
    o.seed = i;
    const AttackReport r = random_attack(f.cert, f.data[i].image, f.adv, o);
    EXPECT_EQ(r.trials, 40u);
    EXPECT_EQ(r.soundness_checks, 40u);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_LE(r.flipped_detected, r.flipped);
    EXPECT_EQ(r.flipped_detected, r.flipped);
    EXPECT_FALSE(r.first_violation.has_value());
  }
}

TEST(RandomAttack, DeterministicAcrossRunsAndThreads) {
  Fixture f;
  RandomAttackOptions o;
  o.trials = 30;
  o.seed = 123;
  o.keep_log = true;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const std::string a = dump(random_attack(f.cert, f.data[0].image, f.adv, o));
  omp_set_num_threads(4);
  const std::string b = dump(random_attack(f.cert, f.data[0].image, f.adv, o));
  const std::string c = dump(random_attack(f.cert, f.data[0].image, f.adv, o));
  omp_set_num_threads(saved);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b, c);
  o.seed = 124;
  EXPECT_NE(a, dump(random_attack(f.cert, f.data[0].image, f.adv, o)));
}

TEST(RandomAttack, PlacementsRespectAdversaryBound) {
  Fixture f;
  RandomAttackOptions o;
  o.trials = 200;
  o.keep_log = true;
  const AttackReport r = random_attack(f.cert, f.data[1].image, f.adv, o);
  ASSERT_EQ(r.log.size(), 200u);
  bool saw_small = false, saw_full = false;
  for (const AttackTrial& t : r.log) {
    EXPECT_LE(t.rect.width, 5u);
    EXPECT_LE(t.rect.height, 5u);
    EXPECT_LE(t.rect.x + t.rect.width, 24u);
    EXPECT_LE(t.rect.y + t.rect.height, 24u);
    saw_full |= t.rect.width == 5 && t.rect.height == 5;
    saw_small |= t.rect.width < 5;
  }
  EXPECT_TRUE(saw_small);
  EXPECT_TRUE(saw_full);
}

TEST(RandomAttack, DisabledMaskingProducesReproducibleCounterexample) {
  Fixture f;
  f.model.set_masking_mode(MaskingMode::kIgnoreMask);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < f.data.size() && violations == 0; ++i) {
    RandomAttackOptions o;
    o.trials = 200;
    o.seed = 5;
    const AttackReport r = random_attack(f.cert, f.data[i].image, f.adv, o);
    violations += r.violations;
    if (!r.first_violation) continue;
    const Counterexample& cx = *r.first_violation;
    const Image replay = apply_patch(f.data[i].image, cx.placement);
    EXPECT_EQ(replay, cx.adversarial);
    const CertifiedOutput out = f.cert.certify(replay);
    EXPECT_TRUE(out.verified);
    EXPECT_NE(out.prediction, r.clean_prediction);
  }
  EXPECT_GT(violations, 0u);
}

TEST(RandomAttack, RejectsBadOptions) {
  Fixture f;
  RandomAttackOptions o;
  o.trials = 0;
  EXPECT_THROW(random_attack(f.cert, f.data[0].image, f.adv, o), PreconditionError);
  o.trials = 1;
  EXPECT_THROW(random_attack(f.cert, f.data[0].image, {25, 1}, o), GeometryError);
}

TEST(GreedyAttack, FlipsAreDetected) {
  Fixture f;
  GreedyAttackOptions o;
  o.runs = 3;
  o.steps = 80;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    o.seed = i;
    const AttackReport r = greedy_attack(f.cert, f.data[i].image, f.adv, o);
    EXPECT_EQ(r.violations, 0u);
    EXPECT_EQ(r.flipped_detected, r.flipped);
    EXPECT_GE(r.soundness_checks, 3u);
    flipped += r.flipped;
  }
  // The search is strong enough to move the unmasked prediction.
  EXPECT_GT(flipped, 0u);
}

TEST(GreedyAttack, DeterministicAcrossThreads) {
  Fixture f;
  GreedyAttackOptions o;
  o.runs = 4;
  o.steps = 20;
  o.seed = 9;
  o.keep_log = true;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const std::string a = dump(greedy_attack(f.cert, f.data[2].image, f.adv, o));
  omp_set_num_threads(3);
  const std::string b = dump(greedy_attack(f.cert, f.data[2].image, f.adv, o));
  omp_set_num_threads(saved);
  EXPECT_EQ(a, b);
}

TEST(GreedyAttack, StartIsFullSizeAndSeeded) {
  Fixture f;
  const PatchPlacement a = greedy_start(f.cert, f.data[0].image, f.adv, 4, 0, 8);
  const PatchPlacement b = greedy_start(f.cert, f.data[0].image, f.adv, 4, 0, 8);
  EXPECT_EQ(a.rect, b.rect);
  EXPECT_EQ(a.content, b.content);
  EXPECT_EQ(a.rect.width, 5u);
  EXPECT_EQ(a.rect.height, 5u);
}

TEST(GreedyAttack, DisabledMaskingIsCaught) {
  Fixture f;
  f.model.set_masking_mode(MaskingMode::kIgnoreMask);
  GreedyAttackOptions o;
  o.runs = 2;
  o.steps = 120;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    o.seed = i;
    violations += greedy_attack(f.cert, f.data[i].image, f.adv, o).violations;
  }
  EXPECT_GT(violations, 0u);
}
