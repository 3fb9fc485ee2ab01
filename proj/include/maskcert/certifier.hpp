#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskcert/mask_plan.hpp"
#include "maskcert/model.hpp"

namespace maskcert {

// Result of the defended classifier on one image.
struct CertifiedOutput {
  std::size_t prediction = 0;               // unmasked pass
  bool verified = false;                    // every masked vote equals prediction
  std::vector<std::size_t> votes;           // one per mask, plan order
  std::vector<std::size_t> dissent_masks;   // indices into plan.masks
  float margin = 0.0f;                      // unmasked top-1 minus runner-up logit
};

struct CertifyOptions {
  // Masked passes evaluated per parallel batch; 0 runs all k at once.
  std::size_t max_batch = 0;
};

// Runs the unmasked pass plus one pass per mask and applies the consensus
// rule. Holds references; the model must outlive it.
class Certifier {
 public:
  // Throws GeometryError if the plan was built for a different patch grid.
  Certifier(const VitModel& model, MaskPlan plan, CertifyOptions options = {});

  const VitModel& model() const { return model_; }
  const MaskPlan& plan() const { return plan_; }

  CertifiedOutput certify(const Image& image) const;

 private:
  const VitModel& model_;
  MaskPlan plan_;
  CertifyOptions options_;
  std::vector<AttentionBias> biases_;
};

// Exact ratio of two counts, kept in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational of(std::uint64_t num, std::uint64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

Rational operator*(const Rational& a, const Rational& b);

struct EvalCounts {
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  std::uint64_t verified = 0;
  std::uint64_t verified_and_correct = 0;

  void add(bool correct_prediction, bool verified_prediction);
  EvalCounts& operator+=(const EvalCounts& other);
  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct EvalMetrics {
  EvalCounts counts;
  Rational acc_clean;
  Rational acc_certified;
  Rational r_trust;
  std::optional<Rational> acc_in_trust;  // empty when nothing verified
};

// Throws PreconditionError when counts.total == 0.
EvalMetrics metrics_from_counts(const EvalCounts& counts);

struct LabeledImage {
  std::string id;
  Image image;
  std::size_t label = 0;
};

using SampleSink =
    std::function<void(std::size_t index, const LabeledImage& sample, const CertifiedOutput& out)>;

// Certifies every sample (in parallel) and aggregates the four metrics.
// The sink, if given, is called in dataset order after all samples finish.
EvalMetrics evaluate(const Certifier& certifier, std::span<const LabeledImage> dataset,
                     const SampleSink& sink = {});

struct SoundnessVerdict {
  bool violation = false;
  CertifiedOutput clean;
  CertifiedOutput adversarial;
};

// Bounding box of pixels where the two images differ, or nullopt if equal.
std::optional<PixelRect> difference_box(const Image& a, const Image& b);

// VIOLATION iff both images verify and their predictions differ. Throws
// PreconditionError when the images differ outside a single rectangle of at
// most the adversary's size.
SoundnessVerdict soundness_check(const Certifier& certifier, const Image& clean,
                                 const Image& adversarial, const AdversaryGeometry& adv);
SoundnessVerdict soundness_check(const Certifier& certifier, const Image& clean,
                                 const CertifiedOutput& clean_output, const Image& adversarial,
                                 const AdversaryGeometry& adv);

}  // namespace maskcert
