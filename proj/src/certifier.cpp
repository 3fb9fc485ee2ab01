#include "maskcert/certifier.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>

#include "maskcert/errors.hpp"

namespace maskcert {

Certifier::Certifier(const VitModel& model, MaskPlan plan, CertifyOptions options)
    : model_(model), plan_(std::move(plan)), options_(options) {
  const ModelConfig& c = model_.config();
  if (plan_.grid_width != c.grid_width() || plan_.grid_height != c.grid_height()) {
    throw GeometryError("mask plan grid does not match the model's patch grid");
  }
  biases_.reserve(plan_.k());
  for (const MaskSpec& m : plan_.masks) {
    biases_.push_back(mask_to_bias(m, plan_.grid_width, plan_.grid_height));
  }
}

CertifiedOutput Certifier::certify(const Image& image) const {
  CertifiedOutput out;
  const Logits base = model_.forward(image);
  out.prediction = argmax(base);
  float runner_up = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (i != out.prediction) runner_up = std::max(runner_up, base[i]);
  }
  out.margin = base.size() > 1 ? base[out.prediction] - runner_up : 0.0f;

  const std::size_t k = biases_.size();
  out.votes.assign(k, 0);
  const std::size_t batch = options_.max_batch == 0 ? std::max<std::size_t>(k, 1) : options_.max_batch;
  std::exception_ptr failure;
  for (std::size_t start = 0; start < k; start += batch) {
    const auto end = static_cast<std::int64_t>(std::min(k, start + batch));
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t j = static_cast<std::int64_t>(start); j < end; ++j) {
      try {
        out.votes[j] = model_.predict(image, &biases_[j]);
      } catch (...) {
#pragma omp critical(maskcert_certify_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (out.votes[j] != out.prediction) out.dissent_masks.push_back(j);
  }
  out.verified = out.dissent_masks.empty();
  return out;
}

Rational Rational::of(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw PreconditionError("rational with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

Rational operator*(const Rational& a, const Rational& b) {
  // Cross-reduce first so products stay small.
  const Rational x = Rational::of(a.num, b.den);
  const Rational y = Rational::of(b.num, a.den);
  return Rational::of(x.num * y.num, x.den * y.den);
}

void EvalCounts::add(bool correct_prediction, bool verified_prediction) {
  ++total;
  correct += correct_prediction;
  verified += verified_prediction;
  verified_and_correct += correct_prediction && verified_prediction;
}

EvalCounts& EvalCounts::operator+=(const EvalCounts& o) {
  total += o.total;
  correct += o.correct;
  verified += o.verified;
  verified_and_correct += o.verified_and_correct;
  return *this;
}

EvalMetrics metrics_from_counts(const EvalCounts& counts) {
  if (counts.total == 0) throw PreconditionError("cannot compute metrics of an empty dataset");
  EvalMetrics m;
  m.counts = counts;
  m.acc_clean = Rational::of(counts.correct, counts.total);
  m.acc_certified = Rational::of(counts.verified_and_correct, counts.total);
  m.r_trust = Rational::of(counts.verified, counts.total);
  if (counts.verified > 0) {
    m.acc_in_trust = Rational::of(counts.verified_and_correct, counts.verified);
  }
  return m;
}

EvalMetrics evaluate(const Certifier& certifier, std::span<const LabeledImage> dataset,
                     const SampleSink& sink) {
  if (dataset.empty()) throw PreconditionError("evaluate: dataset is empty");
  const std::size_t classes = certifier.model().config().num_classes;
  for (const LabeledImage& s : dataset) {
    if (s.label >= classes) {
      throw PreconditionError("sample '" + s.id + "' has label " + std::to_string(s.label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<CertifiedOutput> outputs(dataset.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(dataset.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      outputs[i] = certifier.certify(dataset[i].image);
    } catch (...) {
#pragma omp critical(maskcert_evaluate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  EvalCounts counts;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    counts.add(outputs[i].prediction == dataset[i].label, outputs[i].verified);
    if (sink) sink(i, dataset[i], outputs[i]);
  }
  return metrics_from_counts(counts);
}

std::optional<PixelRect> difference_box(const Image& a, const Image& b) {
  if (a.pixels.shape() != b.pixels.shape()) throw DimensionError("difference_box: shape mismatch");
  std::size_t x0 = a.width(), y0 = a.height(), x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < a.height(); ++y) {
    for (std::size_t x = 0; x < a.width(); ++x) {
      for (std::size_t c = 0; c < a.channels(); ++c) {
        if (std::bit_cast<std::uint32_t>(a.at(y, x, c)) ==
            std::bit_cast<std::uint32_t>(b.at(y, x, c))) {
          continue;
        }
        any = true;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (!any) return std::nullopt;
  return PixelRect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

SoundnessVerdict soundness_check(const Certifier& certifier, const Image& clean,
                                 const CertifiedOutput& clean_output, const Image& adversarial,
                                 const AdversaryGeometry& adv) {
  if (const auto box = difference_box(clean, adversarial)) {
    if (box->width > adv.width || box->height > adv.height) {
      throw PreconditionError("adversarial image differs from the clean one over a " +
                              std::to_string(box->width) + "x" + std::to_string(box->height) +
                              " region, larger than the admissible " + std::to_string(adv.width) +
                              "x" + std::to_string(adv.height) + " patch");
    }
  }
  SoundnessVerdict verdict;
  verdict.clean = clean_output;
  verdict.adversarial = certifier.certify(adversarial);
  verdict.violation = verdict.clean.verified && verdict.adversarial.verified &&
                      verdict.clean.prediction != verdict.adversarial.prediction;
  return verdict;
}

SoundnessVerdict soundness_check(const Certifier& certifier, const Image& clean,
                                 const Image& adversarial, const AdversaryGeometry& adv) {
  return soundness_check(certifier, clean, certifier.certify(clean), adversarial, adv);
}

}  // namespace maskcert
