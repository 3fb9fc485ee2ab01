#include "maskcert/report.hpp"

namespace maskcert {

Json plan_to_json(const MaskPlan& plan) {
  Json origins = Json::array();
  for (const MaskSpec& m : plan.masks) origins.push_back({m.col, m.row});
  return Json{{"grid", {plan.grid_width, plan.grid_height}},
              {"extent", {plan.extent.cols, plan.extent.rows}},
              {"k", plan.k()},
              {"origins", std::move(origins)}};
}

Json certified_to_json(const CertifiedOutput& out) {
  return Json{{"prediction", out.prediction},
              {"verified", out.verified},
              {"k", out.votes.size()},
              {"votes", out.votes},
              {"dissent_masks", out.dissent_masks},
              {"margin", out.margin}};
}

Json metrics_to_json(const EvalMetrics& m) {
  Json j{{"acc_clean", m.acc_clean.value()},
         {"acc_certified", m.acc_certified.value()},
         {"r_trust", m.r_trust.value()},
         {"acc_in_trust", nullptr},
         {"counts",
          {{"total", m.counts.total},
           {"correct", m.counts.correct},
           {"verified", m.counts.verified},
           {"verified_and_correct", m.counts.verified_and_correct}}}};
  if (m.acc_in_trust) j["acc_in_trust"] = m.acc_in_trust->value();
  return j;
}

Json placement_to_json(const PixelRect& r) {
  return Json{{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}};
}

Json attack_to_json(const AttackReport& r, bool verbose) {
  Json j{{"mode", r.mode},
         {"seed", r.seed},
         {"trials", r.trials},
         {"clean_prediction", r.clean_prediction},
         {"clean_verified", r.clean_verified},
         {"flipped", r.flipped},
         {"detected", r.detected},
         {"flipped_detected", r.flipped_detected},
         {"soundness_checks", r.soundness_checks},
         {"violations", r.violations}};
  if (r.first_violation) {
    j["first_violation"] = {{"trial", r.first_violation->trial},
                            {"placement", placement_to_json(r.first_violation->placement.rect)},
                            {"prediction", r.first_violation->adversarial_output.prediction}};
  }
  if (verbose) {
    Json log = Json::array();
    for (const AttackTrial& t : r.log) {
      log.push_back({{"index", t.index},
                     {"placement", placement_to_json(t.rect)},
                     {"pattern", pattern_name(t.pattern)},
                     {"prediction", t.prediction},
                     {"verified", t.verified},
                     {"violation", t.violation},
                     {"steps_accepted", t.steps_accepted}});
    }
    j["trial_log"] = std::move(log);
  }
  return j;
}

std::string csv_row(const std::string& id, std::size_t label, const CertifiedOutput& out) {
  std::string quoted = id;
  if (id.find_first_of(",\"\n") != std::string::npos) {
    quoted = "\"";
    for (char c : id) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    quoted += "\"";
  }
  return quoted + "," + std::to_string(label) + "," + std::to_string(out.prediction) + "," +
         (out.verified ? "1" : "0") + "," + std::to_string(out.dissent_masks.size());
}

}  // namespace maskcert
