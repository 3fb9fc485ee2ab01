#include <gtest/gtest.h>

#include "maskcert/report.hpp"

using namespace maskcert;

TEST(Report, PlanDocument) {
  const MaskPlan plan = build_plan(GridGeometry{30, 30, 10}, {5, 5});
  EXPECT_EQ(plan_to_json(plan).dump(),
            R"({"grid":[3,3],"extent":[2,2],"k":4,"origins":[[0,0],[1,0],[0,1],[1,1]]})");
}

TEST(Report, CertifiedOutputDocument) {
  CertifiedOutput out;
  out.prediction = 2;
  out.verified = false;
  out.votes = {2, 1, 2};
  out.dissent_masks = {1};
  out.margin = 0.5f;
  EXPECT_EQ(certified_to_json(out).dump(),
            R"({"prediction":2,"verified":false,"k":3,"votes":[2,1,2],"dissent_masks":[1],"margin":0.5})");
}

TEST(Report, MetricsDocument) {
  EvalCounts c;
  c.add(true, true);
  c.add(true, false);
  c.add(false, true);
  c.add(false, false);
  EXPECT_EQ(metrics_to_json(metrics_from_counts(c)).dump(),
            R"({"acc_clean":0.5,"acc_certified":0.25,"r_trust":0.5,"acc_in_trust":0.5,)"
            R"("counts":{"total":4,"correct":2,"verified":2,"verified_and_correct":1}})");
  EvalCounts none;
  none.add(true, false);
  EXPECT_TRUE(metrics_to_json(metrics_from_counts(none))["acc_in_trust"].is_null());
}

TEST(Report, CsvRows) {
  CertifiedOutput out;
  out.prediction = 1;
  out.verified = true;
  out.votes = {1, 1};
  EXPECT_EQ(csv_row("img-1.ppm", 1, out), "img-1.ppm,1,1,1,0");
  out.verified = false;
  out.dissent_masks = {0, 1};
  EXPECT_EQ(csv_row("a,\"b\"", 0, out), "\"a,\"\"b\"\"\",0,1,0,2");
  EXPECT_STREQ(kCsvHeader, "id,label,prediction,verified,num_dissent");
}

TEST(Report, AttackDocument) {
  AttackReport r;
  r.mode = "random";
  r.seed = 7;
  r.trials = 2;
  r.log.push_back({0, {1, 2, 3, 4}, PatchPattern::kCheckerboard, 1, false, false, 0});
  const Json brief = attack_to_json(r, false);
  EXPECT_FALSE(brief.contains("trial_log"));
  EXPECT_FALSE(brief.contains("first_violation"));
  const Json full = attack_to_json(r, true);
  ASSERT_EQ(full["trial_log"].size(), 1u);
  EXPECT_EQ(full["trial_log"][0]["pattern"], "checkerboard");
  EXPECT_EQ(full["trial_log"][0]["placement"].dump(), R"({"x":1,"y":2,"width":3,"height":4})");
}
