#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "hetdid/error.hpp"
#include "hetdid/panel.hpp"

using namespace hetdid;

namespace {

PanelDataset parse(const std::string& text, const ColumnMap& m = {}) {
  std::istringstream in(text);
  return read_csv(in, m);
}

ErrorCode code_of(const std::string& text, const ColumnMap& m = {}) {
  try {
    parse(text, m);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidSpec;
}

const char* kFig1 =
    "group,time,treatment,outcome\n"
    "e,1,0,0\ne,2,1,1\ne,3,1,4\n"
    "l,1,0,0\nl,2,0,0\nl,3,1,1\n";

}  // namespace

TEST(Panel, LoadsFigureOneDesign) {
  const PanelDataset d = parse(kFig1);
  EXPECT_EQ(d.n_groups(), 2u);
  EXPECT_EQ(d.n_periods(), 3u);
  EXPECT_EQ(d.n_rows(), 6u);
  EXPECT_EQ(d.weight_mode(), WeightMode::Uniform);
  for (const Cell& c : d.rows()) EXPECT_EQ(c.weight, 1.0);
  EXPECT_TRUE(d.is_balanced());
}

TEST(Panel, RowsSortedByGroupThenTime) {
  const PanelDataset d = parse("group,time,treatment,outcome\nb,2,0,1\na,2,0,2\nb,1,0,3\na,1,0,4\n");
  ASSERT_EQ(d.n_rows(), 4u);
  EXPECT_EQ(d.group_label(d.rows()[0].group), "a");
  EXPECT_EQ(d.rows()[0].time, 1);
  EXPECT_EQ(d.rows()[0].outcome, 4.0);
  EXPECT_EQ(d.rows()[3].outcome, 1.0);
}

TEST(Panel, NumericLabelsSortNumerically) {
  const PanelDataset d = parse("group,time,treatment,outcome\n10,1,0,0\n10,2,0,0\n9,1,0,0\n9,2,0,0\n");
  EXPECT_EQ(d.group_label(0), "9");
  EXPECT_EQ(d.group_label(1), "10");
}

TEST(Panel, DuplicateCellIsRejectedWithRow) {
  const std::string text = std::string(kFig1) + "e,2,1,7\n";
  EXPECT_EQ(code_of(text), ErrorCode::DuplicateCell);
  try {
    parse(text);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos) << e.what();
  }
}

TEST(Panel, ValidationErrors) {
  EXPECT_EQ(code_of("group,time,outcome\na,1,0\n"), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of("group,time,treatment,outcome\na,1,0,nan\na,2,0,1\nb,1,0,1\nb,2,0,1\n"),
            ErrorCode::NonFiniteValue);
  EXPECT_EQ(code_of("group,time,treatment,outcome\na,1,0,\na,2,0,1\nb,1,0,1\nb,2,0,1\n"),
            ErrorCode::NonFiniteValue);
  EXPECT_EQ(code_of("group,time,treatment,outcome,weight\na,1,0,1,0\na,2,0,1,1\nb,1,0,1,1\nb,2,0,1,1\n"),
            ErrorCode::NonPositiveWeight);
  EXPECT_EQ(code_of("group,time,treatment,outcome\na,1.5,0,1\na,2,0,1\nb,1,0,1\nb,2,0,1\n"),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of("group,time,treatment,outcome\na,1,0,1\na,2,0,1\n"), ErrorCode::TooFewGroups);
  EXPECT_EQ(code_of("group,time,treatment,outcome\na,1,0,1\nb,1,0,1\n"), ErrorCode::TooFewPeriods);
}

TEST(Panel, RequiredWeightColumn) {
  ColumnMap m;
  m.weight_required = true;
  EXPECT_EQ(code_of(kFig1, m), ErrorCode::MissingColumn);
}

TEST(Panel, CustomColumnNames) {
  ColumnMap m;
  m.group = "state";
  m.time = "year";
  m.treatment = "law";
  m.outcome = "rate";
  const PanelDataset d = parse("year,state,rate,law\n1,a,1,0\n2,a,2,1\n1,b,3,0\n2,b,4,0\n", m);
  EXPECT_EQ(d.n_groups(), 2u);
  EXPECT_EQ(d.find(0, 2)->treatment, 1.0);
  EXPECT_EQ(d.find(1, 2)->outcome, 4.0);
}

TEST(Design, FigureOne) {
  const DesignInfo info = derive_design(parse(kFig1));
  EXPECT_EQ(info.first_switch[0], SwitchDate(2));
  EXPECT_EQ(info.first_switch[1], SwitchDate(3));
  EXPECT_TRUE(info.is_binary);
  EXPECT_TRUE(info.is_staggered);
  ASSERT_TRUE(info.last_untreated_period);
  EXPECT_EQ(*info.last_untreated_period, 2);
  EXPECT_EQ(info.cohorts.size(), 2u);
}

TEST(Design, AllZeroTreatment) {
  const DesignInfo info = derive_design(parse("group,time,treatment,outcome\na,1,0,1\na,2,0,1\nb,1,0,1\nb,2,0,1\n"));
  for (const SwitchDate& f : info.first_switch) EXPECT_TRUE(f.is_never());
  EXPECT_TRUE(info.cohorts.empty());
}

TEST(Design, FirstDeviationFromBaseline) {
  const DesignInfo info =
      derive_design(parse("group,time,treatment,outcome\na,1,0,1\na,2,2,1\na,3,1,1\nb,1,0,1\nb,2,0,1\nb,3,0,1\n"));
  EXPECT_EQ(info.first_switch[0], SwitchDate(2));
  EXPECT_FALSE(info.is_staggered);
  EXPECT_FALSE(info.is_binary);
}

TEST(Design, SwitchDateOrdering) {
  EXPECT_LT(SwitchDate(3), SwitchDate::never());
  EXPECT_LT(SwitchDate(2), SwitchDate(3));
  EXPECT_TRUE(SwitchDate::never() > 1000000);
  EXPECT_FALSE(SwitchDate(4) > 4);
}

TEST(Design, LateEntrantUsesFirstObservedBaseline) {
  PanelBuilder b;
  b.add("a", 1, 0, 0);
  b.add("a", 2, 1, 0);
  b.add("a", 3, 1, 0);
  b.add("b", 2, 1, 0);
  b.add("b", 3, 0, 0);
  const DesignInfo info = derive_design(b.build());
  EXPECT_EQ(info.baseline_treatment[1], 1.0);
  EXPECT_EQ(info.first_switch[1], SwitchDate(3));
  ASSERT_EQ(info.late_entrants.size(), 1u);
  EXPECT_EQ(info.late_entrants[0], 1u);
}

TEST(Design, IndependentOfRowOrder) {
  std::vector<std::string> lines{"a,1,0,1", "a,2,1,2", "a,3,1,3", "b,1,0,4", "b,2,0,5",
                                 "b,3,1,6", "c,1,0,7", "c,2,0,8", "c,3,0,9"};
  const DesignInfo ref = derive_design(parse("group,time,treatment,outcome\n" + lines[0] + "\n" + lines[1] + "\n" +
                                             lines[2] + "\n" + lines[3] + "\n" + lines[4] + "\n" + lines[5] + "\n" +
                                             lines[6] + "\n" + lines[7] + "\n" + lines[8] + "\n"));
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(lines.begin(), lines.end(), rng);
    std::string text = "group,time,treatment,outcome\n";
    for (const auto& l : lines) text += l + "\n";
    const PanelDataset d = parse(text);
    const DesignInfo info = derive_design(d);
    EXPECT_EQ(info.first_switch, ref.first_switch);
    EXPECT_EQ(info.baseline_treatment, ref.baseline_treatment);
    EXPECT_EQ(info.cohorts, ref.cohorts);
    const DesignInfo again = derive_design(d);
    EXPECT_EQ(again.first_switch, info.first_switch);
  }
}

TEST(Balance, Reports) {
  EXPECT_TRUE(balance_report(parse(kFig1)).balanced);
  EXPECT_TRUE(balance_report(parse(kFig1)).missing.empty());

  const PanelDataset d = parse("group,time,treatment,outcome\na,1,0,0\na,2,0,0\na,3,0,0\nb,1,0,0\nb,3,0,0\n");
  const BalanceReport r = balance_report(d);
  EXPECT_FALSE(r.balanced);
  ASSERT_EQ(r.missing.size(), 1u);
  EXPECT_EQ(r.missing[0].first, "b");
  EXPECT_EQ(r.missing[0].second, 2);

  PanelBuilder one;
  one.add("a", 1, 0, 0);
  one.add("a", 2, 0, 1);
  EXPECT_TRUE(balance_report(one.build(ShapeCheck::None)).balanced);
}

TEST(Csv, RoundTripIsBitExact) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1e3);
  std::uniform_real_distribution<double> unif(0.1, 100.0);
  PanelBuilder b;
  for (int g = 0; g < 5; ++g) {
    for (int t = 1990; t < 1996; ++t) {
      b.add("g" + std::to_string(g), t, t > 1992 ? 1.0 : 0.0, normal(rng) / 7.0, unif(rng), normal(rng) * 1e-9);
    }
  }
  const PanelDataset d = b.build();
  std::ostringstream first;
  write_csv(d, first);
  std::istringstream in(first.str());
  const PanelDataset back = read_csv(in);
  ASSERT_EQ(back.n_rows(), d.n_rows());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    EXPECT_EQ(back.rows()[r].outcome, d.rows()[r].outcome);
    EXPECT_EQ(back.rows()[r].weight, d.rows()[r].weight);
    EXPECT_EQ(back.rows()[r].proxy, d.rows()[r].proxy);
    EXPECT_EQ(back.rows()[r].time, d.rows()[r].time);
  }
  std::ostringstream second;
  write_csv(back, second);
  EXPECT_EQ(first.str(), second.str());
}

TEST(Csv, FormatNumberRoundTrips) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = unif(rng) / 3.0;
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(2.0), "2");
}

TEST(Csv, LoadsPackagedSample) {
  const PanelDataset d = load_csv(std::string(HETDID_DATA_DIR) + "/fig1.csv");
  EXPECT_EQ(d.n_groups(), 2u);
  EXPECT_EQ(d.n_periods(), 3u);
  EXPECT_THROW(load_csv(std::string(HETDID_DATA_DIR) + "/missing.csv"), Error);
}

TEST(Panel, WithOutcomesKeepsDesign) {
  const PanelDataset d = parse(kFig1);
  std::vector<double> y(d.n_rows(), 3.0);
  const PanelDataset e = d.with_outcomes(y);
  EXPECT_EQ(e.n_rows(), d.n_rows());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    EXPECT_EQ(e.rows()[r].outcome, 3.0);
    EXPECT_EQ(e.rows()[r].treatment, d.rows()[r].treatment);
  }
}
