#include <gtest/gtest.h>

#include <cmath>

#include "itrack/errors.hpp"
#include "itrack/market_data.hpp"
#include "test_util.hpp"

namespace itrack {
namespace {

using testing::TempDir;
using testing::write_text;

constexpr const char* kPrices =
    "date,instrument,close\n"
    "2024-01-02,AAA,10\n"
    "2024-01-02,BBB,20\n"
    "2024-01-02,IDX,100\n"
    "2024-01-03,AAA,11\n"
    "2024-01-03,BBB,19\n"
    "2024-01-03,IDX,101\n"
    "2024-01-04,AAA,12\n"
    "2024-01-04,BBB,21\n"
    "2024-01-04,IDX,103\n";

constexpr const char* kWeights =
    "date,instrument,weight\n"
    "2024-01-02,AAA,0.4\n"
    "2024-01-02,BBB,0.6\n"
    "2024-01-03,AAA,0.5\n"
    "2024-01-03,BBB,0.5\n"
    "2024-01-04,AAA,0.25\n"
    "2024-01-04,BBB,0.75\n";

TEST(Date, ParsesAndFormats) {
  const Date d = Date::parse("2024-02-29");
  EXPECT_EQ(d.iso(), "2024-02-29");
  EXPECT_EQ(d.year(), 2024);
  EXPECT_EQ(Date::from_ymd(1970, 1, 1).days(), 0);
  EXPECT_THROW(Date::parse("2023-02-29"), std::invalid_argument);
  EXPECT_THROW(Date::parse("2024-1-02"), std::invalid_argument);
}

TEST(Date, WeekdayCalendarSkipsWeekends) {
  const auto cal = TradingCalendar::weekdays(Date::parse("2024-01-05"), 3);  // Friday
  ASSERT_EQ(cal.size(), 3u);
  EXPECT_EQ(cal.date(1).iso(), "2024-01-08");
  EXPECT_EQ(cal.date(2).iso(), "2024-01-09");
}

TEST(LoadPanels, WellFormedInput) {
  TempDir dir;
  write_text(dir / "p.csv", kPrices);
  write_text(dir / "w.csv", kWeights);
  const auto panels = load_panels(dir / "p.csv", dir / "w.csv", "IDX");
  EXPECT_EQ(panels.calendar.size(), 3u);
  EXPECT_EQ(panels.prices.n_series(), 3u);
  EXPECT_EQ(panels.prices.index_id(), "IDX");
  const auto a = panels.prices.series_of("AAA");
  EXPECT_EQ(*panels.prices.price(a, 2), 12.0);
  EXPECT_DOUBLE_EQ(panels.weights.weight(0, a), 0.4);
  EXPECT_EQ(panels.universe.members(1).size(), 2u);
}

TEST(LoadPanels, ZeroPriceNamesInstrumentAndDate) {
  TempDir dir;
  std::string p = kPrices;
  p.replace(p.find("2024-01-03,BBB,19"), 17, "2024-01-03,BBB,0");
  write_text(dir / "p.csv", p);
  write_text(dir / "w.csv", kWeights);
  try {
    load_panels(dir / "p.csv", dir / "w.csv", "IDX");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("BBB"), std::string::npos);
    EXPECT_NE(msg.find("2024-01-03"), std::string::npos);
  }
}

TEST(LoadPanels, WeightsNotSummingToOneNameTheDate) {
  TempDir dir;
  std::string w = kWeights;
  w.replace(w.find("2024-01-03,BBB,0.5"), 18, "2024-01-03,BBB,0.48");
  write_text(dir / "p.csv", kPrices);
  write_text(dir / "w.csv", w);
  try {
    load_panels(dir / "p.csv", dir / "w.csv", "IDX");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("2024-01-03"), std::string::npos);
  }
}

TEST(LoadPanels, MalformedRowReportsLine) {
  TempDir dir;
  std::string p = kPrices;
  p.replace(p.find("2024-01-03,AAA,11"), 17, "2024-01-03,AAA");
  write_text(dir / "p.csv", p);
  write_text(dir / "w.csv", kWeights);
  try {
    load_panels(dir / "p.csv", dir / "w.csv", "IDX");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(LoadPanels, DateMismatchBetweenFilesIsRejected) {
  TempDir dir;
  write_text(dir / "p.csv", kPrices);
  write_text(dir / "w.csv", std::string(kWeights) + "2024-01-05,AAA,1\n");
  EXPECT_THROW(load_panels(dir / "p.csv", dir / "w.csv", "IDX"), ValidationError);

  std::string w = kWeights;
  w.erase(w.find("2024-01-04,AAA"));
  write_text(dir / "w.csv", w);
  EXPECT_THROW(load_panels(dir / "p.csv", dir / "w.csv", "IDX"), ValidationError);
}

TEST(LoadPanels, MissingIndexSeriesIsRejected) {
  TempDir dir;
  write_text(dir / "p.csv", kPrices);
  write_text(dir / "w.csv", kWeights);
  EXPECT_THROW(load_panels(dir / "p.csv", dir / "w.csv", "KOSPI"), ValidationError);
}

TEST(LoadPanels, SmallWeightDriftIsRenormalized) {
  TempDir dir;
  std::string w = kWeights;
  w.replace(w.find("2024-01-03,BBB,0.5"), 18, "2024-01-03,BBB,0.5000004");
  write_text(dir / "p.csv", kPrices);
  write_text(dir / "w.csv", w);
  const auto panels = load_panels(dir / "p.csv", dir / "w.csv", "IDX");
  double sum = 0.0;
  for (const auto& [s, v] : panels.weights.at(1)) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(HorizonReturn, Examples) {
  PricePanel p(4, {"A", "M"}, "M");
  p.set(0, 0, 100.0);
  p.set(0, 1, 100.0);
  p.set(0, 2, 200.0);
  p.set(1, 0, 80.0);
  p.set(1, 3, 76.0);
  EXPECT_EQ(horizon_return(p, 0, 0, 1), 0.0);
  EXPECT_EQ(horizon_return(p, 0, 0, 2), 1.0);
  EXPECT_DOUBLE_EQ(horizon_return(p, 1, 0, 3), 76.0 / 80.0 - 1.0);
  EXPECT_NEAR(horizon_return(p, 1, 0, 3), -0.05, 1e-15);
}

TEST(HorizonReturn, MissingEndpointIsNamed) {
  PricePanel p(3, {"A", "M"}, "M");
  p.set(0, 0, 100.0);
  p.set(0, 2, 101.0);
  try {
    horizon_return(p, 0, 0, 1);
    FAIL();
  } catch (const MissingDataError& e) {
    EXPECT_NE(std::string(e.what()).find("end"), std::string::npos);
  }
  try {
    horizon_return(p, 0, 1, 1);
    FAIL();
  } catch (const MissingDataError& e) {
    EXPECT_NE(std::string(e.what()).find("start"), std::string::npos);
  }
  EXPECT_FALSE(try_horizon_return(p, 0, 1, 1).has_value());
}

TEST(HorizonReturn, ComposesMultiplicatively) {
  const auto market = generate(testing::small_synth(5, 120));
  const auto& prices = market.panels.prices;
  for (std::size_t s = 0; s < prices.n_series(); ++s) {
    for (Step t = 0; t + 30 < 120; t += 7) {
      for (Step a = 1; a <= 10; a += 3) {
        for (Step b = 1; b <= 15; b += 4) {
          const double lhs = (1.0 + horizon_return(prices, s, t, a)) * (1.0 + horizon_return(prices, s, t + a, b));
          EXPECT_NEAR(lhs, 1.0 + horizon_return(prices, s, t, a + b), 1e-12);
        }
      }
    }
  }
}

TEST(Panels, CsvRoundTripIsBitwise) {
  TempDir dir;
  const auto market = generate(testing::small_synth(6, 50));
  write_prices_csv(dir / "p.csv", market.panels.calendar, market.panels.prices);
  write_weights_csv(dir / "w.csv", market.panels.calendar, market.panels.prices, market.panels.weights);
  const auto back = load_panels(dir / "p.csv", dir / "w.csv", "INDEX");
  ASSERT_EQ(back.calendar.size(), market.panels.calendar.size());
  for (const auto& id : market.panels.prices.ids()) {
    const auto s0 = market.panels.prices.series_of(id);
    const auto s1 = back.prices.series_of(id);
    for (Step t = 0; t < 50; ++t) {
      EXPECT_EQ(market.panels.prices.raw(s0, t), back.prices.raw(s1, t));
      if (s0 != market.panels.prices.index_series()) {
        EXPECT_NEAR(market.panels.weights.weight(t, s0), back.weights.weight(t, s1), 1e-15);
      }
    }
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-7}) {
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
}

}  // namespace
}  // namespace itrack
