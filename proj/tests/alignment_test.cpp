#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tproj/alignment.hpp"

using namespace tproj;

namespace {

LabeledSentence src_with(std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, std::string>> sp) {
  LabeledSentence s{"0", {}, {}};
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("w" + std::to_string(i));
  for (auto& [a, b, c] : sp) s.spans.push_back(make_span(s.tokens, a, b, c));
  return s;
}

}  // namespace

TEST(Pharaoh, Parse) {
  auto m = parse_pharaoh("0-0 3-3 4-4");
  EXPECT_EQ(m.links.size(), 3u);
  EXPECT_TRUE(m.links.count({3, 3}));
  EXPECT_TRUE(parse_pharaoh("").links.empty());
  try {
    parse_pharaoh("0-0 3x3");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_pharaoh("1-"), FormatError);
  EXPECT_THROW(parse_pharaoh("-1-2"), FormatError);
}

TEST(Pharaoh, ReadReportsLine) {
  std::istringstream in("0-0\n\n1-x\n");
  try {
    read_pharaoh(in);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream ok("0-0\n\n1-1\n");
  auto v = read_pharaoh(ok);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_TRUE(v[1].links.empty());
}

TEST(ProjectViaAlignments, Example) {
  auto src = src_with(5, {{0, 1, "Person"}, {3, 5, "Location"}});
  auto a = project_via_alignments(src, parse_pharaoh("0-0 3-3 4-4"), 5);
  ASSERT_EQ(a.assigned.size(), 2u);
  EXPECT_EQ(a.assigned[0].target, (Range{0, 1}));
  EXPECT_EQ(a.assigned[1].target, (Range{3, 5}));
}

TEST(ProjectViaAlignments, UnalignedAndOutOfBounds) {
  auto src = src_with(3, {{0, 1, "P"}, {2, 3, "L"}});
  auto a = project_via_alignments(src, parse_pharaoh("0-1"), 3);
  ASSERT_EQ(a.unassigned.size(), 1u);
  EXPECT_EQ(a.unassigned[0].reason, reason::kNoAlignment);
  EXPECT_THROW(project_via_alignments(src, parse_pharaoh("0-3"), 3), PreconditionError);
  EXPECT_THROW(project_via_alignments(src, parse_pharaoh("5-0"), 3), PreconditionError);
}

TEST(ProjectViaAlignments, WideHullDiagnostic) {
  auto src = src_with(3, {{0, 1, "P"}});
  auto a = project_via_alignments(src, parse_pharaoh("0-0 0-5"), 6);
  EXPECT_EQ(a.assigned[0].target, (Range{0, 6}));
  ASSERT_FALSE(a.diagnostics.empty());
  EXPECT_EQ(a.diagnostics[0].rfind("wide-hull", 0), 0u);
}

TEST(ProjectViaAlignments, ConflictResolution) {
  // Span 1 has more links and wins [1,4); span 0 keeps its aligned token 0.
  auto src = src_with(4, {{0, 1, "P"}, {1, 3, "L"}});
  auto a = project_via_alignments(src, parse_pharaoh("0-0 0-2 1-1 1-2 2-3"), 4);
  ASSERT_EQ(a.assigned.size(), 2u);
  EXPECT_EQ(a.assigned[1].target, (Range{1, 4}));
  EXPECT_EQ(a.assigned[0].target, (Range{0, 1}));
  bool truncated = false;
  for (const auto& d : a.diagnostics) truncated |= d.rfind("truncated span=0", 0) == 0;
  EXPECT_TRUE(truncated);

  // Fully covered loser.
  auto b = project_via_alignments(src_with(2, {{0, 1, "P"}, {1, 2, "L"}}), parse_pharaoh("0-0 1-0 1-1"), 2);
  ASSERT_EQ(b.unassigned.size(), 1u);
  EXPECT_EQ(b.unassigned[0].source_index, 0u);
  EXPECT_EQ(b.unassigned[0].reason, reason::kConflict);

  // Equal support: earlier span wins.
  auto c = project_via_alignments(src_with(2, {{0, 1, "P"}, {1, 2, "L"}}), parse_pharaoh("0-0 1-0"), 1);
  ASSERT_EQ(c.assigned.size(), 1u);
  EXPECT_EQ(c.assigned[0].source_index, 0u);
}

TEST(ProjectViaAlignments, HullMatchesBruteForce) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t ns = 1 + rng() % 10, nt = 1 + rng() % 10;
    std::vector<std::pair<std::size_t, std::size_t>> links;
    AlignmentMap m;
    for (std::size_t k = 0, n = rng() % 15; k < n; ++k) {
      std::size_t s = rng() % ns, t = rng() % nt;
      links.emplace_back(s, t);
      m.links.emplace(s, t);
    }
    std::size_t s = rng() % ns, e = s + 1 + rng() % (ns - s);
    auto src = src_with(ns, {{s, e, "X"}});
    auto h = hull_of(src.spans[0], 0, m);
    auto want = oracle::hull(links, s, e);
    ASSERT_EQ(h.hull.has_value(), want.has_value());
    if (want) {
      EXPECT_EQ(h.hull->start, want->first);
      EXPECT_EQ(h.hull->end, want->second);
    }
    // A single span never conflicts, so its projection is the hull.
    auto a = project_via_alignments(src, m, nt);
    if (want) {
      EXPECT_EQ(a.assigned.at(0).target, *h.hull);
    }
  }
}

TEST(ProjectViaAlignments, IdentityIsExact) {
  auto src = src_with(6, {{0, 2, "A"}, {3, 4, "B"}, {4, 6, "A"}});
  auto a = project_via_alignments(src, parse_pharaoh("0-0 1-1 2-2 3-3 4-4 5-5"), 6);
  ASSERT_EQ(a.assigned.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.assigned[i].target, src.spans[i].range());
  EXPECT_TRUE(a.diagnostics.empty());
  fill_surfaces(a, src.tokens);
  EXPECT_EQ(a.assigned[2].text, "w4 w5");
}
