#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "adgn/error.hpp"
#include "adgn/metrics.hpp"
#include "adgn/rng.hpp"
#include "doctest.h"

using namespace adgn;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.set(r, c, rows[r][c] == '#');
  }
  return m;
}

InstanceMask labels_from_rows(const std::vector<std::string>& rows) {
  InstanceMask m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const char ch = rows[r][c];
      m.labels[r * m.width + c] = ch == '.' ? 0u : static_cast<std::uint32_t>(ch - '0');
    }
  }
  return m;
}

BinaryMask random_blob(Rng& rng, std::size_t h, std::size_t w) {
  BinaryMask m(h, w);
  const double cr = rng.uniform() * h, cc = rng.uniform() * w;
  const double rad = 1.5 + rng.uniform() * 5.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double d = std::hypot(r - cr, c - cc);
      m.set(r, c, d < rad || rng.uniform() < 0.03);
    }
  }
  if (m.count() == 0) m.set(h / 2, w / 2);
  return m;
}

// Directed 95th percentile written from the definition: boundary pixels are
// foreground pixels whose 4-neighbourhood leaves the foreground.
double reference_hd95(const BinaryMask& a, const BinaryMask& b) {
  auto edge = [](const BinaryMask& m) {
    std::vector<std::pair<double, double>> out;
    for (std::size_t r = 0; r < m.height; ++r) {
      for (std::size_t c = 0; c < m.width; ++c) {
        if (!m.at(r, c)) continue;
        const bool inner = r > 0 && c > 0 && r + 1 < m.height && c + 1 < m.width &&
                           m.at(r - 1, c) && m.at(r + 1, c) && m.at(r, c - 1) && m.at(r, c + 1);
        if (!inner) out.emplace_back(double(r), double(c));
      }
    }
    return out;
  };
  auto directed = [](const auto& from, const auto& to) {
    std::vector<double> d;
    for (const auto& p : from) {
      double best = INFINITY;
      for (const auto& q : to) best = std::min(best, std::hypot(p.first - q.first, p.second - q.second));
      d.push_back(best);
    }
    std::sort(d.begin(), d.end());
    std::size_t k = 0;
    while (static_cast<double>(k + 1) < 0.95 * static_cast<double>(d.size())) ++k;
    return d[k];
  };
  const auto ea = edge(a), eb = edge(b);
  return std::max(directed(ea, eb), directed(eb, ea));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("overlap scores on a 5x5 example") {
  const auto g = from_rows({".....", ".##..", ".##..", ".....", "....."});
  const auto s = from_rows({".....", ".###.", ".#...", ".##..", "....."});
  CHECK(g.count() == 4);
  CHECK(s.count() == 6);
  CHECK(dice(g, s) == doctest::Approx(0.6));
  CHECK(sensitivity(g, s) == doctest::Approx(0.75));
  CHECK(specificity(g, s) == doctest::Approx(18.0 / 21.0));
  CHECK(jaccard(g, s) == doctest::Approx(3.0 / 7.0));
}

TEST_CASE("degenerate masks") {
  BinaryMask empty(4, 4), full(4, 4, std::vector<std::uint8_t>(16, 1));
  CHECK(dice(empty, empty) == 1.0);
  CHECK(dice(empty, full) == 0.0);
  CHECK(sensitivity(empty, empty) == 1.0);
  CHECK(specificity(full, full) == 1.0);
  CHECK(specificity(full, empty) == 0.0);
  CHECK_THROWS_AS(dice(BinaryMask(2, 2), BinaryMask(2, 3)), ContractViolation);
  CHECK_THROWS_AS(BinaryMask(0, 3), ContractViolation);
}

TEST_CASE("aji examples") {
  const auto g = labels_from_rows({"......", ".11...", ".11...", "......"});
  const auto s = labels_from_rows({"......", ".222..", ".222..", "......"});
  CHECK(aji(g, s) == doctest::Approx(4.0 / 6.0));
  CHECK(aji(g, g) == 1.0);
  CHECK(aji(g, InstanceMask(4, 6)) == 0.0);
  CHECK(aji(InstanceMask(4, 6), InstanceMask(4, 6)) == 1.0);

  // Two GT objects, one split segmentation plus a false positive.
  const auto g2 = labels_from_rows({"11..22", "11..22", "......", "......"});
  const auto s2 = labels_from_rows({"1...33", "2...33", "......", "....44"});
  // GT1 takes S1 (J=1/4 ties S2, lowest id), GT2 takes S3 (J=1).
  // Intersection 1 + 4; union 4 + 4 + S2(1) + S4(2).
  CHECK(aji(g2, s2) == doctest::Approx(5.0 / 11.0));
}

TEST_CASE("hd95 examples") {
  BinaryMask a(8, 8), b(8, 8);
  a.set(1, 1);
  b.set(1, 6);
  CHECK(hd95(a, a) == 0.0);
  CHECK(hd95(a, b) == doctest::Approx(5.0));

  BinaryMask sq(6, 6), shifted(6, 6);
  for (std::size_t r = 1; r <= 3; ++r) {
    for (std::size_t c = 1; c <= 3; ++c) {
      sq.set(r, c);
      shifted.set(r, c + 1);
    }
  }
  CHECK(hd95(sq, shifted) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hd95(sq, BinaryMask(6, 6)), DomainError);
}

TEST_CASE("connected components") {
  const auto diag = from_rows({"#.", ".#"});
  const auto cc = connected_components(diag);
  CHECK(cc.at(0, 0) == 1);
  CHECK(cc.at(1, 1) == 2);
  const auto ell = from_rows({"#..", "#..", "###"});
  const auto l = connected_components(ell);
  CHECK(*std::max_element(l.labels.begin(), l.labels.end()) == 1);
  CHECK(foreground(l) == ell);
}

TEST_CASE("properties on random mask pairs") {
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto g = random_blob(rng, 24, 20);
    const auto s = random_blob(rng, 24, 20);
    CHECK(dice(g, s) == doctest::Approx(dice(s, g)).epsilon(1e-12));
    const double j = jaccard(g, s);
    CHECK(dice(g, s) == doctest::Approx(2.0 * j / (1.0 + j)).epsilon(1e-12));
    CHECK(hd95(g, s) == hd95(s, g));
    CHECK(hd95(g, s) == doctest::Approx(reference_hd95(g, s)).epsilon(1e-12));

    InstanceMask gi(g.height, g.width), si(s.height, s.width);
    for (std::size_t k = 0; k < g.bits.size(); ++k) {
      gi.labels[k] = g.bits[k] ? 1 : 0;
      si.labels[k] = s.bits[k] ? 5 : 0;
    }
    CHECK(aji(gi, si) == doctest::Approx(j).epsilon(1e-12));
  }
}

TEST_CASE("pgm round trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = (dir / "adgn_mask.pgm").string();
  const auto inst = (dir / "adgn_inst.pgm").string();
  const auto m = from_rows({"#..#", ".##.", "...."});
  write_binary_pgm(bin, m);
  CHECK(read_binary_pgm(bin) == m);

  InstanceMask labels(2, 3, {0, 1, 300, 65535, 2, 0});
  write_instance_pgm(inst, labels);
  CHECK(read_instance_pgm(inst) == labels);

  {
    std::ofstream out(bin, std::ios::binary);
    out << "P5\n# a comment\n2 1\n255\n";
    out.put(0);
    out.put(static_cast<char>(200));
  }
  const auto c = read_binary_pgm(bin);
  CHECK(c.width == 2);
  CHECK(!c.at(0, 0));
  CHECK(c.at(0, 1));
  std::filesystem::remove(bin);
  std::filesystem::remove(inst);
}

}  // TEST_SUITE
