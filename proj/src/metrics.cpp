#include "adgn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "adgn/error.hpp"

namespace adgn {

namespace {

void require_dims(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ContractViolation("mask dimensions must be at least 1x1");
}

template <typename A, typename B>
void require_same(const A& a, const B& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ContractViolation(std::string(op) + ": mask sizes differ (" + std::to_string(a.height) +
                            "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) +
                            "x" + std::to_string(b.width) + ")");
  }
}

struct Counts {
  std::size_t g = 0, s = 0, both = 0, neither = 0;
};

Counts count(const BinaryMask& g, const BinaryMask& s, const char* op) {
  require_same(g, s, op);
  Counts c;
  for (std::size_t i = 0; i < g.bits.size(); ++i) {
    const bool a = g.bits[i] != 0;
    const bool b = s.bits[i] != 0;
    c.g += a;
    c.s += b;
    c.both += a && b;
    c.neither += !a && !b;
  }
  return c;
}

std::vector<std::pair<int, int>> boundary(const BinaryMask& m) {
  std::vector<std::pair<int, int>> out;
  const int h = static_cast<int>(m.height);
  const int w = static_cast<int>(m.width);
  auto fg = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < h && c < w && m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!fg(r, c)) continue;
      if (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1)) out.emplace_back(r, c);
    }
  }
  return out;
}

double directed_p95(const std::vector<std::pair<int, int>>& from,
                    const std::vector<std::pair<int, int>>& to) {
  std::vector<double> dist;
  dist.reserve(from.size());
  for (const auto& [r, c] : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto& [r2, c2] : to) {
      const long dr = r - r2;
      const long dc = c - c2;
      best = std::min(best, dr * dr + dc * dc);
    }
    dist.push_back(std::sqrt(static_cast<double>(best)));
  }
  std::sort(dist.begin(), dist.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(dist.size())));
  return dist[std::max<std::size_t>(rank, 1) - 1];
}

struct Pgm {
  std::size_t width = 0, height = 0;
  unsigned maxval = 0;
  std::vector<std::uint32_t> values;
};

Pgm read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  if (token() != "P5") throw std::runtime_error(path + ": not a binary PGM (P5)");
  Pgm p;
  try {
    p.width = std::stoul(token());
    p.height = std::stoul(token());
    p.maxval = static_cast<unsigned>(std::stoul(token()));
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed PGM header");
  }
  if (p.width == 0 || p.height == 0 || p.maxval == 0 || p.maxval > 65535) {
    throw std::runtime_error(path + ": unsupported PGM dimensions or maxval");
  }
  const std::size_t bpp = p.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(p.width * p.height * bpp);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw std::runtime_error(path + ": truncated PGM data");
  }
  p.values.resize(p.width * p.height);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    p.values[i] = bpp == 2 ? (static_cast<std::uint32_t>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
  }
  return p;
}

void write_pgm(const std::string& path, std::size_t w, std::size_t h, unsigned maxval,
               const std::vector<std::uint32_t>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << w << " " << h << "\n" << maxval << "\n";
  for (auto v : values) {
    if (maxval > 255) out.put(static_cast<char>((v >> 8) & 0xFF));
    out.put(static_cast<char>(v & 0xFF));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

BinaryMask::BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {
  require_dims(h, w);
}

BinaryMask::BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values)
    : height(h), width(w), bits(std::move(values)) {
  require_dims(h, w);
  if (bits.size() != h * w) throw ContractViolation("BinaryMask: data length does not match size");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

InstanceMask::InstanceMask(std::size_t h, std::size_t w) : height(h), width(w), labels(h * w, 0) {
  require_dims(h, w);
}

InstanceMask::InstanceMask(std::size_t h, std::size_t w, std::vector<std::uint32_t> values)
    : height(h), width(w), labels(std::move(values)) {
  require_dims(h, w);
  if (labels.size() != h * w) throw ContractViolation("InstanceMask: data length does not match size");
}

double dice(const BinaryMask& g, const BinaryMask& s) {
  const Counts c = count(g, s, "dice");
  if (c.g + c.s == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.g + c.s);
}

double sensitivity(const BinaryMask& g, const BinaryMask& s) {
  const Counts c = count(g, s, "sensitivity");
  if (c.g == 0) return c.s == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.both) / static_cast<double>(c.g);
}

double specificity(const BinaryMask& g, const BinaryMask& s) {
  const Counts c = count(g, s, "specificity");
  const std::size_t total = g.bits.size();
  if (c.g == total) return c.s == total ? 1.0 : 0.0;
  return static_cast<double>(c.neither) / static_cast<double>(total - c.g);
}

double jaccard(const BinaryMask& g, const BinaryMask& s) {
  const Counts c = count(g, s, "jaccard");
  const std::size_t uni = c.g + c.s - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

double hd95(const BinaryMask& g, const BinaryMask& s) {
  require_same(g, s, "hd95");
  const auto bg = boundary(g);
  const auto bs = boundary(s);
  if (bg.empty() || bs.empty()) throw DomainError("hd95: boundary of an empty mask is undefined");
  return std::max(directed_p95(bg, bs), directed_p95(bs, bg));
}

double aji(const InstanceMask& g, const InstanceMask& s) {
  require_same(g, s, "aji");
  std::map<std::uint32_t, std::size_t> g_area, s_area;
  std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> overlap;
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    const auto a = g.labels[i];
    const auto b = s.labels[i];
    if (a) ++g_area[a];
    if (b) ++s_area[b];
    if (a && b) ++overlap[a][b];
  }
  if (g_area.empty() && s_area.empty()) return 1.0;

  std::map<std::uint32_t, bool> used;
  double inter_sum = 0.0;
  double union_sum = 0.0;
  for (const auto& [gid, garea] : g_area) {
    std::uint32_t best = 0;
    double best_j = -1.0;
    std::size_t best_inter = 0;
    for (const auto& [sid, inter] : overlap[gid]) {
      if (used[sid]) continue;
      const double uni = static_cast<double>(garea + s_area[sid] - inter);
      const double j = static_cast<double>(inter) / uni;
      if (j > best_j) {
        best_j = j;
        best = sid;
        best_inter = inter;
      }
    }
    if (best == 0) {
      union_sum += static_cast<double>(garea);
      continue;
    }
    used[best] = true;
    inter_sum += static_cast<double>(best_inter);
    union_sum += static_cast<double>(garea + s_area[best] - best_inter);
  }
  for (const auto& [sid, area] : s_area) {
    if (!used[sid]) union_sum += static_cast<double>(area);
  }
  return inter_sum / union_sum;
}

InstanceMask connected_components(const BinaryMask& mask) {
  InstanceMask out(mask.height, mask.width);
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  std::uint32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!mask.bits[start] || out.labels[start]) continue;
    ++next;
    out.labels[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / w;
      const std::size_t c = p % w;
      auto visit = [&](std::size_t q) {
        if (mask.bits[q] && !out.labels[q]) {
          out.labels[q] = next;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - w);
      if (r + 1 < h) visit(p + w);
      if (c > 0) visit(p - 1);
      if (c + 1 < w) visit(p + 1);
    }
  }
  return out;
}

BinaryMask foreground(const InstanceMask& mask) {
  BinaryMask out(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.labels.size(); ++i) out.bits[i] = mask.labels[i] != 0;
  return out;
}

BinaryMask read_binary_pgm(const std::string& path) {
  const Pgm p = read_pgm(path);
  BinaryMask m(p.height, p.width);
  for (std::size_t i = 0; i < p.values.size(); ++i) m.bits[i] = p.values[i] != 0;
  return m;
}

void write_binary_pgm(const std::string& path, const BinaryMask& mask) {
  std::vector<std::uint32_t> values(mask.bits.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = mask.bits[i] ? 255 : 0;
  write_pgm(path, mask.width, mask.height, 255, values);
}

InstanceMask read_instance_pgm(const std::string& path) {
  Pgm p = read_pgm(path);
  return InstanceMask(p.height, p.width, std::move(p.values));
}

void write_instance_pgm(const std::string& path, const InstanceMask& mask) {
  for (auto v : mask.labels) {
    if (v > 65535) throw ContractViolation("instance id does not fit a 16-bit PGM");
  }
  write_pgm(path, mask.width, mask.height, 65535, mask.labels);
}

}  // namespace adgn
