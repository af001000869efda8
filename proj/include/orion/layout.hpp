#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "orion/error.hpp"
#include "orion/packing.hpp"

namespace orion {

// Where each logical element (raster order over (c, h, w), or a flat feature
// index) lives in the slot space. Slots beyond n spill into further
// ciphertexts, n slots each.
struct SlotLayout {
  long c = 1, h = 1, w = 1;
  bool flat = false;
  long gap = 1;
  long grid_h = 1, grid_w = 1;
  std::vector<long> slot_of;

  long size() const { return static_cast<long>(slot_of.size()); }
  long span() const { return slot_of.empty() ? 0 : *std::max_element(slot_of.begin(), slot_of.end()) + 1; }
  int num_ciphertexts(long n) const { return static_cast<int>(std::max(1L, (span() + n - 1) / n)); }
  // Replication period of a single-ciphertext encoding; n when blocked.
  long period(long n) const { return span() <= n ? std::max(1L, pow2_ceil(span())) : n; }

  friend bool operator==(const SlotLayout&, const SlotLayout&) = default;

  // Client-side packing: single ciphertexts are replicated with period(n),
  // unused slots are zero.
  std::vector<std::vector<double>> place(const std::vector<double>& logical, long n) const {
    if (static_cast<long>(logical.size()) != size())
      throw Error(Errc::LengthMismatch, "layout expects " + std::to_string(size()) + " values, got " +
                                            std::to_string(logical.size()));
    const int blocks = num_ciphertexts(n);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(blocks), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    if (blocks == 1) {
      const long P = period(n);
      for (long i = 0; i < size(); ++i)
        for (long t = slot_of[static_cast<std::size_t>(i)]; t < n; t += P) out[0][static_cast<std::size_t>(t)] = logical[static_cast<std::size_t>(i)];
    } else {
      for (long i = 0; i < size(); ++i) {
        const long s = slot_of[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(s / n)][static_cast<std::size_t>(s % n)] = logical[static_cast<std::size_t>(i)];
      }
    }
    return out;
  }

  std::vector<double> gather(const std::vector<std::vector<double>>& cts, long n) const {
    std::vector<double> out(static_cast<std::size_t>(size()));
    for (long i = 0; i < size(); ++i) {
      const long s = slot_of[static_cast<std::size_t>(i)];
      const auto& ct = cts.at(static_cast<std::size_t>(s / n));
      out[static_cast<std::size_t>(i)] = ct.at(static_cast<std::size_t>(s % n));
    }
    return out;
  }

  std::string describe() const {
    if (flat) return "flat(" + std::to_string(size()) + ")";
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ") gap " + std::to_string(gap) +
           " grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w);
  }
};

inline SlotLayout flat_layout(long features) {
  SlotLayout l;
  l.c = features;
  l.flat = true;
  l.slot_of.resize(static_cast<std::size_t>(features));
  for (long i = 0; i < features; ++i) l.slot_of[static_cast<std::size_t>(i)] = i;
  return l;
}

// Channel-interleaved layout on a grid_h x grid_w physical grid with gap g:
//   slot(c,y,x) = (y*g + (c mod g^2) div g) * grid_w + (x*g + c mod g)
//               + (c div g^2) * grid_h * grid_w
// With g = 1 and grid = (h, w) this is plain raster order.
inline SlotLayout multiplexed_layout(long c, long h, long w, long g, long grid_h, long grid_w) {
  if (g < 1 || grid_h < h * g || grid_w < w * g)
    throw Error(Errc::InvalidArgument, "multiplexed layout: grid too small for gap");
  SlotLayout l;
  l.c = c;
  l.h = h;
  l.w = w;
  l.gap = g;
  l.grid_h = grid_h;
  l.grid_w = grid_w;
  l.slot_of.resize(static_cast<std::size_t>(c * h * w));
  const long g2 = g * g;
  for (long ch = 0; ch < c; ++ch)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const long row = y * g + (ch % g2) / g;
        const long col = x * g + ch % g;
        l.slot_of[static_cast<std::size_t>((ch * h + y) * w + x)] = row * grid_w + col + (ch / g2) * grid_h * grid_w;
      }
  return l;
}

inline SlotLayout raster_layout(long c, long h, long w) { return multiplexed_layout(c, h, w, 1, h, w); }

// Flatten keeps every slot where it is and only changes the logical view.
inline SlotLayout flattened(const SlotLayout& l) {
  SlotLayout f = l;
  f.flat = true;
  f.c = l.size();
  f.h = f.w = 1;
  return f;
}

}  // namespace orion
