#pragma once

// Geohash encoding (Base32, longitude-first bit interleaving) and the
// three-case construction of an item's target code: no geography -> all pads,
// one entity -> its code, several -> longest common prefix padded with '*'.

#include <stdexcept>
#include <string>
#include <vector>

namespace quert {

inline constexpr char kGeohashAlphabet[] = "0123456789bcdefghjkmnpqrstuvwxyz";
inline constexpr char kGeohashPad = '*';
// 32 alphabet symbols plus the pad.
inline constexpr int kGeohashClasses = 33;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

inline int geohash_char_class(char c) {
  if (c == kGeohashPad) return 32;
  for (int i = 0; i < 32; ++i)
    if (kGeohashAlphabet[i] == c) return i;
  throw std::invalid_argument(std::string("geohash: symbol '") + c + "' not in alphabet");
}

// Value >= midpoint selects the high half.
inline std::string geohash_encode(LatLon p, int n_chars) {
  if (n_chars < 1) throw std::invalid_argument("geohash_encode: n_chars < 1");
  if (p.lat < -90.0 || p.lat > 90.0)
    throw std::out_of_range("geohash_encode: latitude " + std::to_string(p.lat));
  if (p.lon < -180.0 || p.lon > 180.0)
    throw std::out_of_range("geohash_encode: longitude " + std::to_string(p.lon));
  double lat_lo = -90.0, lat_hi = 90.0, lon_lo = -180.0, lon_hi = 180.0;
  std::string out;
  out.reserve(n_chars);
  bool lon_bit = true;
  int idx = 0, nbits = 0;
  for (int b = 0; b < 5 * n_chars; ++b) {
    idx <<= 1;
    if (lon_bit) {
      double mid = (lon_lo + lon_hi) / 2.0;
      if (p.lon >= mid) {
        idx |= 1;
        lon_lo = mid;
      } else {
        lon_hi = mid;
      }
    } else {
      double mid = (lat_lo + lat_hi) / 2.0;
      if (p.lat >= mid) {
        idx |= 1;
        lat_lo = mid;
      } else {
        lat_hi = mid;
      }
    }
    lon_bit = !lon_bit;
    if (++nbits == 5) {
      out.push_back(kGeohashAlphabet[idx]);
      idx = 0;
      nbits = 0;
    }
  }
  return out;
}

inline std::string common_prefix(const std::vector<std::string>& codes) {
  if (codes.empty()) return "";
  std::size_t n = codes[0].size();
  for (const auto& c : codes) n = std::min(n, c.size());
  std::size_t k = 0;
  while (k < n) {
    char ch = codes[0][k];
    bool all = true;
    for (const auto& c : codes)
      if (c[k] != ch) {
        all = false;
        break;
      }
    if (!all) break;
    ++k;
  }
  return codes[0].substr(0, k);
}

inline std::string item_geohash_target(const std::vector<LatLon>& entities, int n_chars) {
  if (entities.empty()) return std::string(n_chars, kGeohashPad);
  std::vector<std::string> codes;
  codes.reserve(entities.size());
  for (const auto& p : entities) codes.push_back(geohash_encode(p, n_chars));
  if (codes.size() == 1) return codes[0];
  std::string prefix = common_prefix(codes);
  prefix.resize(n_chars, kGeohashPad);
  return prefix;
}

// Pad closure: once a '*' appears, everything after it is '*'.
inline bool valid_geohash_target(const std::string& code) {
  bool padded = false;
  for (char c : code) {
    if (c == kGeohashPad) {
      padded = true;
    } else {
      if (padded) return false;
      geohash_char_class(c);
    }
  }
  return true;
}

}  // namespace quert
