#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <quert/geohash.hpp>
#include <quert/rng.hpp>

using namespace quert;

namespace {

// Independent oracle: accumulate all longitude bits then all latitude bits
// separately, then interleave explicitly.
std::string oracle_encode(double lat, double lon, int n_chars) {
  int total_bits = 5 * n_chars;
  int n_lon = (total_bits + 1) / 2, n_lat = total_bits / 2;
  auto bisect = [](double v, double lo, double hi, int n) {
    std::vector<int> bits;
    for (int i = 0; i < n; ++i) {
      double mid = (lo + hi) / 2.0;
      if (v >= mid) {
        bits.push_back(1);
        lo = mid;
      } else {
        bits.push_back(0);
        hi = mid;
      }
    }
    return bits;
  };
  auto lon_bits = bisect(lon, -180.0, 180.0, n_lon);
  auto lat_bits = bisect(lat, -90.0, 90.0, n_lat);
  std::vector<int> inter;
  for (int i = 0; i < total_bits; ++i)
    inter.push_back(i % 2 == 0 ? lon_bits[i / 2] : lat_bits[i / 2]);
  std::string out;
  for (int c = 0; c < n_chars; ++c) {
    int idx = 0;
    for (int b = 0; b < 5; ++b) idx = idx * 2 + inter[5 * c + b];
    out.push_back(kGeohashAlphabet[idx]);
  }
  return out;
}

}  // namespace

TEST_CASE("known geohash vectors") {
  CHECK(geohash_encode({57.64911, 10.40744}, 6) == "u4pruy");
  CHECK(geohash_encode({0.0, 0.0}, 6) == "s00000");
  CHECK(geohash_encode({90.0, 180.0}, 1) == "z");
  CHECK(geohash_encode({30.25, 120.17}, 6) == "wtmknd");
  CHECK(geohash_encode({30.24, 120.15}, 6) == "wtmkn1");
  CHECK(geohash_encode({-90.0, -180.0}, 6) == "000000");
}

TEST_CASE("matches independent oracle over random coordinates") {
  RngStream rng(20240817);
  for (int i = 0; i < 1000; ++i) {
    double lat = rng.uniform() * 180.0 - 90.0;
    double lon = rng.uniform() * 360.0 - 180.0;
    int n = 1 + static_cast<int>(rng.uniform_int(8));
    CHECK(geohash_encode({lat, lon}, n) == oracle_encode(lat, lon, n));
  }
}

TEST_CASE("prefix property: longer codes extend shorter ones") {
  RngStream rng(7);
  for (int i = 0; i < 200; ++i) {
    double lat = rng.uniform() * 180.0 - 90.0;
    double lon = rng.uniform() * 360.0 - 180.0;
    std::string c8 = geohash_encode({lat, lon}, 8);
    for (int n = 1; n < 8; ++n) CHECK(geohash_encode({lat, lon}, n) == c8.substr(0, n));
  }
}

TEST_CASE("nearby points share a prefix, far points do not") {
  std::string a = geohash_encode({30.25, 120.17}, 6);
  std::string b = geohash_encode({30.24, 120.15}, 6);
  CHECK(common_prefix({a, b}) == "wtmkn");
  std::string far = geohash_encode({-33.86, 151.21}, 6);
  CHECK(common_prefix({a, far}).empty());
}

TEST_CASE("char classes cover alphabet plus pad") {
  for (int i = 0; i < 32; ++i) CHECK(geohash_char_class(kGeohashAlphabet[i]) == i);
  CHECK(geohash_char_class(kGeohashPad) == 32);
  CHECK(kGeohashClasses == 33);
  CHECK_THROWS_AS(geohash_char_class('a'), std::invalid_argument);  // 'a' is excluded from Base32
  CHECK_THROWS_AS(geohash_char_class('i'), std::invalid_argument);
  CHECK_THROWS_AS(geohash_char_class('l'), std::invalid_argument);
  CHECK_THROWS_AS(geohash_char_class('o'), std::invalid_argument);
}

TEST_CASE("item target: three cases") {
  CHECK(item_geohash_target({}, 6) == "******");
  CHECK(item_geohash_target({{30.25, 120.17}}, 6) == "wtmknd");
  CHECK(item_geohash_target({{30.25, 120.17}, {30.24, 120.15}}, 6) == "wtmkn*");
  // Disjoint entities: all pads.
  CHECK(item_geohash_target({{30.25, 120.17}, {-33.86, 151.21}}, 6) == "******");
}

TEST_CASE("targets always satisfy pad closure") {
  RngStream rng(99);
  for (int i = 0; i < 300; ++i) {
    std::vector<LatLon> pts;
    int n = static_cast<int>(rng.uniform_int(4));
    double base_lat = rng.uniform() * 160.0 - 80.0;
    double base_lon = rng.uniform() * 340.0 - 170.0;
    for (int j = 0; j < n; ++j)
      pts.push_back({base_lat + rng.uniform() * 0.5, base_lon + rng.uniform() * 0.5});
    std::string t = item_geohash_target(pts, 6);
    CHECK(t.size() == 6);
    CHECK(valid_geohash_target(t));
  }
  CHECK(valid_geohash_target("wtm***"));
  CHECK_FALSE(valid_geohash_target("wt*m**"));
  CHECK_FALSE(valid_geohash_target("*wtmkn"));
}

TEST_CASE("encode rejects out-of-range input") {
  CHECK_THROWS_AS(geohash_encode({91.0, 0.0}, 6), std::out_of_range);
  CHECK_THROWS_AS(geohash_encode({0.0, 181.0}, 6), std::out_of_range);
  CHECK_THROWS_AS(geohash_encode({0.0, 0.0}, 0), std::invalid_argument);
}
