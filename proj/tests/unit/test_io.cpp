#include <fstream>

#include "evline/io.hpp"
#include "helpers.hpp"

using namespace evline;

TEST_SUITE("io") {
  TEST_CASE("fmt_double round-trips exactly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(rng) * std::pow(10.0, double(i % 20) - 10.0);
      CHECK(parse_double(fmt_double(v)) == v);
    }
    CHECK(fmt_double(0.5) == "0.5");
    CHECK(fmt_double(10.0) == "10");
  }

  TEST_CASE("parse_double rejects trailing garbage") {
    CHECK_THROWS_AS(parse_double("1.5x"), ParseError);
    CHECK_THROWS_AS(parse_int("3.0"), ParseError);
    CHECK(parse_int(" 42 ") == 42);
  }

  TEST_CASE("key-value sections and comments") {
    const auto kv = parse_key_values("# header\na = 1\n[sec]\nb = two words\n\n[other]\nc=3");
    REQUIRE(kv.size() == 3);
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("sec.b") == "two words");
    CHECK(kv.at("other.c") == "3");
  }

  TEST_CASE("key-value errors carry line numbers") {
    try {
      parse_key_values("a = 1\nnot a pair\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("point PLY round trip") {
    evtest::TempDir dir("io");
    std::vector<Vec3> pts = {{0, 0, 0}, {1.25, -2, 3.5}, {1e-9, 7, 0.1}};
    write_point_ply(dir.file("p.ply"), pts);
    const auto back = read_point_ply(dir.file("p.ply"));
    REQUIRE(back.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(back[i] == pts[i]);
  }
}
