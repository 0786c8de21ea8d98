#pragma once

#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "evline/camera.hpp"
#include "evline/common.hpp"

namespace evtest {

using evline::Mat3;
using evline::Vec2;
using evline::Vec3;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("evline_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  return evline::so3_exp(random_unit(rng) * u(rng));
}

// Camera at `center` looking at `target` with world +z roughly up.
inline evline::CameraPose look_at(const Vec3& center, const Vec3& target,
                                  const Vec3& up = Vec3::UnitZ()) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  evline::CameraPose p;
  p.R.col(0) = x;
  p.R.col(1) = y;
  p.R.col(2) = z;
  p.t = center;
  return p;
}

inline evline::Intrinsics test_intrinsics() {
  evline::Intrinsics K;
  K.fx = K.fy = 200.0;
  K.cx = 160.0;
  K.cy = 120.0;
  K.width = 320;
  K.height = 240;
  return K;
}

}  // namespace evtest
