#pragma once

#include <cstdint>
#include <random>

#include "planenav/vec3.hpp"

namespace planenav {

// Seeded RNG wrapper; every stochastic component takes one of these explicitly
// so runs are reproducible from a single CLI seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    double gaussian(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }

    std::uint64_t integer(std::uint64_t n) {  // uniform in [0, n)
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }

    // Derives an independent stream, e.g. one per worker thread.
    Rng fork(std::uint64_t salt) {
        return Rng(gen_() ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
    }

    Vec3 unit_vector() {
        // Marsaglia rejection sampling on the sphere.
        while (true) {
            double a = uniform(-1.0, 1.0), b = uniform(-1.0, 1.0);
            double s = a * a + b * b;
            if (s >= 1.0 || s == 0.0) continue;
            double r = 2.0 * std::sqrt(1.0 - s);
            return {a * r, b * r, 1.0 - 2.0 * s};
        }
    }

    // Uniform rotation via Shoemake quaternion sampling.
    Mat3 rotation() {
        double u1 = uniform(0.0, 1.0), u2 = uniform(0.0, 1.0), u3 = uniform(0.0, 1.0);
        double qw = std::sqrt(1.0 - u1) * std::sin(2.0 * kPi * u2);
        double qx = std::sqrt(1.0 - u1) * std::cos(2.0 * kPi * u2);
        double qy = std::sqrt(u1) * std::sin(2.0 * kPi * u3);
        double qz = std::sqrt(u1) * std::cos(2.0 * kPi * u3);
        Mat3 r;
        r.m[0] = {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)};
        r.m[1] = {2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)};
        r.m[2] = {2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)};
        return r;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace planenav
