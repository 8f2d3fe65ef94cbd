#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace tscl {

// boost's engine and ziggurat normal give the same stream on every platform,
// which the bitwise-reproducibility guarantees of the runner depend on.
using Engine = boost::random::mt19937_64;

/// Named substreams of a run seed. Every consumer of randomness draws from
/// its own stream so that, e.g., the phase-2 head does not shift the sample
/// sequence of phase 1.
enum class Stream : std::uint64_t {
  StudentFeatures = 1,
  StudentHeadDagger = 2,
  StudentHeadDdagger = 3,
  TrainSamples = 4,
  TestSet = 5,
  TeacherFeatures = 6,
  TeacherReadout = 7,
  Orthogonal = 8,
  MonteCarlo = 9,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

inline Engine make_engine(std::uint64_t seed, Stream stream) {
  return Engine(derive_seed(seed, stream));
}

class NormalSampler {
 public:
  explicit NormalSampler(Engine engine) : engine_(std::move(engine)) {}

  double operator()() { return dist_(engine_); }

  template <typename Derived>
  void fill(Eigen::DenseBase<Derived>& out, double stddev = 1.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out.derived().data()[i] = stddev * dist_(engine_);
  }

  Engine& engine() { return engine_; }

 private:
  Engine engine_;
  boost::random::normal_distribution<double> dist_;
};

}  // namespace tscl
