#include "lbl/rng.hpp"

#include <cmath>
#include <numbers>

#include "lbl/errors.hpp"

namespace lbl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotStochastic: return "NotStochastic";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ModelMismatch: return "ModelMismatch";
    case ErrorKind::FeatureTooLarge: return "FeatureTooLarge";
    case ErrorKind::HorizonExceeded: return "HorizonExceeded";
    case ErrorKind::StageNotFrozen: return "StageNotFrozen";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::Config: return "Config";
    case ErrorKind::DegenerateLikelihood: return "DegenerateLikelihood";
    case ErrorKind::NotMixing: return "NotMixing";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NearSingularPivot: return "NearSingularPivot";
    case ErrorKind::DiagonalizationFailed: return "DiagonalizationFailed";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::SingularA: return "SingularA";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateLikelihood:
    case ErrorKind::NotMixing:
    case ErrorKind::RankDeficient:
    case ErrorKind::NearSingularPivot:
    case ErrorKind::DiagonalizationFailed:
    case ErrorKind::NonFinite:
    case ErrorKind::SingularA:
      return true;
    default:
      return false;
  }
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(parent);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

std::uint64_t stream_id(std::string_view label) noexcept {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double standard_normal(Engine& engine) {
  double u1 = uniform01(engine);
  while (u1 <= 0.0) u1 = uniform01(engine);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t uniform_index(Engine& engine, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r = engine();
  while (r >= limit) r = engine();
  return r % n;
}

}  // namespace lbl
