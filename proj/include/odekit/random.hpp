#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "odekit/error.hpp"

namespace odekit {

using Rng = std::mt19937_64;

/// Stream for realization `index` under `seed`. Each index gets its own
/// engine, so results do not depend on which worker runs which index.
inline Rng stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Parameter distributions with R-style names and arguments.
class Distribution {
 public:
  enum class Family { Gamma, Normal, Uniform, Poisson, Beta, Lognormal };

  static Distribution gamma(double shape, double rate) {
    if (!(shape > 0) || !(rate > 0)) throw DomainError("gamma needs shape > 0 and rate > 0");
    return {Family::Gamma, shape, rate};
  }
  static Distribution normal(double mean, double sd) {
    if (!(sd > 0) || !std::isfinite(mean)) throw DomainError("normal needs a finite mean and sd > 0");
    return {Family::Normal, mean, sd};
  }
  static Distribution uniform(double min, double max) {
    if (!(min < max)) throw DomainError("uniform needs min < max");
    return {Family::Uniform, min, max};
  }
  static Distribution poisson(double lambda) {
    if (!(lambda > 0)) throw DomainError("poisson needs lambda > 0");
    return {Family::Poisson, lambda, 0.0};
  }
  static Distribution beta(double shape1, double shape2) {
    if (!(shape1 > 0) || !(shape2 > 0)) throw DomainError("beta needs shape1 > 0 and shape2 > 0");
    return {Family::Beta, shape1, shape2};
  }
  static Distribution lognormal(double meanlog, double sdlog) {
    if (!(sdlog > 0) || !std::isfinite(meanlog)) throw DomainError("lognormal needs a finite meanlog and sdlog > 0");
    return {Family::Lognormal, meanlog, sdlog};
  }

  /// Builds from an R name ("gamma" or "rgamma") and its named arguments.
  static Distribution from_name(std::string name, const std::map<std::string, double>& args) {
    if (name.size() > 1 && name[0] == 'r') name.erase(0, 1);
    auto get = [&](const char* key, std::optional<double> fallback = std::nullopt) {
      auto it = args.find(key);
      if (it != args.end()) return it->second;
      if (fallback) return *fallback;
      throw DomainError("distribution '" + name + "' needs argument '" + key + "'");
    };
    Distribution d = [&] {
      if (name == "gamma") {
        if (args.count("scale") && !args.count("rate")) return gamma(get("shape"), 1.0 / get("scale"));
        return gamma(get("shape"), get("rate", 1.0));
      }
      if (name == "norm" || name == "normal") return normal(get("mean", 0.0), get("sd", 1.0));
      if (name == "unif" || name == "uniform") return uniform(get("min", 0.0), get("max", 1.0));
      if (name == "pois" || name == "poisson") return poisson(get("lambda"));
      if (name == "beta") return beta(get("shape1"), get("shape2"));
      if (name == "lnorm" || name == "lognormal") return lognormal(get("meanlog", 0.0), get("sdlog", 1.0));
      throw DomainError("unknown distribution '" + name + "'");
    }();
    return d;
  }

  Family family() const { return family_; }
  double first() const { return a_; }
  double second() const { return b_; }

  std::string name() const {
    switch (family_) {
      case Family::Gamma: return "gamma";
      case Family::Normal: return "normal";
      case Family::Uniform: return "uniform";
      case Family::Poisson: return "poisson";
      case Family::Beta: return "beta";
      case Family::Lognormal: return "lognormal";
    }
    return "?";
  }

  /// Named arguments in R order, for serialization.
  std::map<std::string, double> arguments() const {
    switch (family_) {
      case Family::Gamma: return {{"shape", a_}, {"rate", b_}};
      case Family::Normal: return {{"mean", a_}, {"sd", b_}};
      case Family::Uniform: return {{"min", a_}, {"max", b_}};
      case Family::Poisson: return {{"lambda", a_}};
      case Family::Beta: return {{"shape1", a_}, {"shape2", b_}};
      case Family::Lognormal: return {{"meanlog", a_}, {"sdlog", b_}};
    }
    return {};
  }

  double mean() const {
    switch (family_) {
      case Family::Gamma: return a_ / b_;
      case Family::Normal: return a_;
      case Family::Uniform: return 0.5 * (a_ + b_);
      case Family::Poisson: return a_;
      case Family::Beta: return a_ / (a_ + b_);
      case Family::Lognormal: return std::exp(a_ + 0.5 * b_ * b_);
    }
    return 0.0;
  }

  double operator()(Rng& rng) const {
    switch (family_) {
      case Family::Gamma: return std::gamma_distribution<double>(a_, 1.0 / b_)(rng);
      case Family::Normal: return std::normal_distribution<double>(a_, b_)(rng);
      case Family::Uniform: return std::uniform_real_distribution<double>(a_, b_)(rng);
      case Family::Poisson: return static_cast<double>(std::poisson_distribution<long long>(a_)(rng));
      case Family::Beta: {
        const double x = std::gamma_distribution<double>(a_, 1.0)(rng);
        const double y = std::gamma_distribution<double>(b_, 1.0)(rng);
        return x / (x + y);
      }
      case Family::Lognormal: return std::lognormal_distribution<double>(a_, b_)(rng);
    }
    return 0.0;
  }

 private:
  Distribution(Family f, double a, double b) : family_(f), a_(a), b_(b) {}

  Family family_;
  double a_;
  double b_;
};

inline std::vector<double> draw(const Distribution& dist, std::size_t n, Rng& rng) {
  if (n < 1) throw DomainError("draw needs n >= 1");
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace odekit
