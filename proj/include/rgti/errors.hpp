#pragma once

#include <stdexcept>
#include <string>

namespace rgti {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class SingularOperatingPoint : public Error {
 public:
  using Error::Error;
};

class NoCrossover : public Error {
 public:
  using Error::Error;
};

class InfeasibleDesign : public Error {
 public:
  InfeasibleDesign(const std::string& what, double pm_min = 0.0, double pm_max = 0.0)
      : Error(what), pm_min_(pm_min), pm_max_(pm_max) {}

  // Achievable phase-margin range at the requested crossover.
  double pm_min() const { return pm_min_; }
  double pm_max() const { return pm_max_; }

 private:
  double pm_min_;
  double pm_max_;
};

class SimulationDiverged : public Error {
 public:
  SimulationDiverged(double t, std::string channel)
      : Error("simulation diverged at t=" + std::to_string(t) + " in channel '" + channel + "'"),
        t_(t),
        channel_(std::move(channel)) {}

  double time() const { return t_; }
  const std::string& channel() const { return channel_; }

 private:
  double t_;
  std::string channel_;
};

}  // namespace rgti
