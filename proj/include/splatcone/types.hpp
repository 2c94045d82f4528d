#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatcone {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable input files.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Output files that cannot be written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid options or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The convex solver hit its iteration cap or produced non-finite iterates.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace splatcone
