#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>
#include <vector>

namespace motionkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error hierarchy. The CLI maps each kind onto a process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: wrong sizes, out-of-range values, unsorted streams.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed kinematic tree or mesh topology.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Peak-based clock alignment could not be established.
class SyncError : public Error {
public:
    SyncError(std::string stream, const std::string& what)
        : Error(what), stream_(std::move(stream)) {}
    const std::string& stream() const { return stream_; }

private:
    std::string stream_;
};

/// Non-finite loss or similar numerical breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Selects the reference (serial) or OpenMP kernel for data-parallel loops.
/// Both produce bit-identical results: parallel loops write per-index outputs
/// and every reduction runs serially afterwards.
enum class Exec { serial, parallel };

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

}  // namespace motionkit
