#pragma once

#include "motionkit/types.hpp"

namespace motionkit {

/// Axis-angle vector to rotation matrix (Rodrigues). Smooth through zero.
Mat3 rodrigues(const Vec3& axis_angle);

/// Rotation matrix to axis-angle with angle in [0, pi].
Vec3 log_rotation(const Mat3& r);

/// Angle of the relative rotation a^T b, in [0, pi].
double geodesic_angle(const Mat3& a, const Mat3& b);

Mat3 rotation_about_z(double angle);

/// Geodesic interpolation between two axis-angle rotations, t in [0, 1].
Vec3 slerp_axis_angle(const Vec3& a, const Vec3& b, double t);

inline Mat3 skew(const Vec3& v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return k;
}

}  // namespace motionkit
