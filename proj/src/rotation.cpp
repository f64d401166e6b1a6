#include "motionkit/rotation.hpp"

#include <algorithm>
#include <cmath>

namespace motionkit {

Mat3 rodrigues(const Vec3& axis_angle) {
    const double theta2 = axis_angle.squaredNorm();
    double a = 0.0;  // sin(t)/t
    double b = 0.0;  // (1 - cos(t))/t^2
    if (theta2 < 1e-8) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        const double theta = std::sqrt(theta2);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    const Mat3 k = skew(axis_angle);
    return Mat3::Identity() + a * k + b * (k * k);
}

Vec3 log_rotation(const Mat3& r) {
    const Vec3 w(0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)), 0.5 * (r(1, 0) - r(0, 1)));
    const double s = w.norm();
    const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
    const double theta = std::atan2(s, c);
    if (theta < 1e-6) {
        return w * (1.0 + theta * theta / 6.0);
    }
    if (M_PI - theta > 1e-4) {
        return w * (theta / s);
    }
    // Near pi: recover the axis from the symmetric part.
    const Mat3 sym = 0.5 * (r + r.transpose()) + Mat3::Identity();
    int col = 0;
    sym.diagonal().maxCoeff(&col);
    Vec3 axis = sym.col(col).normalized();
    if (axis.dot(w) < 0.0) axis = -axis;
    return axis * theta;
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
    const Mat3 rel = a.transpose() * b;
    const Vec3 w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
    return std::atan2(0.5 * w.norm(), 0.5 * (rel.trace() - 1.0));
}

Mat3 rotation_about_z(double angle) {
    return rodrigues(Vec3(0.0, 0.0, angle));
}

Vec3 slerp_axis_angle(const Vec3& a, const Vec3& b, double t) {
    const Mat3 ra = rodrigues(a);
    const Mat3 rel = ra.transpose() * rodrigues(b);
    return log_rotation(ra * rodrigues(t * log_rotation(rel)));
}

}  // namespace motionkit
