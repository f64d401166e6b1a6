#pragma once

#include "motionkit/body_model.hpp"
#include "motionkit/geometry_types.hpp"

#include <span>
#include <vector>

namespace motionkit {

/// Distances in millimetres, ACCEL in mm/s^2, PCK as a fraction.
struct EvalReport {
    double mpjpe = 0.0;
    double pa_mpjpe = 0.0;
    double pve = 0.0;
    double pck03 = 0.0;
    double accel = 0.0;
    double gmpjpe = 0.0;
    double t_error = 0.0;
    size_t frame_count = 0;
};

inline constexpr double kPckThresholdMm = 300.0;

/// Local metrics (MPJPE, PVE, PCK, ACCEL) subtract each skeleton's root
/// position; PA-MPJPE aligns each frame by a similarity transform; GMPJPE and
/// T-Error use world coordinates. ACCEL needs at least 3 frames and is 0 otherwise.
EvalReport evaluate(const MotionSequence& pred, const MotionSequence& gt, const SkinnedBody& body,
                    double pck_threshold_mm = kPckThresholdMm);

/// Mean over interior frames and joints of |a_pred - a_gt| with
/// a(i) = (x(i+1) - 2x(i) + x(i-1)) * rate^2. Inputs in metres, result in mm/s^2.
double accel_error(std::span<const std::vector<Vec3>> pred, std::span<const std::vector<Vec3>> gt, double frame_rate);

/// Mean depth (mm) of skinned vertices below the scene surface, over all frames and vertices.
double mean_penetration_mm(const MotionSequence& motion, const SkinnedBody& body, const TriangleMesh& scene);

}  // namespace motionkit
