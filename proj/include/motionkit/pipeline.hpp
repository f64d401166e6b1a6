#pragma once

#include "motionkit/annot_opt.hpp"
#include "motionkit/metrics.hpp"
#include "motionkit/sensor_sync.hpp"
#include "motionkit/synth.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace motionkit {

namespace fs = std::filesystem;

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitValidation = 2, kExitSync = 3, kExitNumerical = 4 };

struct PerturbationPreset {
    double trans_sigma = 0.0;
    double pose_sigma = 0.0;
};

/// "none", "easy" (0.05 m, 0.02 rad) or "standard" (0.1 m, 0.05 rad).
PerturbationPreset perturbation_preset(const std::string& name);

struct PipelineConfig {
    fs::path bundle_dir;
    fs::path output_dir;
    OptimConfig optim;
    double peak_prominence = kDefaultPeakProminence;
    double match_window = kDefaultPeakMatchWindow;
    double pck_threshold_mm = kPckThresholdMm;
    std::string perturbation = "none";
    std::uint64_t seed = 0;

    void validate() const;
};

/// Relative paths in the file resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir = {});
std::string pipeline_config_to_json(const PipelineConfig& c);

// ---- bundles ----------------------------------------------------------------------------

/// Directory layout: manifest.json, body.json, gt_motion.json, imu_poses.json,
/// imu_height.csv, lidar_height.csv, events.csv, scene.ply, clouds/frame_NNNNN.ply.
void write_bundle(const fs::path& dir, const SynthSpec& spec, const SynthBundle& bundle, const SkinnedBody& body);

struct LoadedBundle {
    SynthSpec spec;
    SkinnedBody body;
    std::optional<MotionSequence> gt_motion;
    std::vector<PointCloud> clouds;
    SampledSeries lidar_height;
    SampledSeries imu_height;
    std::vector<double> imu_timestamps;
    std::vector<PoseFrame> imu_poses;
    TriangleMesh scene;
    CalibrationMatrix r_wi;
};
LoadedBundle read_bundle(const fs::path& dir);

// ---- run ----------------------------------------------------------------------------------

struct Ablation {
    bool no_contact = false;
    bool no_smooth = false;
    bool no_geo = false;
};

struct RunOutcome {
    double clock_offset = 0.0;  // seconds added to IMU time
    MotionSequence initial;
    OptimResult result;
    std::optional<EvalReport> initial_report;
    std::optional<EvalReport> final_report;
};

/// Sync, sensor initialization, optional perturbation, optimization and evaluation.
RunOutcome run_pipeline(const PipelineConfig& config, const LoadedBundle& bundle, const Ablation& ablation = {},
                        Exec exec = Exec::parallel);

// ---- commands -------------------------------------------------------------------------------
// Each returns an exit code; errors are reported on `err`.

struct SynthCommand {
    fs::path spec_file;  // empty: default spec
    fs::path out_dir;
    std::optional<std::uint64_t> seed;
};
int cmd_synth(const SynthCommand& c, std::ostream& out, std::ostream& err);

struct RunCommand {
    fs::path config_file;
    std::optional<std::uint64_t> seed;
    Ablation ablation;
    bool json = false;
};
int cmd_run(const RunCommand& c, std::ostream& out, std::ostream& err);

struct EvalCommand {
    fs::path pred_file;
    fs::path gt_file;
    fs::path body_file;  // empty: standard body
    fs::path out_file;   // empty: stdout only
    bool json = false;
};
int cmd_eval(const EvalCommand& c, std::ostream& out, std::ostream& err);

struct FuseCommand {
    fs::path features_dir;  // lidar.csv, rgb.csv, event.csv; optional weights.bin
    fs::path out_file;      // empty: <features_dir>/fused.csv
    std::uint64_t seed = 0;
    std::string preset = "random";  // or "residual-zero"
};
int cmd_fuse_demo(const FuseCommand& c, std::ostream& out, std::ostream& err);

/// Runs `body` and maps the error hierarchy onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body);

std::string format_report_text(const EvalReport& r);

}  // namespace motionkit
