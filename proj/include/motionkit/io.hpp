#pragma once

// File formats. Structured files are JSON with a "format" tag and a "version";
// point clouds and meshes are ASCII PLY; series, events and features are CSV
// with a header row. Doubles are written in shortest round-trip form, so
// writing is deterministic and parse(write(x)) == x.

#include "motionkit/annot_opt.hpp"
#include "motionkit/body_model.hpp"
#include "motionkit/metrics.hpp"
#include "motionkit/sensor_sync.hpp"
#include "motionkit/synth.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace motionkit::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_text(const fs::path& path, const std::string& content);

// Motion: {"format":"motion","version":1,"units":{...},"frame_rate","shape","frames":[{"translation","pose"}]}
std::string motion_to_json(const MotionSequence& m);
MotionSequence motion_from_json(const std::string& text);
void write_motion(const fs::path& path, const MotionSequence& m);
MotionSequence read_motion(const fs::path& path);

// Body: tree, rest joints, template vertices, sparse weights, shape directions, radii.
std::string body_to_json(const SkinnedBody& body);
SkinnedBody body_from_json(const std::string& text);
void write_body(const fs::path& path, const SkinnedBody& body);
SkinnedBody read_body(const fs::path& path);

// Synth spec. Missing keys keep their defaults; unknown keys are rejected.
std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const std::string& text);

std::string optim_config_to_json(const OptimConfig& c);
OptimConfig optim_config_from_json(const std::string& text);

std::string report_to_json(const EvalReport& r);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

// PLY
void write_ply_points(const fs::path& path, const PointCloud& cloud);
PointCloud read_ply_points(const fs::path& path);
void write_ply_mesh(const fs::path& path, const TriangleMesh& mesh);
TriangleMesh read_ply_mesh(const fs::path& path);

// CSV
void write_series_csv(const fs::path& path, const SampledSeries& s);
SampledSeries read_series_csv(const fs::path& path);
void write_events_csv(const fs::path& path, const EventStream& events);
EventStream read_events_csv(const fs::path& path);
void write_features_csv(const fs::path& path, const Eigen::MatrixXd& features);
Eigen::MatrixXd read_features_csv(const fs::path& path);
std::string history_csv(const std::vector<IterationLog>& history);

/// %.17g, the fixed-width form used in CSV and PLY files.
std::string format_double(double x);

}  // namespace motionkit::io
