#include "motionkit/pipeline.hpp"

#include "motionkit/fusion.hpp"
#include "motionkit/io.hpp"
#include "motionkit/kernels.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <set>
#include <ostream>

namespace motionkit {

using json = nlohmann::ordered_json;

namespace {

constexpr int kConfigVersion = 1;
constexpr int kBundleVersion = 1;

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("{}: malformed JSON ({})", what, e.what()));
    }
}

std::string cloud_name(size_t i) { return fmt::format("frame_{:05d}.ply", i); }

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

PerturbationPreset perturbation_preset(const std::string& name) {
    if (name == "none") return {0.0, 0.0};
    if (name == "easy") return {0.05, 0.02};
    if (name == "standard") return {0.1, 0.05};
    throw ValidationError(fmt::format("perturbation: unknown preset '{}'", name));
}

void PipelineConfig::validate() const {
    optim.validate();
    if (!(peak_prominence > 0.0)) throw ValidationError("sync.peak_prominence: must be positive");
    if (!(match_window > 0.0)) throw ValidationError("sync.match_window: must be positive");
    if (!(pck_threshold_mm > 0.0)) throw ValidationError("metrics.pck_threshold_mm: must be positive");
    perturbation_preset(perturbation);
}

PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir) {
    const json j = parse_json(text, "config");
    if (!j.is_object()) throw ValidationError("config: expected an object");
    const std::set<std::string> allowed = {"format", "version", "bundle_dir", "output_dir", "optim",
                                           "sync",   "metrics", "perturbation", "seed"};
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ValidationError(fmt::format("config: unknown field '{}'", k));
    }
    if (j.contains("version") && (!j["version"].is_number_integer() || j["version"].get<int>() != kConfigVersion)) {
        throw ValidationError("config.version: unsupported version");
    }
    PipelineConfig c;
    auto str = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw ValidationError(fmt::format("config.{}: expected a path string", key));
        return j[key].get<std::string>();
    };
    c.bundle_dir = resolve(base_dir, str("bundle_dir"));
    c.output_dir = resolve(base_dir, str("output_dir"));
    if (j.contains("optim")) c.optim = io::optim_config_from_json(j["optim"].dump());
    auto num = [](const json& o, const char* key, const std::string& ctx, double& out) {
        if (!o.contains(key)) return;
        if (!o[key].is_number()) throw ValidationError(fmt::format("{}.{}: expected a number", ctx, key));
        out = o[key].get<double>();
    };
    if (j.contains("sync")) {
        const json& s = j["sync"];
        if (!s.is_object()) throw ValidationError("config.sync: expected an object");
        for (const auto& [k, v] : s.items()) {
            if (k != "peak_prominence" && k != "match_window") throw ValidationError(fmt::format("config.sync: unknown field '{}'", k));
        }
        num(s, "peak_prominence", "config.sync", c.peak_prominence);
        num(s, "match_window", "config.sync", c.match_window);
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        if (!m.is_object()) throw ValidationError("config.metrics: expected an object");
        for (const auto& [k, v] : m.items()) {
            if (k != "pck_threshold_mm") throw ValidationError(fmt::format("config.metrics: unknown field '{}'", k));
        }
        num(m, "pck_threshold_mm", "config.metrics", c.pck_threshold_mm);
    }
    if (j.contains("perturbation")) {
        if (!j["perturbation"].is_string()) throw ValidationError("config.perturbation: expected a string");
        c.perturbation = j["perturbation"].get<std::string>();
    }
    if (j.contains("seed")) {
        const json& sd = j["seed"];
        if (!sd.is_number_unsigned() && !(sd.is_number_integer() && sd.get<std::int64_t>() >= 0)) {
            throw ValidationError("config.seed: expected a non-negative integer");
        }
        c.seed = sd.get<std::uint64_t>();
    }
    c.validate();
    return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
    json j;
    j["format"] = "pipeline_config";
    j["version"] = kConfigVersion;
    j["bundle_dir"] = c.bundle_dir.string();
    j["output_dir"] = c.output_dir.string();
    j["optim"] = json::parse(io::optim_config_to_json(c.optim));
    j["sync"] = {{"peak_prominence", c.peak_prominence}, {"match_window", c.match_window}};
    j["metrics"] = {{"pck_threshold_mm", c.pck_threshold_mm}};
    j["perturbation"] = c.perturbation;
    j["seed"] = c.seed;
    return j.dump(1) + "\n";
}

// ---- bundles ----------------------------------------------------------------------------

void write_bundle(const fs::path& dir, const SynthSpec& spec, const SynthBundle& b, const SkinnedBody& body) {
    fs::create_directories(dir / "clouds");
    json manifest;
    manifest["format"] = "synth_bundle";
    manifest["version"] = kBundleVersion;
    manifest["spec"] = json::parse(io::synth_spec_to_json(spec));
    manifest["seed"] = spec.seed;
    manifest["frame_count"] = b.gt_motion.size();
    json r = json::array();
    for (int i = 0; i < 3; ++i) r.push_back({b.r_wi.rotation()(i, 0), b.r_wi.rotation()(i, 1), b.r_wi.rotation()(i, 2)});
    manifest["r_wi"] = r;
    manifest["lidar_origin"] = {spec.lidar_origin.x(), spec.lidar_origin.y(), spec.lidar_origin.z()};
    manifest["event_count"] = b.events.size();
    io::write_text(dir / "manifest.json", manifest.dump(1) + "\n");

    io::write_body(dir / "body.json", body);
    io::write_motion(dir / "gt_motion.json", b.gt_motion);
    json imu;
    imu["format"] = "imu_poses";
    imu["version"] = 1;
    imu["timestamps"] = b.imu_timestamps;
    json poses = json::array();
    for (const auto& p : b.imu_poses) {
        json row = json::array();
        for (const auto& r3 : p.pose) row.push_back({r3.x(), r3.y(), r3.z()});
        poses.push_back(row);
    }
    imu["poses"] = poses;
    io::write_text(dir / "imu_poses.json", imu.dump(1) + "\n");
    io::write_series_csv(dir / "imu_height.csv", b.imu_height);
    io::write_series_csv(dir / "lidar_height.csv", b.lidar_height);
    io::write_events_csv(dir / "events.csv", b.events);
    io::write_ply_mesh(dir / "scene.ply", b.scene);
    for (size_t i = 0; i < b.lidar_clouds.size(); ++i) io::write_ply_points(dir / "clouds" / cloud_name(i), b.lidar_clouds[i]);
}

LoadedBundle read_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ValidationError(fmt::format("bundle directory '{}' does not exist", dir.string()));
    const json manifest = parse_json(io::read_text(dir / "manifest.json"), "manifest");
    if (!manifest.is_object() || manifest.value("format", "") != "synth_bundle") {
        throw ValidationError("manifest: format is not 'synth_bundle'");
    }
    if (!manifest.contains("spec") || !manifest.contains("r_wi")) throw ValidationError("manifest: missing spec or r_wi");
    SynthSpec spec = io::synth_spec_from_json(manifest["spec"].dump());
    Mat3 r;
    const json& rj = manifest["r_wi"];
    if (!rj.is_array() || rj.size() != 3) throw ValidationError("manifest.r_wi: expected a 3x3 matrix");
    for (int i = 0; i < 3; ++i) {
        if (!rj[i].is_array() || rj[i].size() != 3) throw ValidationError("manifest.r_wi: expected a 3x3 matrix");
        for (int k = 0; k < 3; ++k) {
            if (!rj[i][k].is_number()) throw ValidationError("manifest.r_wi: expected numbers");
            r(i, k) = rj[i][k].get<double>();
        }
    }

    LoadedBundle b{spec, io::read_body(dir / "body.json"), std::nullopt, {}, {}, {}, {}, {}, TriangleMesh(), CalibrationMatrix(r)};
    if (fs::exists(dir / "gt_motion.json")) b.gt_motion = io::read_motion(dir / "gt_motion.json");
    b.lidar_height = io::read_series_csv(dir / "lidar_height.csv");
    b.imu_height = io::read_series_csv(dir / "imu_height.csv");
    b.scene = io::read_ply_mesh(dir / "scene.ply");

    const json imu = parse_json(io::read_text(dir / "imu_poses.json"), "imu_poses");
    if (!imu.is_object() || !imu.contains("timestamps") || !imu.contains("poses")) {
        throw ValidationError("imu_poses: missing timestamps or poses");
    }
    const json& ts = imu["timestamps"];
    const json& ps = imu["poses"];
    if (!ts.is_array() || !ps.is_array() || ts.size() != ps.size() || ts.empty()) {
        throw ValidationError("imu_poses: timestamps and poses must be equal-length arrays");
    }
    for (size_t k = 0; k < ts.size(); ++k) {
        if (!ts[k].is_number()) throw ValidationError("imu_poses.timestamps: expected numbers");
        b.imu_timestamps.push_back(ts[k].get<double>());
        if (k > 0 && !(b.imu_timestamps[k] > b.imu_timestamps[k - 1])) {
            throw ValidationError("imu_poses.timestamps: must be strictly increasing");
        }
        if (!ps[k].is_array() || ps[k].size() != static_cast<size_t>(kJointCount)) throw ValidationError("imu_poses.poses: expected 24 rotations");
        PoseFrame f;
        for (int j = 0; j < kJointCount; ++j) {
            const json& v = ps[k][j];
            if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
                throw ValidationError("imu_poses.poses: expected 3 numbers per rotation");
            }
            f.pose[j] = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
        }
        f.validate();
        b.imu_poses.push_back(f);
    }

    const size_t n = b.lidar_height.size();
    for (size_t i = 0; i < n; ++i) b.clouds.push_back(io::read_ply_points(dir / "clouds" / cloud_name(i)));
    if (b.gt_motion && b.gt_motion->size() != n) throw ValidationError("gt_motion frame count differs from the LiDAR stream");
    return b;
}

// ---- run ----------------------------------------------------------------------------------

RunOutcome run_pipeline(const PipelineConfig& config, const LoadedBundle& b, const Ablation& ablation, Exec exec) {
    config.validate();
    RunOutcome out;
    out.clock_offset = estimate_offset(b.lidar_height, b.imu_height, config.peak_prominence, config.match_window);

    const size_t n = b.lidar_height.size();
    std::vector<JointArray> imu(n);
    std::vector<Vec3> hips(n);
    for (size_t i = 0; i < n; ++i) {
        const double t_imu = b.lidar_height.timestamps[i] - out.clock_offset;
        imu[i] = interpolate_pose(b.imu_timestamps, b.imu_poses, t_imu).pose;
        if (b.clouds[i].empty()) {
            if (i == 0) throw ValidationError("first LiDAR frame is empty; no hip center to start from");
            hips[i] = hips[i - 1];
            continue;
        }
        Vec3 c = Vec3::Zero();
        for (const auto& p : b.clouds[i]) c += p;
        hips[i] = c / static_cast<double>(b.clouds[i].size());
    }
    const double rate = b.spec.frame_rate;
    OptimConfig oc = config.optim;
    if (ablation.no_contact) oc.weights.lambda_contact = 0.0;
    if (ablation.no_smooth) oc.weights.lambda_smooth = 0.0;
    if (ablation.no_geo) oc.weights.lambda_geo = 0.0;
    const FitProblem problem(b.body, b.spec.shape, b.scene, b.clouds, b.spec.lidar_origin, oc.hpr_gamma);

    out.initial = recenter_on_clouds(initialize_from_sensors(imu, b.r_wi, hips, b.spec.shape, rate), problem, 3, exec);
    const PerturbationPreset p = perturbation_preset(config.perturbation);
    if (p.trans_sigma > 0.0 || p.pose_sigma > 0.0) out.initial = perturb_motion(out.initial, p.trans_sigma, p.pose_sigma, config.seed);
    out.result = optimize(out.initial, problem, oc, exec);

    if (b.gt_motion) {
        out.initial_report = evaluate(out.initial, *b.gt_motion, b.body, config.pck_threshold_mm);
        out.final_report = evaluate(out.result.motion, *b.gt_motion, b.body, config.pck_threshold_mm);
    }
    return out;
}

std::string format_report_text(const EvalReport& r) {
    return fmt::format(
        "frames    {}\nMPJPE     {:.3f} mm\nPA-MPJPE  {:.3f} mm\nPVE       {:.3f} mm\nPCK0.3    {:.4f}\n"
        "ACCEL     {:.3f} mm/s^2\nGMPJPE    {:.3f} mm\nT-Error   {:.3f} mm\n",
        r.frame_count, r.mpjpe, r.pa_mpjpe, r.pve, r.pck03, r.accel, r.gmpjpe, r.t_error);
}

// ---- commands -------------------------------------------------------------------------------

int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const SyncError& e) {
        err << "sync failure (stream " << e.stream() << "): " << e.what() << "\n";
        return kExitSync;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ValidationError& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const StructuralError& e) {
        err << "invalid body: " << e.what() << "\n";
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "file error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_synth(const SynthCommand& c, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (c.out_dir.empty()) throw ValidationError("output directory is required");
        SynthSpec spec = c.spec_file.empty() ? SynthSpec{} : io::synth_spec_from_json(io::read_text(c.spec_file));
        if (c.seed) spec.seed = *c.seed;
        spec.validate();
        const SkinnedBody body = make_standard_body();
        const SynthBundle bundle = generate(spec, body);

        // Build next to the target and swap in, so a failure leaves nothing behind.
        const fs::path tmp = c.out_dir.string() + ".partial";
        fs::remove_all(tmp);
        try {
            write_bundle(tmp, spec, bundle, body);
        } catch (...) {
            fs::remove_all(tmp);
            throw;
        }
        fs::remove_all(c.out_dir);
        fs::rename(tmp, c.out_dir);
        err << fmt::format("wrote {} frames, {} events to {}\n", bundle.gt_motion.size(), bundle.events.size(),
                           c.out_dir.string());
        out << c.out_dir.string() << "\n";
        return kExitOk;
    });
}

int cmd_run(const RunCommand& c, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        PipelineConfig cfg = pipeline_config_from_json(io::read_text(c.config_file), c.config_file.parent_path());
        if (c.seed) cfg.seed = *c.seed;
        const LoadedBundle bundle = read_bundle(cfg.bundle_dir);
        const RunOutcome r = run_pipeline(cfg, bundle, c.ablation);

        fs::create_directories(cfg.output_dir);
        io::write_motion(cfg.output_dir / "refined_motion.json", r.result.motion);
        io::write_text(cfg.output_dir / "loss_history.csv", io::history_csv(r.result.history));

        json report;
        report["clock_offset"] = r.clock_offset;
        report["iterations"] = r.result.iterations;
        report["stalled"] = r.result.stalled;
        report["initial_loss"] = r.result.history.front().loss.total;
        report["final_loss"] = r.result.history.back().loss.total;
        report["geo_frames_skipped"] = r.result.history.back().loss.geo_frames_skipped;
        if (r.final_report) {
            report["ground_truth"] = true;
            report["initial"] = json::parse(io::report_to_json(*r.initial_report));
            report["final"] = json::parse(io::report_to_json(*r.final_report));
            io::write_text(cfg.output_dir / "report.csv",
                           io::report_csv_header() + "\n" + io::report_csv_row(*r.final_report) + "\n");
        } else {
            report["ground_truth"] = false;
            report["notice"] = "no ground truth";
            err << "no ground truth in bundle; metrics skipped\n";
        }
        const std::string report_text = report.dump(1) + "\n";
        io::write_text(cfg.output_dir / "report.json", report_text);

        err << fmt::format("clock offset {:.4f} s, {} iterations{}\n", r.clock_offset, r.result.iterations,
                           r.result.stalled ? " (stalled)" : "");
        if (c.json) {
            out << report_text;
        } else if (r.final_report) {
            out << "initial\n" << format_report_text(*r.initial_report) << "final\n" << format_report_text(*r.final_report);
        } else {
            out << "no ground truth\n";
        }
        return kExitOk;
    });
}

int cmd_eval(const EvalCommand& c, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const MotionSequence pred = io::read_motion(c.pred_file);
        const MotionSequence gt = io::read_motion(c.gt_file);
        const SkinnedBody body = c.body_file.empty() ? make_standard_body() : io::read_body(c.body_file);
        const EvalReport r = evaluate(pred, gt, body);
        const std::string j = io::report_to_json(r) + "\n";
        if (!c.out_file.empty()) io::write_text(c.out_file, j);
        out << (c.json ? j : format_report_text(r));
        return kExitOk;
    });
}

int cmd_fuse_demo(const FuseCommand& c, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Eigen::MatrixXd lidar = io::read_features_csv(c.features_dir / "lidar.csv");
        const Eigen::MatrixXd rgb = io::read_features_csv(c.features_dir / "rgb.csv");
        const Eigen::MatrixXd event = io::read_features_csv(c.features_dir / "event.csv");
        if (lidar.rows() != rgb.rows() || lidar.rows() != event.rows() || lidar.cols() != rgb.cols() ||
            lidar.cols() != event.cols()) {
            throw ValidationError(fmt::format("feature shapes differ: lidar {}x{}, rgb {}x{}, event {}x{}", lidar.rows(),
                                              lidar.cols(), rgb.rows(), rgb.cols(), event.rows(), event.cols()));
        }
        const int d = static_cast<int>(lidar.cols());
        fusion::TummWeights w;
        const fs::path weights_file = c.features_dir / "weights.bin";
        if (fs::exists(weights_file)) {
            std::ifstream in(weights_file, std::ios::binary);
            auto units = fusion::read_weights(in);
            if (units.size() != 3) throw ValidationError("weights.bin: expected 3 MMCA units");
            if (units[0].d != d) throw ValidationError("weights.bin: width does not match the features");
            w = {std::move(units[0]), std::move(units[1]), std::move(units[2])};
        } else {
            w = fusion::init_tumm_weights(d, c.seed);
        }
        if (c.preset == "residual-zero") {
            fusion::zero_residual_outputs(w.rgb);
            fusion::zero_residual_outputs(w.event);
            fusion::zero_residual_outputs(w.fuse);
        } else if (c.preset != "random") {
            throw ValidationError(fmt::format("preset: unknown weights preset '{}'", c.preset));
        }
        const Eigen::MatrixXd fused = fusion::tumm_forward<double>(lidar, rgb, event, w);
        const fs::path target = c.out_file.empty() ? c.features_dir / "fused.csv" : c.out_file;
        io::write_features_csv(target, fused);
        out << target.string() << "\n";
        return kExitOk;
    });
}

}  // namespace motionkit
