#include "motionkit/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace motionkit::io {

using json = nlohmann::ordered_json;

namespace {

constexpr int kMotionVersion = 1;
constexpr int kBodyVersion = 1;
constexpr int kSpecVersion = 1;

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("{}: malformed JSON ({})", what, e.what()));
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
    if (!j.is_object()) throw ValidationError(fmt::format("{}: expected an object", ctx));
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        if (!ok.count(k)) throw ValidationError(fmt::format("{}: unknown field '{}'", ctx, k));
    }
}

const json& require(const json& j, const char* key, const std::string& ctx) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(fmt::format("{}: missing field '{}'", ctx, key));
    return j.at(key);
}

double as_double(const json& j, const std::string& field) {
    if (!j.is_number()) throw ValidationError(fmt::format("{}: expected a number", field));
    return j.get<double>();
}

std::int64_t as_int(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ValidationError(fmt::format("{}: expected an integer", field));
    return j.get<std::int64_t>();
}

bool as_bool(const json& j, const std::string& field) {
    if (!j.is_boolean()) throw ValidationError(fmt::format("{}: expected true or false", field));
    return j.get<bool>();
}

std::string as_string(const json& j, const std::string& field) {
    if (!j.is_string()) throw ValidationError(fmt::format("{}: expected a string", field));
    return j.get<std::string>();
}

Vec3 as_vec3(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 3) throw ValidationError(fmt::format("{}: expected 3 numbers", field));
    return Vec3(as_double(j[0], field), as_double(j[1], field), as_double(j[2], field));
}

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <class T, class F>
void optional_field(const json& j, const char* key, T& out, F&& conv, const std::string& ctx) {
    if (j.contains(key)) out = conv(j.at(key), ctx + "." + key);
}

void check_version(const json& j, const char* format, int version, const std::string& ctx) {
    if (as_string(require(j, "format", ctx), ctx + ".format") != format) {
        throw ValidationError(fmt::format("{}: format is not '{}'", ctx, format));
    }
    const auto v = as_int(require(j, "version", ctx), ctx + ".version");
    if (v != version) throw ValidationError(fmt::format("{}: unsupported version {}", ctx, v));
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || !std::isfinite(v)) throw ValidationError(fmt::format("{}: bad number '{}'", where, s));
    return v;
}

int parse_int(const std::string& s, const std::string& where) {
    int v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ValidationError(fmt::format("{}: bad integer '{}'", where, s));
    return v;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
        out << content;
        if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
    }
    fs::rename(tmp, path);
}

// ---- motion ----------------------------------------------------------------------------

std::string motion_to_json(const MotionSequence& m) {
    json j;
    j["format"] = "motion";
    j["version"] = kMotionVersion;
    j["units"] = {{"translation", "m"}, {"pose", "rad"}, {"frame_rate", "Hz"}};
    j["frame_rate"] = m.frame_rate;
    j["shape"] = m.shape.beta;
    json frames = json::array();
    for (const auto& f : m.frames) {
        json pose = json::array();
        for (const auto& r : f.pose) pose.push_back(vec3(r));
        frames.push_back({{"translation", vec3(f.translation)}, {"pose", pose}});
    }
    j["frames"] = std::move(frames);
    return j.dump(1) + "\n";
}

MotionSequence motion_from_json(const std::string& text) {
    const json j = parse(text, "motion");
    check_keys(j, {"format", "version", "units", "frame_rate", "shape", "frames"}, "motion");
    check_version(j, "motion", kMotionVersion, "motion");
    MotionSequence m;
    m.frame_rate = as_double(require(j, "frame_rate", "motion"), "motion.frame_rate");
    const json& shape = require(j, "shape", "motion");
    if (!shape.is_array() || shape.size() != kShapeDims) throw ValidationError("motion.shape: expected 10 numbers");
    for (size_t k = 0; k < kShapeDims; ++k) m.shape.beta[k] = as_double(shape[k], "motion.shape");
    const json& frames = require(j, "frames", "motion");
    if (!frames.is_array()) throw ValidationError("motion.frames: expected an array");
    for (size_t i = 0; i < frames.size(); ++i) {
        const std::string ctx = fmt::format("motion.frames[{}]", i);
        check_keys(frames[i], {"translation", "pose"}, ctx);
        PoseFrame f;
        f.translation = as_vec3(require(frames[i], "translation", ctx), ctx + ".translation");
        const json& pose = require(frames[i], "pose", ctx);
        if (!pose.is_array() || pose.size() != kJointCount) {
            throw ValidationError(fmt::format("{}.pose: expected 24 rotations", ctx));
        }
        for (size_t r = 0; r < kJointCount; ++r) f.pose[r] = as_vec3(pose[r], ctx + ".pose");
        m.frames.push_back(f);
    }
    m.validate();
    return m;
}

void write_motion(const fs::path& path, const MotionSequence& m) { write_text(path, motion_to_json(m)); }
MotionSequence read_motion(const fs::path& path) { return motion_from_json(read_text(path)); }

// ---- body ------------------------------------------------------------------------------

std::string body_to_json(const SkinnedBody& body) {
    json j;
    j["format"] = "skinned_body";
    j["version"] = kBodyVersion;
    j["joint_names"] = kJointNames;
    j["parent"] = body.parent();
    json rest = json::array();
    for (const auto& p : body.rest_joints()) rest.push_back(vec3(p));
    j["rest_joints"] = rest;
    json verts = json::array();
    json weights = json::array();
    for (int v = 0; v < body.vertex_count(); ++v) {
        verts.push_back(vec3(body.template_vertices()[static_cast<size_t>(v)]));
        json row = json::array();
        for (const auto& w : body.weights_of(v)) row.push_back(json::array({w.joint, w.weight}));
        weights.push_back(row);
    }
    j["template_vertices"] = verts;
    j["skin_weights"] = weights;
    j["shape_dirs"] = body.shape_dirs();
    j["capsule_radius"] = body.capsule_radius();
    return j.dump(1) + "\n";
}

SkinnedBody body_from_json(const std::string& text) {
    const json j = parse(text, "body");
    const std::string ctx = "body";
    check_keys(j, {"format", "version", "joint_names", "parent", "rest_joints", "template_vertices", "skin_weights",
                   "shape_dirs", "capsule_radius"},
               ctx);
    check_version(j, "skinned_body", kBodyVersion, ctx);
    auto fixed = [&](const char* key, size_t n) -> const json& {
        const json& a = require(j, key, ctx);
        if (!a.is_array() || a.size() != n) throw ValidationError(fmt::format("body.{}: expected {} entries", key, n));
        return a;
    };
    std::array<int, kJointCount> parent{};
    const json& pj = fixed("parent", kJointCount);
    for (size_t i = 0; i < kJointCount; ++i) parent[i] = static_cast<int>(as_int(pj[i], "body.parent"));
    JointArray rest;
    const json& rj = fixed("rest_joints", kJointCount);
    for (size_t i = 0; i < kJointCount; ++i) rest[i] = as_vec3(rj[i], "body.rest_joints");
    const json& vj = require(j, "template_vertices", ctx);
    if (!vj.is_array() || vj.empty()) throw ValidationError("body.template_vertices: expected a non-empty array");
    std::vector<Vec3> verts;
    for (const auto& v : vj) verts.push_back(as_vec3(v, "body.template_vertices"));
    const json& wj = fixed("skin_weights", verts.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(verts.size()), kJointCount);
    for (size_t v = 0; v < verts.size(); ++v) {
        if (!wj[v].is_array()) throw ValidationError("body.skin_weights: expected [joint, weight] lists");
        for (const auto& e : wj[v]) {
            if (!e.is_array() || e.size() != 2) throw ValidationError("body.skin_weights: expected [joint, weight] pairs");
            const auto jnt = as_int(e[0], "body.skin_weights");
            if (jnt < 0 || jnt >= kJointCount) throw ValidationError("body.skin_weights: joint index out of range");
            w(static_cast<Eigen::Index>(v), jnt) += as_double(e[1], "body.skin_weights");
        }
    }
    SkinnedBody::BoneShapeDirs dirs{};
    const json& dj = fixed("shape_dirs", kJointCount);
    for (size_t b = 0; b < kJointCount; ++b) {
        if (!dj[b].is_array() || dj[b].size() != kShapeDims) throw ValidationError("body.shape_dirs: expected 10 per bone");
        for (size_t k = 0; k < kShapeDims; ++k) dirs[b][k] = as_double(dj[b][k], "body.shape_dirs");
    }
    SkinnedBody::BoneRadii radii{};
    const json& cj = fixed("capsule_radius", kJointCount);
    for (size_t b = 0; b < kJointCount; ++b) radii[b] = as_double(cj[b], "body.capsule_radius");
    return SkinnedBody(parent, rest, std::move(verts), std::move(w), dirs, radii);
}

void write_body(const fs::path& path, const SkinnedBody& body) { write_text(path, body_to_json(body)); }
SkinnedBody read_body(const fs::path& path) { return body_from_json(read_text(path)); }

// ---- synth spec ----------------------------------------------------------------------------

std::string synth_spec_to_json(const SynthSpec& s) {
    json j;
    j["format"] = "synth_spec";
    j["version"] = kSpecVersion;
    j["duration"] = s.duration;
    j["frame_rate"] = s.frame_rate;
    j["jump_time"] = s.jump_time;
    j["jump_height"] = s.jump_height;
    j["motion_profile"] = to_string(s.profile);
    j["lidar_origin"] = vec3(s.lidar_origin);
    j["lidar_noise_sigma"] = s.lidar_noise_sigma;
    j["imu_rate"] = s.imu_rate;
    j["imu_yaw_drift"] = s.imu_yaw_drift;
    j["imu_frame_yaw"] = s.imu_frame_yaw;
    j["imu_time_offset"] = s.imu_time_offset;
    j["imu_height_noise"] = s.imu_height_noise;
    j["event_camera"] = {{"focal", s.camera.focal},     {"cx", s.camera.cx},
                         {"cy", s.camera.cy},           {"width", s.camera.width},
                         {"height", s.camera.height},   {"contrast_step", s.camera.contrast_step},
                         {"sample_rate", s.camera.sample_rate}};
    json boxes = json::array();
    for (const auto& b : s.boxes) boxes.push_back({{"lo", vec3(b.lo)}, {"hi", vec3(b.hi)}});
    j["boxes"] = boxes;
    j["shape"] = s.shape.beta;
    j["seed"] = s.seed;
    return j.dump(1) + "\n";
}

SynthSpec synth_spec_from_json(const std::string& text) {
    const json j = parse(text, "spec");
    const std::string ctx = "spec";
    check_keys(j, {"format", "version", "duration", "frame_rate", "jump_time", "jump_height", "motion_profile",
                   "lidar_origin", "lidar_noise_sigma", "imu_rate", "imu_yaw_drift", "imu_frame_yaw", "imu_time_offset",
                   "imu_height_noise", "event_camera", "boxes", "shape", "seed"},
               ctx);
    if (j.contains("format") || j.contains("version")) check_version(j, "synth_spec", kSpecVersion, ctx);
    SynthSpec s;
    auto num = [](const json& v, const std::string& f) { return as_double(v, f); };
    optional_field(j, "duration", s.duration, num, ctx);
    optional_field(j, "frame_rate", s.frame_rate, num, ctx);
    optional_field(j, "jump_time", s.jump_time, num, ctx);
    optional_field(j, "jump_height", s.jump_height, num, ctx);
    if (j.contains("motion_profile")) s.profile = parse_motion_profile(as_string(j.at("motion_profile"), "spec.motion_profile"));
    optional_field(j, "lidar_origin", s.lidar_origin, as_vec3, ctx);
    optional_field(j, "lidar_noise_sigma", s.lidar_noise_sigma, num, ctx);
    optional_field(j, "imu_rate", s.imu_rate, num, ctx);
    optional_field(j, "imu_yaw_drift", s.imu_yaw_drift, num, ctx);
    optional_field(j, "imu_frame_yaw", s.imu_frame_yaw, num, ctx);
    optional_field(j, "imu_time_offset", s.imu_time_offset, num, ctx);
    optional_field(j, "imu_height_noise", s.imu_height_noise, num, ctx);
    if (j.contains("event_camera")) {
        const json& c = j.at("event_camera");
        const std::string cc = "spec.event_camera";
        check_keys(c, {"focal", "cx", "cy", "width", "height", "contrast_step", "sample_rate"}, cc);
        auto integer = [](const json& v, const std::string& f) { return static_cast<int>(as_int(v, f)); };
        optional_field(c, "focal", s.camera.focal, num, cc);
        optional_field(c, "cx", s.camera.cx, num, cc);
        optional_field(c, "cy", s.camera.cy, num, cc);
        optional_field(c, "width", s.camera.width, integer, cc);
        optional_field(c, "height", s.camera.height, integer, cc);
        optional_field(c, "contrast_step", s.camera.contrast_step, num, cc);
        optional_field(c, "sample_rate", s.camera.sample_rate, num, cc);
    }
    if (j.contains("boxes")) {
        const json& b = j.at("boxes");
        if (!b.is_array()) throw ValidationError("spec.boxes: expected an array");
        for (size_t i = 0; i < b.size(); ++i) {
            const std::string bc = fmt::format("spec.boxes[{}]", i);
            check_keys(b[i], {"lo", "hi"}, bc);
            s.boxes.push_back({as_vec3(require(b[i], "lo", bc), bc + ".lo"), as_vec3(require(b[i], "hi", bc), bc + ".hi")});
        }
    }
    if (j.contains("shape")) {
        const json& sh = j.at("shape");
        if (!sh.is_array() || sh.size() != kShapeDims) throw ValidationError("spec.shape: expected 10 numbers");
        for (size_t k = 0; k < kShapeDims; ++k) s.shape.beta[k] = as_double(sh[k], "spec.shape");
    }
    if (j.contains("seed")) {
        const json& sd = j.at("seed");
        if (!sd.is_number_unsigned() && !(sd.is_number_integer() && sd.get<std::int64_t>() >= 0)) {
            throw ValidationError("spec.seed: expected a non-negative integer");
        }
        s.seed = sd.get<std::uint64_t>();
    }
    s.validate();
    return s;
}

// ---- optimizer config ---------------------------------------------------------------------------

std::string optim_config_to_json(const OptimConfig& c) {
    json j;
    j["lambda_contact"] = c.weights.lambda_contact;
    j["lambda_smooth"] = c.weights.lambda_smooth;
    j["lambda_geo"] = c.weights.lambda_geo;
    j["w_scene"] = c.weights.w_scene;
    j["w_self"] = c.weights.w_self;
    j["w_trans"] = c.weights.w_trans;
    j["w_poses"] = c.weights.w_poses;
    j["w_joints"] = c.weights.w_joints;
    j["max_iters"] = c.max_iters;
    j["fd_step_rot"] = c.fd_step_rot;
    j["fd_step_trans"] = c.fd_step_trans;
    j["step_size"] = c.step_size;
    j["precondition"] = c.precondition;
    j["hpr_gamma"] = c.hpr_gamma;
    j["contact_margin"] = c.contact_margin;
    j["min_rel_decrease"] = c.min_rel_decrease;
    j["seed"] = c.seed;
    return j.dump(1);
}

OptimConfig optim_config_from_json(const std::string& text) {
    const json j = parse(text, "optim");
    const std::string ctx = "optim";
    check_keys(j, {"lambda_contact", "lambda_smooth", "lambda_geo", "w_scene", "w_self", "w_trans", "w_poses", "w_joints",
                   "max_iters", "fd_step_rot", "fd_step_trans", "step_size", "precondition", "hpr_gamma",
                   "contact_margin", "min_rel_decrease", "seed"},
               ctx);
    OptimConfig c;
    auto num = [](const json& v, const std::string& f) { return as_double(v, f); };
    optional_field(j, "lambda_contact", c.weights.lambda_contact, num, ctx);
    optional_field(j, "lambda_smooth", c.weights.lambda_smooth, num, ctx);
    optional_field(j, "lambda_geo", c.weights.lambda_geo, num, ctx);
    optional_field(j, "w_scene", c.weights.w_scene, num, ctx);
    optional_field(j, "w_self", c.weights.w_self, num, ctx);
    optional_field(j, "w_trans", c.weights.w_trans, num, ctx);
    optional_field(j, "w_poses", c.weights.w_poses, num, ctx);
    optional_field(j, "w_joints", c.weights.w_joints, num, ctx);
    optional_field(j, "max_iters", c.max_iters, [](const json& v, const std::string& f) { return static_cast<int>(as_int(v, f)); }, ctx);
    optional_field(j, "fd_step_rot", c.fd_step_rot, num, ctx);
    optional_field(j, "fd_step_trans", c.fd_step_trans, num, ctx);
    optional_field(j, "step_size", c.step_size, num, ctx);
    optional_field(j, "precondition", c.precondition, as_bool, ctx);
    optional_field(j, "hpr_gamma", c.hpr_gamma, num, ctx);
    optional_field(j, "contact_margin", c.contact_margin, num, ctx);
    optional_field(j, "min_rel_decrease", c.min_rel_decrease, num, ctx);
    if (j.contains("seed")) {
        const json& sd = j.at("seed");
        if (!sd.is_number_unsigned() && !(sd.is_number_integer() && sd.get<std::int64_t>() >= 0)) {
            throw ValidationError("optim.seed: expected a non-negative integer");
        }
        c.seed = sd.get<std::uint64_t>();
    }
    c.validate();
    return c;
}

// ---- report ----------------------------------------------------------------------------------

std::string report_to_json(const EvalReport& r) {
    json j;
    j["units"] = {{"distance", "mm"}, {"accel", "mm/s^2"}, {"pck03", "fraction"}};
    j["frame_count"] = r.frame_count;
    j["mpjpe"] = r.mpjpe;
    j["pa_mpjpe"] = r.pa_mpjpe;
    j["pve"] = r.pve;
    j["pck03"] = r.pck03;
    j["accel"] = r.accel;
    j["gmpjpe"] = r.gmpjpe;
    j["t_error"] = r.t_error;
    return j.dump(1);
}

std::string report_csv_header() { return "frame_count,mpjpe,pa_mpjpe,pve,pck03,accel,gmpjpe,t_error"; }

std::string report_csv_row(const EvalReport& r) {
    return fmt::format("{},{},{},{},{},{},{},{}", r.frame_count, format_double(r.mpjpe), format_double(r.pa_mpjpe),
                       format_double(r.pve), format_double(r.pck03), format_double(r.accel), format_double(r.gmpjpe),
                       format_double(r.t_error));
}

// ---- PLY -------------------------------------------------------------------------------------

namespace {

struct PlyHeader {
    size_t vertices = 0;
    size_t faces = 0;
    std::vector<std::string> vertex_props;
    size_t body_start = 0;  // line index after end_header
};

PlyHeader read_ply_header(const std::vector<std::string>& lines, const std::string& where) {
    if (lines.empty() || lines[0] != "ply") throw ValidationError(fmt::format("{}: not a PLY file", where));
    PlyHeader h;
    std::string element;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto tok = split(lines[i], ' ');
        if (tok[0] == "format") {
            if (tok.size() < 2 || tok[1] != "ascii") throw ValidationError(fmt::format("{}: only ASCII PLY is supported", where));
        } else if (tok[0] == "element" && tok.size() == 3) {
            element = tok[1];
            const auto n = static_cast<size_t>(parse_int(tok[2], where));
            if (element == "vertex") h.vertices = n;
            else if (element == "face") h.faces = n;
            else throw ValidationError(fmt::format("{}: unexpected element '{}'", where, element));
        } else if (tok[0] == "property" && element == "vertex") {
            h.vertex_props.push_back(tok.back());
        } else if (tok[0] == "end_header") {
            h.body_start = i + 1;
            return h;
        }
    }
    throw ValidationError(fmt::format("{}: missing end_header", where));
}

std::string ply_header(size_t nv, size_t nf, bool normals) {
    std::string h = "ply\nformat ascii 1.0\n";
    h += fmt::format("element vertex {}\nproperty double x\nproperty double y\nproperty double z\n", nv);
    if (normals) {
        h += fmt::format(
            "element face {}\nproperty list uchar int vertex_indices\nproperty double nx\nproperty double ny\n"
            "property double nz\n",
            nf);
    }
    return h + "end_header\n";
}

}  // namespace

void write_ply_points(const fs::path& path, const PointCloud& cloud) {
    std::string s = ply_header(cloud.size(), 0, false);
    for (const auto& p : cloud) s += fmt::format("{} {} {}\n", format_double(p.x()), format_double(p.y()), format_double(p.z()));
    write_text(path, s);
}

PointCloud read_ply_points(const fs::path& path) {
    const auto lines = lines_of(read_text(path));
    const std::string where = path.string();
    const PlyHeader h = read_ply_header(lines, where);
    if (lines.size() < h.body_start + h.vertices) throw ValidationError(fmt::format("{}: truncated vertex list", where));
    PointCloud cloud;
    cloud.reserve(h.vertices);
    for (size_t i = 0; i < h.vertices; ++i) {
        const auto tok = split(lines[h.body_start + i], ' ');
        if (tok.size() < 3) throw ValidationError(fmt::format("{}: vertex {} needs 3 coordinates", where, i));
        cloud.emplace_back(parse_double(tok[0], where), parse_double(tok[1], where), parse_double(tok[2], where));
    }
    return cloud;
}

void write_ply_mesh(const fs::path& path, const TriangleMesh& mesh) {
    std::string s = ply_header(mesh.vertices().size(), mesh.triangles().size(), true);
    for (const auto& p : mesh.vertices()) {
        s += fmt::format("{} {} {}\n", format_double(p.x()), format_double(p.y()), format_double(p.z()));
    }
    for (size_t t = 0; t < mesh.triangles().size(); ++t) {
        const auto& tri = mesh.triangles()[t];
        const Vec3& n = mesh.normals()[t];
        s += fmt::format("3 {} {} {} {} {} {}\n", tri[0], tri[1], tri[2], format_double(n.x()), format_double(n.y()),
                         format_double(n.z()));
    }
    write_text(path, s);
}

TriangleMesh read_ply_mesh(const fs::path& path) {
    const auto lines = lines_of(read_text(path));
    const std::string where = path.string();
    const PlyHeader h = read_ply_header(lines, where);
    if (lines.size() < h.body_start + h.vertices + h.faces) throw ValidationError(fmt::format("{}: truncated PLY body", where));
    std::vector<Vec3> verts;
    for (size_t i = 0; i < h.vertices; ++i) {
        const auto tok = split(lines[h.body_start + i], ' ');
        if (tok.size() < 3) throw ValidationError(fmt::format("{}: vertex {} needs 3 coordinates", where, i));
        verts.emplace_back(parse_double(tok[0], where), parse_double(tok[1], where), parse_double(tok[2], where));
    }
    std::vector<std::array<int, 3>> tris;
    std::vector<Vec3> normals;
    bool has_normals = true;
    for (size_t i = 0; i < h.faces; ++i) {
        const auto tok = split(lines[h.body_start + h.vertices + i], ' ');
        if (tok.size() < 4 || tok[0] != "3") throw ValidationError(fmt::format("{}: face {} is not a triangle", where, i));
        tris.push_back({parse_int(tok[1], where), parse_int(tok[2], where), parse_int(tok[3], where)});
        if (tok.size() >= 7) {
            normals.emplace_back(parse_double(tok[4], where), parse_double(tok[5], where), parse_double(tok[6], where));
        } else {
            has_normals = false;
        }
    }
    if (has_normals && !tris.empty()) return TriangleMesh(std::move(verts), std::move(tris), std::move(normals));
    return TriangleMesh(std::move(verts), std::move(tris));
}

// ---- CSV -------------------------------------------------------------------------------------

void write_series_csv(const fs::path& path, const SampledSeries& s) {
    std::string out = "t,value\n";
    for (size_t i = 0; i < s.size(); ++i) out += format_double(s.timestamps[i]) + "," + format_double(s.values[i]) + "\n";
    write_text(path, out);
}

SampledSeries read_series_csv(const fs::path& path) {
    const auto lines = lines_of(read_text(path));
    const std::string where = path.string();
    if (lines.empty() || lines[0] != "t,value") throw ValidationError(fmt::format("{}: expected header 't,value'", where));
    SampledSeries s;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto tok = split(lines[i], ',');
        if (tok.size() != 2) throw ValidationError(fmt::format("{}: line {} needs 2 columns", where, i + 1));
        s.timestamps.push_back(parse_double(tok[0], where));
        s.values.push_back(parse_double(tok[1], where));
    }
    s.validate();
    return s;
}

void write_events_csv(const fs::path& path, const EventStream& events) {
    std::string out = "t,x,y,polarity\n";
    for (const auto& e : events) out += fmt::format("{},{},{},{}\n", format_double(e.t), e.x, e.y, e.polarity);
    write_text(path, out);
}

EventStream read_events_csv(const fs::path& path) {
    const auto lines = lines_of(read_text(path));
    const std::string where = path.string();
    if (lines.empty() || lines[0] != "t,x,y,polarity") {
        throw ValidationError(fmt::format("{}: expected header 't,x,y,polarity'", where));
    }
    EventStream ev;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto tok = split(lines[i], ',');
        if (tok.size() != 4) throw ValidationError(fmt::format("{}: line {} needs 4 columns", where, i + 1));
        Event e{parse_double(tok[0], where), parse_int(tok[1], where), parse_int(tok[2], where), parse_int(tok[3], where)};
        if (e.polarity != 1 && e.polarity != -1) throw ValidationError(fmt::format("{}: line {} polarity must be +1 or -1", where, i + 1));
        ev.push_back(e);
    }
    return ev;
}

void write_features_csv(const fs::path& path, const Eigen::MatrixXd& f) {
    std::string out;
    for (Eigen::Index c = 0; c < f.cols(); ++c) out += (c ? ",f" : "f") + std::to_string(c);
    out += "\n";
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
        for (Eigen::Index c = 0; c < f.cols(); ++c) {
            if (c) out += ",";
            out += format_double(f(r, c));
        }
        out += "\n";
    }
    write_text(path, out);
}

Eigen::MatrixXd read_features_csv(const fs::path& path) {
    const auto lines = lines_of(read_text(path));
    const std::string where = path.string();
    if (lines.size() < 2) throw ValidationError(fmt::format("{}: needs a header and at least one row", where));
    const size_t d = split(lines[0], ',').size();
    Eigen::MatrixXd f(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(d));
    for (size_t r = 1; r < lines.size(); ++r) {
        const auto tok = split(lines[r], ',');
        if (tok.size() != d) throw ValidationError(fmt::format("{}: line {} has {} columns, expected {}", where, r + 1, tok.size(), d));
        for (size_t c = 0; c < d; ++c) {
            f(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = parse_double(tok[c], where);
        }
    }
    return f;
}

std::string history_csv(const std::vector<IterationLog>& history) {
    std::string out = "iter,contact,smooth,geo,total,step\n";
    for (const auto& h : history) {
        out += fmt::format("{},{},{},{},{},{}\n", h.iter, format_double(h.loss.contact), format_double(h.loss.smooth),
                           format_double(h.loss.geo), format_double(h.loss.total), format_double(h.step));
    }
    return out;
}

}  // namespace motionkit::io
