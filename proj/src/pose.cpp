#include "mapnet/pose.hpp"

namespace mapnet {

const std::array<std::string, kNumJoints>& joint_names() {
    static const std::array<std::string, kNumJoints> names = {
        "C7",   "RSHO", "LSHO", "RMEL", "LMEL", "RMWR", "LMWR",
        "RBWT", "LBWT", "RKNE", "LKNE", "RTOE", "LTOE"};
    return names;
}

JointId joint_from_name(const std::string& name) {
    const auto& names = joint_names();
    for (int i = 0; i < kNumJoints; ++i) {
        if (names[i] == name) return static_cast<JointId>(i);
    }
    throw std::invalid_argument("unknown joint name: " + name);
}

namespace {

const Vec3& require_marker(const MarkerFrame& frame, const std::string& name) {
    auto it = frame.find(name);
    if (it == frame.end()) throw MissingMarker(name);
    return it->second;
}

Vec3 midpoint(const MarkerFrame& frame, const std::string& inner, const std::string& outer) {
    return 0.5 * (require_marker(frame, inner) + require_marker(frame, outer));
}

}  // namespace

Skeleton13 markers_to_joints(const MarkerFrame& frame) {
    Skeleton13 out;
    out[JointId::C7] = require_marker(frame, "C7");
    out[JointId::RSHO] = require_marker(frame, "RSHO");
    out[JointId::LSHO] = require_marker(frame, "LSHO");
    out[JointId::RMEL] = midpoint(frame, "RIEL", "ROEL");
    out[JointId::LMEL] = midpoint(frame, "LIEL", "LOEL");
    out[JointId::RMWR] = midpoint(frame, "RIWR", "ROWR");
    out[JointId::LMWR] = midpoint(frame, "LIWR", "LOWR");
    out[JointId::RBWT] = require_marker(frame, "RBWT");
    out[JointId::LBWT] = require_marker(frame, "LBWT");
    out[JointId::RKNE] = midpoint(frame, "RIKN", "ROKN");
    out[JointId::LKNE] = midpoint(frame, "LIKN", "LOKN");
    out[JointId::RTOE] = require_marker(frame, "RTOE");
    out[JointId::LTOE] = require_marker(frame, "LTOE");
    return out;
}

PoseSequence normalize_origin(const PoseSequence& seq) {
    if (seq.empty()) throw EmptySequence();
    const Vec3 shift = -seq.frames.front()[JointId::LTOE];
    PoseSequence out = seq;
    for (auto& frame : out.frames) {
        for (auto& joint : frame.joints) joint += shift;
    }
    return out;
}

PoseFeature flatten_pose(const PoseSequence& window) {
    if (window.empty()) throw EmptySequence();
    PoseFeature feat(static_cast<Eigen::Index>(window.size()), kPoseDim);
    for (Eigen::Index t = 0; t < feat.rows(); ++t) {
        const Skeleton13& frame = window.frames[static_cast<std::size_t>(t)];
        for (int j = 0; j < kNumJoints; ++j) {
            feat(t, 3 * j + 0) = frame.joints[j].x();
            feat(t, 3 * j + 1) = frame.joints[j].y();
            feat(t, 3 * j + 2) = frame.joints[j].z();
        }
    }
    return feat;
}

PoseSequence unflatten_pose(const PoseFeature& feat, double fps, double start_time) {
    if (feat.cols() != kPoseDim) {
        throw BadShape("unflatten_pose: expected 39 columns, got " +
                       std::to_string(feat.cols()));
    }
    PoseSequence seq;
    seq.fps = fps;
    seq.start_time = start_time;
    seq.frames.resize(static_cast<std::size_t>(feat.rows()));
    for (Eigen::Index t = 0; t < feat.rows(); ++t) {
        Skeleton13& frame = seq.frames[static_cast<std::size_t>(t)];
        for (int j = 0; j < kNumJoints; ++j) {
            frame.joints[j] =
                Vec3(feat(t, 3 * j + 0), feat(t, 3 * j + 1), feat(t, 3 * j + 2));
        }
    }
    return seq;
}

}  // namespace mapnet
