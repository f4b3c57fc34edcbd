#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mapnet {

// The 13 body joints, in flattening order. Ordinals are part of the
// on-disk format and must not be reordered.
enum class JointId : int {
    C7 = 0,
    RSHO,
    LSHO,
    RMEL,
    LMEL,
    RMWR,
    LMWR,
    RBWT,
    LBWT,
    RKNE,
    LKNE,
    RTOE,
    LTOE,
};

inline constexpr int kNumJoints = 13;
inline constexpr int kPoseDim = kNumJoints * 3;  // 39

const std::array<std::string, kNumJoints>& joint_names();
JointId joint_from_name(const std::string& name);

using Vec3 = Eigen::Vector3d;

// One frame of 13 joint positions, millimeters.
struct Skeleton13 {
    std::array<Vec3, kNumJoints> joints{};

    Vec3& operator[](JointId id) { return joints[static_cast<int>(id)]; }
    const Vec3& operator[](JointId id) const { return joints[static_cast<int>(id)]; }
};

struct PoseSequence {
    std::vector<Skeleton13> frames;
    double fps = 50.0;
    double start_time = 0.0;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    double duration_s() const { return static_cast<double>(frames.size()) / fps; }
};

// Named marker positions (mm) for one mocap frame.
using MarkerFrame = std::map<std::string, Vec3>;

// T_in x 39 flattened pose block, mm.
using PoseFeature = Eigen::MatrixXd;

struct MissingMarker : std::runtime_error {
    explicit MissingMarker(const std::string& name)
        : std::runtime_error("missing marker: " + name) {}
};
struct EmptySequence : std::runtime_error {
    EmptySequence() : std::runtime_error("empty pose sequence") {}
};
struct BadShape : std::runtime_error {
    explicit BadShape(const std::string& what) : std::runtime_error(what) {}
};

// Reduce a mocap marker frame to the 13-joint skeleton. Paired
// inner/outer markers (elbow, wrist, knee) map to their midpoint;
// the rest are taken directly.
Skeleton13 markers_to_joints(const MarkerFrame& frame);

// Translate the whole sequence so frame 0's left toe sits at the origin.
PoseSequence normalize_origin(const PoseSequence& seq);

// T x 13 x 3 -> T x 39, joint-major then x,y,z.
PoseFeature flatten_pose(const PoseSequence& window);

PoseSequence unflatten_pose(const PoseFeature& feat, double fps, double start_time = 0.0);

}  // namespace mapnet
