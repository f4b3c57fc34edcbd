#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mapnet/pose.hpp"

namespace mapnet {

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Pose CSV: line 1 "# fps=<real>", line 2 header
// "frame,time_s,C7_x,C7_y,C7_z,RSHO_x,...", then one row per frame.
// Values are mm, written with shortest round-trip precision.
void write_pose_csv(const PoseSequence& seq, const std::filesystem::path& path);
PoseSequence read_pose_csv(const std::filesystem::path& path);

void write_pose_csv(const PoseSequence& seq, std::ostream& os);
PoseSequence read_pose_csv(std::istream& is, const std::string& origin = "<stream>");

// Plain numeric CSV (no header) used for feature blocks.
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace mapnet
