#pragma once

#include <map>
#include <ostream>

#include "mapnet/model.hpp"

namespace mapnet {

enum class DifficultyLabel { Fine, Gross, Inversion };
std::string difficulty_name(DifficultyLabel d);

struct BadWindow : std::runtime_error {
    explicit BadWindow(const std::string& what) : std::runtime_error(what) {}
};
struct TooFewFrames : std::runtime_error {
    TooFewFrames() : std::runtime_error("need at least 3 frames") {}
};
struct LengthMismatch : std::runtime_error {
    LengthMismatch() : std::runtime_error("streams have different lengths") {}
};
struct MissingCheckpoint : std::runtime_error {
    explicit MissingCheckpoint(const std::string& m)
        : std::runtime_error("no checkpoint for method: " + m) {}
};

// Centered moving average of odd width window_n (shrunk symmetrically near
// the edges so affine signals pass through exactly), then linear
// interpolation of the result onto the target frame grid.
PoseSequence sma_upsample(const PoseSequence& sparse, int window_n, double target_fps);

// Mean per-joint acceleration error, mm/frame^2. Acceleration is the second
// central difference a_t = x_{t+1} - 2 x_t + x_{t-1}; inputs are T x 39.
double mpjae_metric(const nn::Mat& pred, const nn::Mat& gt);

// Inversion if a swap overlaps the window; otherwise Fine when the
// right-wrist trajectory's linear-fit RMS residual, normalized by the
// trajectory extent, exceeds theta, else Gross.
DifficultyLabel categorize_difficulty(const PoseSequence& target, bool has_swap,
                                      double theta = 0.05);

// Per-frame mean-joint l2 distance, normalized by the 95th percentile of the
// ground-truth stream's per-frame excursion from its mean pose.
std::vector<double> per_frame_error_series(const nn::Mat& pred, const nn::Mat& gt);

double percentile(std::vector<double> values, double q);

struct EvalRow {
    std::string method;
    double tau = 1.0;
    std::string split;
    std::string category;  // "all", "fine", "gross", "inversion"
    double mpjpe_mm = 0.0;
    double mpjae = 0.0;
    int windows = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    // method -> mean per-joint position error across all evaluated windows
    std::map<std::string, Eigen::VectorXd> per_joint_mpjpe;

    std::string to_csv() const;
    std::string to_table() const;
};

// A method under evaluation: either a trained model or the SMA baseline
// (model == nullptr, name "sma").
struct MethodEntry {
    std::string name;
    SequenceModel* model = nullptr;
    int sma_window = 5;
};

EvalReport evaluate_suite(const std::vector<MethodEntry>& methods,
                          const std::vector<Sample>& testset, double theta = 0.05);

// One polyline per series, shared x = index. Returns a complete SVG document.
std::string svg_line_plot(const std::vector<std::vector<double>>& series,
                          const std::vector<std::string>& labels,
                          const std::string& title, int width = 900, int height = 320);

// Fig.-6-style trajectory export: t_s,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z.
void write_trajectory_csv(std::ostream& out, const PoseSequence& gt,
                          const PoseSequence& pred, JointId joint);

}  // namespace mapnet
