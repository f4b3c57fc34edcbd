#include "mapnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mapnet/lstm.hpp"
#include "mapnet/pose_io.hpp"

namespace mapnet {

std::string difficulty_name(DifficultyLabel d) {
    switch (d) {
        case DifficultyLabel::Fine: return "fine";
        case DifficultyLabel::Gross: return "gross";
        case DifficultyLabel::Inversion: return "inversion";
    }
    return "?";
}

PoseSequence sma_upsample(const PoseSequence& sparse, int window_n, double target_fps) {
    if (window_n < 1 || window_n % 2 == 0) throw BadWindow("window_n must be odd >= 1");
    if (sparse.empty()) throw EmptySequence();

    const Eigen::Index n = static_cast<Eigen::Index>(sparse.size());
    const nn::Mat x = flatten_pose(sparse);
    nn::Mat smooth(n, kPoseDim);
    const Eigen::Index half = window_n / 2;
    for (Eigen::Index i = 0; i < n; ++i) {
        // Shrink the window symmetrically at the edges so that an affine
        // trajectory averages back to its own value.
        const Eigen::Index h = std::min({half, i, n - 1 - i});
        smooth.row(i) = x.middleRows(i - h, 2 * h + 1).colwise().mean();
    }

    const Eigen::Index m =
        static_cast<Eigen::Index>(std::lround(n / sparse.fps * target_fps));
    nn::Mat up(m, kPoseDim);
    const double step = sparse.fps / target_fps;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double u = j * step;
        // Interpolate on segments; the last segment extends past the final
        // sample so affine signals stay exact at the tail.
        Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(u));
        i0 = std::clamp<Eigen::Index>(i0, 0, std::max<Eigen::Index>(n - 2, 0));
        if (n == 1) {
            up.row(j) = smooth.row(0);
            continue;
        }
        const double f = u - static_cast<double>(i0);
        up.row(j) = (1.0 - f) * smooth.row(i0) + f * smooth.row(i0 + 1);
    }
    return unflatten_pose(up, target_fps, sparse.start_time);
}

double mpjae_metric(const nn::Mat& pred, const nn::Mat& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw LengthMismatch();
    if (pred.rows() < 3) throw TooFewFrames();
    const Eigen::Index t_n = pred.rows();
    double acc = 0.0;
    for (Eigen::Index t = 1; t + 1 < t_n; ++t) {
        for (int j = 0; j < kNumJoints; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                const Eigen::Index c = 3 * j + k;
                const double ap = pred(t + 1, c) - 2.0 * pred(t, c) + pred(t - 1, c);
                const double ag = gt(t + 1, c) - 2.0 * gt(t, c) + gt(t - 1, c);
                d2 += (ap - ag) * (ap - ag);
            }
            acc += std::sqrt(d2);
        }
    }
    return acc / (static_cast<double>(t_n - 2) * kNumJoints);
}

DifficultyLabel categorize_difficulty(const PoseSequence& target, bool has_swap,
                                      double theta) {
    if (has_swap) return DifficultyLabel::Inversion;
    const Eigen::Index n = static_cast<Eigen::Index>(target.size());
    if (n < 3) return DifficultyLabel::Gross;

    // Least-squares line fit to the right wrist, per coordinate, over time.
    nn::Mat wrist(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        wrist.row(i) = target.frames[i][JointId::RMWR].transpose();
    }
    Eigen::MatrixXd basis(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        basis(i, 0) = 1.0;
        basis(i, 1) = static_cast<double>(i);
    }
    const Eigen::MatrixXd coef = basis.colPivHouseholderQr().solve(wrist);
    const nn::Mat resid = wrist - basis * coef;
    const double rms = std::sqrt(resid.array().square().rowwise().sum().mean());

    const Eigen::RowVector3d span =
        wrist.colwise().maxCoeff() - wrist.colwise().minCoeff();
    const double extent = span.norm();
    const double score = extent > 1e-9 ? rms / extent : 0.0;
    return score > theta ? DifficultyLabel::Fine : DifficultyLabel::Gross;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double f = rank - static_cast<double>(lo);
    return (1.0 - f) * values[lo] + f * values[hi];
}

namespace {

double frame_mean_joint_l2(const nn::Mat& a, const nn::Mat& b, Eigen::Index t) {
    double acc = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
        acc += (a.row(t).segment(3 * j, 3) - b.row(t).segment(3 * j, 3)).norm();
    }
    return acc / kNumJoints;
}

}  // namespace

std::vector<double> per_frame_error_series(const nn::Mat& pred, const nn::Mat& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw LengthMismatch();
    const Eigen::Index t_n = pred.rows();
    std::vector<double> err(static_cast<std::size_t>(t_n));
    for (Eigen::Index t = 0; t < t_n; ++t) {
        err[static_cast<std::size_t>(t)] = frame_mean_joint_l2(pred, gt, t);
    }

    // Normalize by a robust scale of the motion itself: the 95th percentile
    // of the gt stream's per-frame excursion from its mean pose.
    const nn::Mat mean_pose = gt.colwise().mean();
    std::vector<double> excursion(static_cast<std::size_t>(t_n));
    nn::Mat mean_rep = mean_pose.replicate(t_n, 1);
    for (Eigen::Index t = 0; t < t_n; ++t) {
        excursion[static_cast<std::size_t>(t)] = frame_mean_joint_l2(gt, mean_rep, t);
    }
    const double scale = percentile(excursion, 0.95);
    if (scale > 1e-9) {
        for (double& e : err) e /= scale;
    }
    return err;
}

namespace {

struct Cell {
    double mpjpe_sum = 0.0;
    double mpjae_sum = 0.0;
    int windows = 0;
};

}  // namespace

EvalReport evaluate_suite(const std::vector<MethodEntry>& methods,
                          const std::vector<Sample>& testset, double theta) {
    EvalReport report;
    for (const auto& m : methods) {
        if (m.name != "sma" && m.model == nullptr) throw MissingCheckpoint(m.name);

        // key: tau, split, category ("all" aggregated separately)
        std::map<std::tuple<double, std::string, std::string>, Cell> cells;
        Eigen::VectorXd joint_sum = Eigen::VectorXd::Zero(kNumJoints);
        long joint_frames = 0;

        for (const auto& s : testset) {
            const nn::Mat gt = flatten_pose(s.target_pose);
            nn::Mat pred;
            if (m.model != nullptr) {
                pred = m.model->forward(flatten_pose(s.sparse_pose), s.audio, false);
            } else {
                PoseSequence up = sma_upsample(s.sparse_pose, m.sma_window,
                                               s.target_pose.fps);
                pred = flatten_pose(up);
                if (pred.rows() != gt.rows()) pred = resample_rows(pred, gt.rows());
            }

            const double mpjpe = mpjpe_loss(pred, gt);
            const double mpjae = mpjae_metric(pred, gt);
            const std::string cat =
                difficulty_name(categorize_difficulty(s.target_pose, s.meta.has_swap, theta));
            const std::string split = split_name(s.meta.split);
            for (const std::string& c : {std::string("all"), cat}) {
                Cell& cell = cells[{s.meta.tau, split, c}];
                cell.mpjpe_sum += mpjpe;
                cell.mpjae_sum += mpjae;
                cell.windows += 1;
            }
            for (int j = 0; j < kNumJoints; ++j) {
                double acc = 0.0;
                for (Eigen::Index t = 0; t < gt.rows(); ++t) {
                    acc += (pred.row(t).segment(3 * j, 3) - gt.row(t).segment(3 * j, 3))
                               .norm();
                }
                joint_sum(j) += acc;
            }
            joint_frames += gt.rows();
        }

        for (const auto& [key, cell] : cells) {
            EvalRow row;
            row.method = m.name;
            row.tau = std::get<0>(key);
            row.split = std::get<1>(key);
            row.category = std::get<2>(key);
            row.mpjpe_mm = cell.mpjpe_sum / cell.windows;
            row.mpjae = cell.mpjae_sum / cell.windows;
            row.windows = cell.windows;
            report.rows.push_back(row);
        }
        if (joint_frames > 0) {
            report.per_joint_mpjpe[m.name] = joint_sum / static_cast<double>(joint_frames);
        }
    }
    return report;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "method,tau,split,category,mpjpe_mm,mpjae,windows\n";
    for (const auto& r : rows) {
        out << r.method << ',' << format_double(r.tau) << ',' << r.split << ','
            << r.category << ',' << format_double(r.mpjpe_mm) << ','
            << format_double(r.mpjae) << ',' << r.windows << '\n';
    }
    return out.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    out << "method       tau   split  category   mpjpe_mm     mpjae  windows\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-12s %4.2f  %-6s %-9s %9.3f %9.4f %8d\n",
                      r.method.c_str(), r.tau, r.split.c_str(), r.category.c_str(),
                      r.mpjpe_mm, r.mpjae, r.windows);
        out << buf;
    }
    out << "# MPJAE: mean per-joint acceleration error; acceleration is the\n"
        << "# second central difference a_t = x_{t+1} - 2 x_t + x_{t-1} (mm/frame^2).\n";
    return out.str();
}

std::string svg_line_plot(const std::vector<std::vector<double>>& series,
                          const std::vector<std::string>& labels,
                          const std::string& title, int width, int height) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
    const double margin = 40.0;
    double lo = 0.0, hi = 1e-9;
    std::size_t max_len = 2;
    for (const auto& s : series) {
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        max_len = std::max(max_len, s.size());
    }

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height
        << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

    const double px = width - 2.0 * margin;
    const double py = height - 2.0 * margin;
    auto map_x = [&](std::size_t i) {
        return margin + px * static_cast<double>(i) / static_cast<double>(max_len - 1);
    };
    auto map_y = [&](double v) { return height - margin - py * (v - lo) / (hi - lo); };

    // axes
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        if (s.empty()) continue;
        const char* color = kColors[k % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (std::size_t i = 0; i < s.size(); ++i) {
            out << map_x(i) << ',' << map_y(s[i]) << ' ';
        }
        out << "\"/>\n";
        const std::string label = k < labels.size() ? labels[k] : "series";
        out << "<text x=\"" << width - margin - 120 << "\" y=\""
            << margin + 16.0 * static_cast<double>(k) << "\" fill=\"" << color
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << label
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void write_trajectory_csv(std::ostream& out, const PoseSequence& gt,
                          const PoseSequence& pred, JointId joint) {
    out << "t_s,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z\n";
    const std::size_t n = std::min(gt.size(), pred.size());
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& g = gt.frames[i][joint];
        const Vec3& p = pred.frames[i][joint];
        out << format_double(gt.start_time + static_cast<double>(i) / gt.fps);
        for (int k = 0; k < 3; ++k) out << ',' << format_double(g(k));
        for (int k = 0; k < 3; ++k) out << ',' << format_double(p(k));
        out << '\n';
    }
}

}  // namespace mapnet
