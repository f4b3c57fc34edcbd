#include "mapnet/pose_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mapnet {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, const std::string& origin) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) {
        throw IoError("bad numeric value '" + std::string(s) + "' in " + origin);
    }
    return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

}  // namespace

void write_pose_csv(const PoseSequence& seq, std::ostream& os) {
    os << "# fps=" << format_double(seq.fps) << "\n";
    os << "frame,time_s";
    for (const auto& name : joint_names()) {
        os << ',' << name << "_x," << name << "_y," << name << "_z";
    }
    os << "\n";
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        os << t << ',' << format_double(seq.start_time + static_cast<double>(t) / seq.fps);
        for (const auto& joint : seq.frames[t].joints) {
            os << ',' << format_double(joint.x()) << ',' << format_double(joint.y())
               << ',' << format_double(joint.z());
        }
        os << "\n";
    }
}

void write_pose_csv(const PoseSequence& seq, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    write_pose_csv(seq, os);
    if (!os) throw IoError("write failed: " + path.string());
}

PoseSequence read_pose_csv(std::istream& is, const std::string& origin) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# fps=", 0) != 0) {
        throw IoError("missing '# fps=' metadata line in " + origin);
    }
    PoseSequence seq;
    seq.fps = parse_double(std::string_view(line).substr(6), origin);
    if (!std::getline(is, line)) throw IoError("missing header in " + origin);

    bool first_row = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 2 + kPoseDim) {
            throw IoError("expected " + std::to_string(2 + kPoseDim) +
                          " columns in " + origin);
        }
        if (first_row) {
            seq.start_time = parse_double(cells[1], origin);
            first_row = false;
        }
        Skeleton13 frame;
        for (int j = 0; j < kNumJoints; ++j) {
            frame.joints[j] = Vec3(parse_double(cells[2 + 3 * j + 0], origin),
                                   parse_double(cells[2 + 3 * j + 1], origin),
                                   parse_double(cells[2 + 3 * j + 2], origin));
        }
        seq.frames.push_back(frame);
    }
    return seq;
}

PoseSequence read_pose_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    return read_pose_csv(is, path.string());
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ',';
            os << format_double(m(r, c));
        }
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto c : cells) row.push_back(parse_double(c, path.string()));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw IoError("ragged CSV in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
    }
    return m;
}

}  // namespace mapnet
