#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stdtrack/geometry.hpp"
#include "stdtrack/image.hpp"

namespace stdtrack {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Frames 000001.ppm ... with one groundtruth box per frame.
struct Sequence {
    std::string name;
    std::vector<Image> frames;
    std::vector<BBox> groundtruth;

    std::size_t size() const { return frames.size(); }
};

/// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string frame_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.ppm", index);
    return buf;
}

inline std::vector<double> parse_reals(const std::string& line, char sep = ',') {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
        const auto b = tok.find_first_not_of(" \t\r");
        const auto e = tok.find_last_not_of(" \t\r");
        if (b == std::string::npos) throw FormatError("empty field in '" + line + "'");
        tok = tok.substr(b, e - b + 1);
        double v = 0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
            if (tok == "nan" || tok == "NaN") v = std::numeric_limits<double>::quiet_NaN();
            else throw FormatError("not a number: '" + tok + "'");
        }
        out.push_back(v);
    }
    return out;
}

/// "x,y,w,h" lines, top-left convention.
inline std::vector<BBox> read_groundtruth(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    std::vector<BBox> boxes;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto v = parse_reals(line);
        if (v.size() != 4) throw FormatError(path + ": expected x,y,w,h, got '" + line + "'");
        boxes.push_back(BBox::from_xywh(v[0], v[1], v[2], v[3]));
    }
    return boxes;
}

inline void write_groundtruth(const std::string& path, const std::vector<BBox>& boxes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    for (const auto& b : boxes)
        os << format_real(b.x0()) << ',' << format_real(b.y0()) << ',' << format_real(b.w) << ','
           << format_real(b.h) << '\n';
}

inline Sequence load_sequence(const std::string& dir) {
    namespace fs = std::filesystem;
    Sequence seq;
    seq.name = fs::path(dir).filename().string();
    if (seq.name.empty()) seq.name = fs::path(dir).parent_path().filename().string();
    seq.groundtruth = read_groundtruth((fs::path(dir) / "groundtruth.txt").string());
    for (std::size_t i = 1;; ++i) {
        const fs::path f = fs::path(dir) / frame_filename(i);
        if (!fs::exists(f)) break;
        seq.frames.push_back(read_ppm(f.string()));
    }
    if (seq.frames.size() != seq.groundtruth.size())
        throw FormatError(dir + ": " + std::to_string(seq.frames.size()) + " frames but " +
                          std::to_string(seq.groundtruth.size()) + " groundtruth lines");
    if (seq.frames.empty()) throw FormatError(dir + ": no frames");
    return seq;
}

inline void save_sequence(const std::string& dir, const Sequence& seq) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
        write_ppm((fs::path(dir) / frame_filename(i + 1)).string(), seq.frames[i]);
    write_groundtruth((fs::path(dir) / "groundtruth.txt").string(), seq.groundtruth);
}

}  // namespace stdtrack
