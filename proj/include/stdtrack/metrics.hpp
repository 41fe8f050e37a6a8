#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stdtrack/sequence.hpp"

namespace stdtrack {

/// One line of a results file. Frame indices are 1-based.
struct ResultRow {
    std::size_t frame = 0;
    BBox box;
    double quality = 0;
};

/// "frame_index,x,y,w,h,Q" lines, top-left box convention.
inline void write_results(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    for (const auto& r : rows)
        os << r.frame << ',' << format_real(r.box.x0()) << ',' << format_real(r.box.y0()) << ','
           << format_real(r.box.w) << ',' << format_real(r.box.h) << ',' << format_real(r.quality) << '\n';
}

inline std::vector<ResultRow> read_results(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto v = parse_reals(line);
        if (v.size() != 6) throw FormatError(path + ": expected frame,x,y,w,h,Q, got '" + line + "'");
        rows.push_back({static_cast<std::size_t>(v[0]), BBox::from_xywh(v[1], v[2], v[3], v[4]), v[5]});
    }
    return rows;
}

struct SequenceScore {
    std::string name;
    std::size_t frames = 0;  // evaluated frames
    double ao = 0, sr50 = 0, sr75 = 0;
};

/// Overall values are means of the per-sequence values.
struct EvalReport {
    double ao = 0, sr50 = 0, sr75 = 0;
    std::vector<SequenceScore> sequences;

    std::string text() const {
        std::ostringstream os;
        char buf[160];
        for (const auto& s : sequences) {
            std::snprintf(buf, sizeof buf, "%-24s frames=%-5zu AO=%.4f SR0.5=%.4f SR0.75=%.4f\n", s.name.c_str(),
                          s.frames, s.ao, s.sr50, s.sr75);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "overall: AO %.4f  SR0.5 %.4f  SR0.75 %.4f over %zu sequence(s)\n", ao, sr50,
                      sr75, sequences.size());
        os << buf;
        return os.str();
    }

    std::string key_values() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "AO=%.6f\nSR_0.5=%.6f\nSR_0.75=%.6f\nsequences=%zu\n", ao, sr50, sr75,
                      sequences.size());
        return buf;
    }
};

/// Scores per-frame IoUs. Frame 1 (the initialization frame) is skipped.
inline SequenceScore score_sequence(const std::string& name, const std::vector<BBox>& results,
                                    const std::vector<BBox>& groundtruth) {
    if (results.size() != groundtruth.size())
        throw FormatError(name + ": " + std::to_string(results.size()) + " results for " +
                          std::to_string(groundtruth.size()) + " groundtruth frames");
    SequenceScore s;
    s.name = name;
    for (std::size_t i = 1; i < results.size(); ++i) {
        const double o = iou(results[i], groundtruth[i]);
        s.ao += o;
        s.sr50 += o > 0.5;
        s.sr75 += o > 0.75;
        ++s.frames;
    }
    if (s.frames > 0) {
        const double n = static_cast<double>(s.frames);
        s.ao /= n;
        s.sr50 /= n;
        s.sr75 /= n;
    }
    return s;
}

inline EvalReport summarize(std::vector<SequenceScore> scores) {
    EvalReport r;
    r.sequences = std::move(scores);
    if (r.sequences.empty()) return r;
    for (const auto& s : r.sequences) {
        r.ao += s.ao;
        r.sr50 += s.sr50;
        r.sr75 += s.sr75;
    }
    const double n = static_cast<double>(r.sequences.size());
    r.ao /= n;
    r.sr50 /= n;
    r.sr75 /= n;
    return r;
}

inline EvalReport evaluate(const std::vector<BBox>& results, const std::vector<BBox>& groundtruth,
                           const std::string& name = "sequence") {
    return summarize({score_sequence(name, results, groundtruth)});
}

inline std::vector<BBox> result_boxes(const std::vector<ResultRow>& rows) {
    std::vector<BBox> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].frame != i + 1)
            throw FormatError("results: expected frame " + std::to_string(i + 1) + ", got " + std::to_string(rows[i].frame));
        out.push_back(rows[i].box);
    }
    return out;
}

}  // namespace stdtrack
