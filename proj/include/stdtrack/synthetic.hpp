#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stdtrack/nn.hpp"
#include "stdtrack/sequence.hpp"

namespace stdtrack {

enum class ObjectKind { rect, ellipse };
enum class MotionKind { static_, linear, sinusoidal, random_walk };

/// Scene description for one generated sequence. Positions are top-left
/// pixel coordinates of the target box.
struct SyntheticSpec {
    std::string name = "synthetic";
    std::size_t frames = 32;
    std::size_t width = 160, height = 160;
    ObjectKind object = ObjectKind::rect;
    double object_w = 24, object_h = 24;
    double start_x = 40, start_y = 40;
    MotionKind motion = MotionKind::linear;
    double dx = 1, dy = 0.5;              // linear: pixels per frame
    double amplitude_x = 20, amplitude_y = 10;
    double period = 32;                   // sinusoidal: frames per cycle
    double walk_step = 2;                 // random walk: per-axis std per frame
    std::array<double, 3> color{220, 60, 40};
    std::array<double, 3> background{70, 90, 110};
    double texture = 0.25;                // relative amplitude of the object pattern
    double noise = 4;                     // background noise std, intensity levels
    std::set<std::size_t> occluded;       // 1-based frames
    double occluder_fraction = 1.0;       // covered share of the target box width
    std::array<double, 3> occluder_color{70, 90, 110};
    std::size_t distractors = 0;
    double distractor_scale = 0.8;

    void set(const std::string& key, const std::string& value);
    static SyntheticSpec parse(std::istream& is);
    static SyntheticSpec load(const std::string& path);
};

struct OcclusionEvent {
    std::size_t frame = 0;  // 1-based
    double fraction = 0;
};

struct SyntheticSequence {
    Sequence sequence;
    std::vector<OcclusionEvent> occlusions;
};

namespace detail {

inline std::array<double, 3> parse_color(const std::string& v) {
    const auto c = parse_reals(v);
    if (c.size() != 3) throw ConfigError("synthetic: color needs r,g,b");
    return {c[0], c[1], c[2]};
}

// "5,9-11" -> {5, 9, 10, 11}
inline std::set<std::size_t> parse_frame_set(const std::string& v) {
    std::set<std::size_t> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        const auto dash = tok.find('-');
        const std::size_t a = std::stoul(tok.substr(0, dash));
        const std::size_t b = dash == std::string::npos ? a : std::stoul(tok.substr(dash + 1));
        if (a == 0 || b < a) throw ConfigError("synthetic: bad frame range '" + tok + "'");
        for (std::size_t f = a; f <= b; ++f) out.insert(f);
    }
    return out;
}

inline double hash_noise(std::size_t x, std::size_t y) {
    std::uint64_t h = x * 0x9E3779B97F4A7C15ull ^ (y + 0x632BE59BD9B4E019ull) * 0xC2B2AE3D27D4EB4Full;
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Fraction of pixel (px, py) inside the shape, 4×4 supersampled.
inline double coverage(ObjectKind kind, double x0, double y0, double w, double h, std::size_t px, std::size_t py) {
    int hits = 0;
    for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
            const double x = static_cast<double>(px) + (sx + 0.5) / 4.0;
            const double y = static_cast<double>(py) + (sy + 0.5) / 4.0;
            if (kind == ObjectKind::rect) {
                hits += x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
            } else {
                const double u = (x - x0 - w / 2) / (w / 2), v = (y - y0 - h / 2) / (h / 2);
                hits += u * u + v * v <= 1.0;
            }
        }
    return hits / 16.0;
}

struct Sprite {
    ObjectKind kind;
    double x, y, w, h;
    std::array<double, 3> color;
    double texture;
};

// Blends the sprite with a checker texture anchored to its own frame so the
// pattern moves with the object.
inline void draw(std::vector<double>& canvas, std::size_t width, std::size_t height, const Sprite& s) {
    const auto xa = static_cast<std::size_t>(std::clamp(std::floor(s.x), 0.0, static_cast<double>(width)));
    const auto ya = static_cast<std::size_t>(std::clamp(std::floor(s.y), 0.0, static_cast<double>(height)));
    const auto xb = static_cast<std::size_t>(std::clamp(std::ceil(s.x + s.w), 0.0, static_cast<double>(width)));
    const auto yb = static_cast<std::size_t>(std::clamp(std::ceil(s.y + s.h), 0.0, static_cast<double>(height)));
    const double cell = std::max(2.0, std::min(s.w, s.h) / 4.0);
    for (std::size_t py = ya; py < yb; ++py)
        for (std::size_t px = xa; px < xb; ++px) {
            const double a = coverage(s.kind, s.x, s.y, s.w, s.h, px, py);
            if (a == 0) continue;
            const auto cu = static_cast<long>(std::floor((static_cast<double>(px) + 0.5 - s.x) / cell));
            const auto cv = static_cast<long>(std::floor((static_cast<double>(py) + 0.5 - s.y) / cell));
            const double mod = ((cu + cv) % 2 == 0) ? 1.0 + s.texture : 1.0 - s.texture;
            for (std::size_t c = 0; c < 3; ++c) {
                double& dst = canvas[(py * width + px) * 3 + c];
                dst = (1 - a) * dst + a * s.color[c] * mod;
            }
        }
}

}  // namespace detail

inline void SyntheticSpec::set(const std::string& key, const std::string& v) {
    try {
        if (key == "name") name = v;
        else if (key == "frames") frames = std::stoul(v);
        else if (key == "width") width = std::stoul(v);
        else if (key == "height") height = std::stoul(v);
        else if (key == "object") {
            if (v == "rect" || v == "rectangle") object = ObjectKind::rect;
            else if (v == "ellipse") object = ObjectKind::ellipse;
            else throw ConfigError("synthetic: unknown object '" + v + "'");
        } else if (key == "object_w") object_w = std::stod(v);
        else if (key == "object_h") object_h = std::stod(v);
        else if (key == "start_x") start_x = std::stod(v);
        else if (key == "start_y") start_y = std::stod(v);
        else if (key == "motion") {
            if (v == "static") motion = MotionKind::static_;
            else if (v == "linear") motion = MotionKind::linear;
            else if (v == "sinusoidal") motion = MotionKind::sinusoidal;
            else if (v == "random_walk") motion = MotionKind::random_walk;
            else throw ConfigError("synthetic: unknown motion '" + v + "'");
        } else if (key == "dx") dx = std::stod(v);
        else if (key == "dy") dy = std::stod(v);
        else if (key == "amplitude_x") amplitude_x = std::stod(v);
        else if (key == "amplitude_y") amplitude_y = std::stod(v);
        else if (key == "period") period = std::stod(v);
        else if (key == "walk_step") walk_step = std::stod(v);
        else if (key == "color") color = detail::parse_color(v);
        else if (key == "background") background = detail::parse_color(v);
        else if (key == "texture") texture = std::stod(v);
        else if (key == "noise") noise = std::stod(v);
        else if (key == "occlude") occluded = detail::parse_frame_set(v);
        else if (key == "occluder_fraction") occluder_fraction = std::stod(v);
        else if (key == "occluder_color") occluder_color = detail::parse_color(v);
        else if (key == "distractors") distractors = std::stoul(v);
        else if (key == "distractor_scale") distractor_scale = std::stod(v);
        else throw ConfigError("synthetic: unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError("synthetic: bad value '" + v + "' for " + key);
    } catch (const FormatError&) {
        throw ConfigError("synthetic: bad value '" + v + "' for " + key);
    }
}

inline SyntheticSpec SyntheticSpec::parse(std::istream& is) {
    SyntheticSpec s;
    std::string line;
    while (std::getline(is, line)) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic: expected key=value, got '" + line + "'");
        auto trim = [](const std::string& t) {
            const auto l = t.find_first_not_of(" \t\r"), r = t.find_last_not_of(" \t\r");
            return l == std::string::npos ? std::string() : t.substr(l, r - l + 1);
        };
        s.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return s;
}

inline SyntheticSpec SyntheticSpec::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open synthetic spec " + path);
    return parse(is);
}

/// Target top-left position per frame (0-based k), before clamping.
inline std::vector<std::pair<double, double>> synthetic_path(const SyntheticSpec& s, Rng& rng) {
    std::vector<std::pair<double, double>> path;
    std::normal_distribution<double> step(0.0, s.walk_step);
    double x = s.start_x, y = s.start_y;
    const double xmax = static_cast<double>(s.width) - s.object_w, ymax = static_cast<double>(s.height) - s.object_h;
    for (std::size_t k = 0; k < s.frames; ++k) {
        const double kk = static_cast<double>(k);
        switch (s.motion) {
            case MotionKind::static_: break;
            case MotionKind::linear:
                x = s.start_x + kk * s.dx;
                y = s.start_y + kk * s.dy;
                break;
            case MotionKind::sinusoidal: {
                const double ph = 2 * std::numbers::pi * kk / s.period;
                x = s.start_x + s.amplitude_x * std::sin(ph);
                y = s.start_y + s.amplitude_y * std::sin(ph);
                break;
            }
            case MotionKind::random_walk:
                if (k > 0) {
                    x += step(rng);
                    y += step(rng);
                    // reflect at the borders
                    if (x < 0) x = -x;
                    if (y < 0) y = -y;
                    if (x > xmax) x = 2 * xmax - x;
                    if (y > ymax) y = 2 * ymax - y;
                }
                break;
        }
        path.emplace_back(std::clamp(x, 0.0, std::max(0.0, xmax)), std::clamp(y, 0.0, std::max(0.0, ymax)));
    }
    return path;
}

inline SyntheticSequence generate_synthetic(const SyntheticSpec& s, std::uint64_t seed) {
    if (s.frames == 0) throw ConfigError("synthetic: frame count must be positive");
    if (s.width == 0 || s.height == 0) throw ConfigError("synthetic: resolution must be positive");
    if (!(s.object_w > 0 && s.object_h > 0) || s.object_w > static_cast<double>(s.width) ||
        s.object_h > static_cast<double>(s.height))
        throw ConfigError("synthetic: object must be non-empty and fit in the frame");
    if (s.motion == MotionKind::sinusoidal && !(s.period > 0)) throw ConfigError("synthetic: period must be positive");

    Rng rng(seed);
    const auto path = synthetic_path(s, rng);

    // Distractors: same kind, shifted hue, independent random walks.
    std::vector<detail::Sprite> distractors;
    std::vector<std::pair<double, double>> dvel;
    std::uniform_real_distribution<double> ux(0, static_cast<double>(s.width) - s.object_w * s.distractor_scale);
    std::uniform_real_distribution<double> uy(0, static_cast<double>(s.height) - s.object_h * s.distractor_scale);
    std::uniform_real_distribution<double> uv(-1.5, 1.5);
    for (std::size_t i = 0; i < s.distractors; ++i) {
        detail::Sprite d{s.object, ux(rng), uy(rng), s.object_w * s.distractor_scale, s.object_h * s.distractor_scale,
                         {s.color[2], s.color[0], s.color[1]}, s.texture};
        distractors.push_back(d);
        dvel.emplace_back(uv(rng), uv(rng));
    }

    SyntheticSequence out;
    out.sequence.name = s.name;
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t npix = s.width * s.height;
    for (std::size_t k = 0; k < s.frames; ++k) {
        std::vector<double> canvas(npix * 3);
        for (std::size_t py = 0; py < s.height; ++py)
            for (std::size_t px = 0; px < s.width; ++px) {
                // faint static background structure
                const double g = 12.0 * (detail::hash_noise(px / 8, py / 8) - 0.5);
                for (std::size_t c = 0; c < 3; ++c) canvas[(py * s.width + px) * 3 + c] = s.background[c] + g;
            }
        for (std::size_t i = 0; i < distractors.size(); ++i) {
            auto& d = distractors[i];
            if (k > 0) {
                d.x += dvel[i].first;
                d.y += dvel[i].second;
                const double xm = static_cast<double>(s.width) - d.w, ym = static_cast<double>(s.height) - d.h;
                if (d.x < 0 || d.x > xm) dvel[i].first = -dvel[i].first, d.x = std::clamp(d.x, 0.0, xm);
                if (d.y < 0 || d.y > ym) dvel[i].second = -dvel[i].second, d.y = std::clamp(d.y, 0.0, ym);
            }
            detail::draw(canvas, s.width, s.height, d);
        }
        const auto [x, y] = path[k];
        detail::draw(canvas, s.width, s.height, {s.object, x, y, s.object_w, s.object_h, s.color, s.texture});
        if (s.occluded.count(k + 1) && s.occluder_fraction > 0) {
            // A flat patch over the leading part of the box, with a 2 px margin.
            const double f = std::min(1.0, s.occluder_fraction);
            const double margin = 2.0;
            detail::Sprite occ{ObjectKind::rect, x - margin, y - margin,
                               f * s.object_w + (f >= 1.0 ? 2 * margin : margin), s.object_h + 2 * margin,
                               s.occluder_color, 0.0};
            detail::draw(canvas, s.width, s.height, occ);
            out.occlusions.push_back({k + 1, f});
        }
        Image img(s.width, s.height);
        for (std::size_t i = 0; i < npix * 3; ++i) {
            const double v = canvas[i] + (s.noise > 0 ? s.noise * noise(rng) : 0.0);
            img.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
        out.sequence.frames.push_back(std::move(img));
        out.sequence.groundtruth.push_back(BBox::from_xywh(x, y, s.object_w, s.object_h));
    }
    return out;
}

/// "frame,fraction" lines, one per occluded frame.
inline void write_occlusions(const std::string& path, const std::vector<OcclusionEvent>& events) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    for (const auto& e : events) os << e.frame << ',' << format_real(e.fraction) << '\n';
}

inline std::vector<OcclusionEvent> read_occlusions(const std::string& path) {
    std::vector<OcclusionEvent> out;
    std::ifstream is(path);
    if (!is) return out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        const auto v = parse_reals(line);
        if (v.size() != 2) throw FormatError(path + ": expected frame,fraction");
        out.push_back({static_cast<std::size_t>(v[0]), v[1]});
    }
    return out;
}

inline void save_synthetic(const std::string& dir, const SyntheticSequence& s) {
    save_sequence(dir, s.sequence);
    write_occlusions((std::filesystem::path(dir) / "occlusion.txt").string(), s.occlusions);
}

}  // namespace stdtrack
