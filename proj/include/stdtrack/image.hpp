#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stdtrack {

/// 8-bit interleaved RGB image.
struct Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {0, 0, 0})
        : width(w), height(h), rgb(w * h * 3) {
        for (std::size_t i = 0; i < w * h; ++i)
            for (std::size_t c = 0; c < 3; ++c) rgb[i * 3 + c] = fill[c];
    }

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

    std::array<double, 3> mean_color() const {
        std::array<double, 3> m{0, 0, 0};
        const std::size_t n = width * height;
        if (n == 0) return m;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 3; ++c) m[c] += rgb[i * 3 + c];
        for (auto& v : m) v /= static_cast<double>(n);
        return m;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ImageIoError("cannot open " + path + " for writing");
    os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!os) throw ImageIoError("write failed: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ImageIoError("cannot open " + path);
    auto token = [&]() {
        std::string t;
        char ch;
        while (is.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(is, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(ch);
        }
        return t;
    };
    if (token() != "P6") throw ImageIoError(path + ": not a binary PPM (P6)");
    Image img;
    try {
        img.width = std::stoul(token());
        img.height = std::stoul(token());
        if (std::stoul(token()) != 255) throw ImageIoError(path + ": only 8-bit PPM supported");
    } catch (const std::logic_error&) {
        throw ImageIoError(path + ": malformed PPM header");
    }
    img.rgb.resize(img.width * img.height * 3);
    is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (is.gcount() != static_cast<std::streamsize>(img.rgb.size())) throw ImageIoError(path + ": truncated pixel data");
    return img;
}

}  // namespace stdtrack
