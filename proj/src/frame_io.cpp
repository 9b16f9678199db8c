#include "vidtune/frame_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vidtune {

namespace {

constexpr char kFrameMagic[4] = {'V', 'T', 'F', 'R'};
constexpr std::uint16_t kFrameVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("frame: truncated payload in " + path);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void write_frame(const LatentFrame& frame, const std::string& path) {
    if (frame.empty()) throw std::invalid_argument("write_frame: empty frame");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("frame: cannot open " + path + " for writing");
    os.write(kFrameMagic, sizeof(kFrameMagic));
    write_le<std::uint16_t>(os, kFrameVersion);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame.height()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame.width()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame.channels()));
    for (double v : frame.values()) write_le<double>(os, v);
    if (!os) throw std::runtime_error("frame: write failed for " + path);
    write_preview_pgm(frame, path + ".pgm");
}

LatentFrame read_frame(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("frame: cannot open " + path);
    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kFrameMagic, sizeof(magic)) != 0)
        throw std::runtime_error("frame: bad magic in " + path);
    auto version = read_le<std::uint16_t>(is, path);
    if (version != kFrameVersion)
        throw std::runtime_error("frame: unsupported version in " + path);
    auto h = read_le<std::uint32_t>(is, path);
    auto w = read_le<std::uint32_t>(is, path);
    auto c = read_le<std::uint32_t>(is, path);
    if (h == 0 || w == 0 || c == 0 || h > 1u << 20 || w > 1u << 20 || c > 1u << 10)
        throw std::runtime_error("frame: implausible dimensions in " + path);
    std::vector<double> values(static_cast<std::size_t>(h) * w * c);
    for (auto& v : values) v = read_le<double>(is, path);
    LatentFrame frame(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
                      std::move(values));
    if (!frame.all_finite())
        throw std::runtime_error("frame: nonfinite values in " + path);
    return frame;
}

void write_preview_pgm(const LatentFrame& frame, const std::string& path) {
    std::vector<double> means(static_cast<std::size_t>(frame.height()) * frame.width());
    std::size_t i = 0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x, ++i) {
            double m = 0.0;
            for (int c = 0; c < frame.channels(); ++c) m += frame.at(y, x, c);
            m /= frame.channels();
            means[i] = m;
            if (first || m < lo) lo = m;
            if (first || m > hi) hi = m;
            first = false;
        }
    double range = hi - lo;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("preview: cannot open " + path + " for writing");
    os << "P5\n" << frame.width() << " " << frame.height() << "\n255\n";
    for (double m : means) {
        int g = range > 0.0 ? static_cast<int>(std::lround((m - lo) / range * 255.0)) : 0;
        unsigned char b = static_cast<unsigned char>(std::clamp(g, 0, 255));
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!os) throw std::runtime_error("preview: write failed for " + path);
}

namespace {

std::string frame_name(int j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06d.vtfr", j);
    return buf;
}

}  // namespace

void write_video_dir(const Video& video, const VideoManifest& manifest, const std::string& dir) {
    if (video.frames.empty()) throw std::invalid_argument("write_video_dir: empty video");
    std::filesystem::create_directories(dir);

    nlohmann::json j{{"frames", manifest.frames}, {"height", manifest.height},
                     {"width", manifest.width},   {"channels", manifest.channels},
                     {"stride", manifest.stride}, {"clip_len", manifest.clip_len},
                     {"clip_count", manifest.clip_count}};
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw std::runtime_error("manifest: cannot open " + dir + "/manifest.json");
    os << j.dump(2) << "\n";

    for (int i = 0; i < video.length(); ++i)
        write_frame(video.frames[static_cast<std::size_t>(i)], dir + "/" + frame_name(i));
}

Video read_video_dir(const std::string& dir, VideoManifest* manifest_out) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw std::runtime_error("manifest: cannot open " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: parse error in " + dir + ": " + e.what());
    }
    VideoManifest m;
    m.frames = j.at("frames").get<int>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.channels = j.at("channels").get<int>();
    m.stride = j.value("stride", 0);
    m.clip_len = j.value("clip_len", 0);
    m.clip_count = j.value("clip_count", 0);
    if (m.frames < 1) throw std::runtime_error("manifest: invalid frame count in " + dir);

    Video video;
    video.frames.reserve(static_cast<std::size_t>(m.frames));
    for (int i = 0; i < m.frames; ++i) {
        LatentFrame f = read_frame(dir + "/" + frame_name(i));
        if (f.height() != m.height || f.width() != m.width || f.channels() != m.channels)
            throw std::runtime_error("manifest: frame shape mismatch in " + dir);
        video.frames.push_back(std::move(f));
    }
    if (manifest_out != nullptr) *manifest_out = m;
    return video;
}

}  // namespace vidtune
