#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subaru {

// Mono waveform plus capture metadata; the unit of all audio I/O in the
// pipeline. Samples live in [-1, +1]; bit_depth records the capture
// resolution (what the simulated ADC produced), not the container format.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;
    int bit_depth = 16;
    std::string label;

    int64_t length() const { return static_cast<int64_t>(samples.size()); }
    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(length()) / sample_rate : 0.0;
    }

    void clamp_unit() {
        for (double& s : samples) s = std::clamp(s, -1.0, 1.0);
    }

    void validate() const {
        if (sample_rate <= 0) throw std::invalid_argument("AudioClip: sample_rate must be positive");
        if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12 && bit_depth != 16)
            throw std::invalid_argument("AudioClip: bit_depth must be one of 8/10/12/16");
        for (double s : samples)
            if (!(s >= -1.0 && s <= 1.0))
                throw std::invalid_argument("AudioClip: sample outside [-1, +1]");
    }
};

inline double rms(const std::vector<double>& x, size_t begin, size_t end) {
    double acc = 0.0;
    for (size_t i = begin; i < end; ++i) acc += x[i] * x[i];
    size_t n = end > begin ? end - begin : 1;
    return std::sqrt(acc / static_cast<double>(n));
}

inline double mean_power(const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// WAV I/O. Interchange format is 16-bit PCM little-endian mono; the reader
// additionally accepts 8/24/32-bit PCM, 32-bit float, and stereo (downmixed
// by channel mean) so external corpora load without a conversion step.
// ---------------------------------------------------------------------------

namespace wav_detail {

inline uint32_t rd_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t rd_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

inline AudioClip load_wav(const std::string& path) {
    using namespace wav_detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_wav: cannot open " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("load_wav: not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= raw.size()) {
        const unsigned char* hdr = raw.data() + pos;
        uint32_t chunk_len = rd_u32(hdr + 4);
        const unsigned char* body = hdr + 8;
        if (pos + 8 + chunk_len > raw.size()) chunk_len = static_cast<uint32_t>(raw.size() - pos - 8);
        if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
            if (format == 0xFFFE && chunk_len >= 40)  // WAVE_FORMAT_EXTENSIBLE
                format = rd_u16(body + 24);
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = body;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }
    if (!data || rate == 0 || channels == 0)
        throw std::runtime_error("load_wav: missing fmt/data chunk: " + path);
    if (format != 1 && format != 3)
        throw std::runtime_error("load_wav: unsupported encoding (PCM/float only): " + path);

    const int bytes_per = bits / 8;
    if (bytes_per == 0 || (format == 1 && bits != 8 && bits != 16 && bits != 24 && bits != 32) ||
        (format == 3 && bits != 32))
        throw std::runtime_error("load_wav: unsupported bit width: " + path);

    const int64_t frames = data_len / (bytes_per * channels);
    if (frames == 0) throw std::runtime_error("load_wav: zero-length audio: " + path);

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.bit_depth = 16;
    clip.label = path;
    clip.samples.resize(static_cast<size_t>(frames));
    for (int64_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data + (i * channels + c) * bytes_per;
            double v = 0.0;
            if (format == 3) {  // IEEE float
                float fv;
                std::memcpy(&fv, p, 4);
                v = fv;
            } else if (bits == 8) {  // unsigned with 0x80 midpoint
                v = (static_cast<int>(p[0]) - 128) / 128.0;
            } else if (bits == 16) {
                int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
                v = s / 32768.0;
            } else if (bits == 24) {
                int32_t s = (p[0] << 8 | p[1] << 16 | p[2] << 24);
                v = (s >> 8) / 8388608.0;
            } else {  // 32-bit PCM
                int32_t s;
                std::memcpy(&s, p, 4);
                v = s / 2147483648.0;
            }
            acc += v;
        }
        clip.samples[static_cast<size_t>(i)] = acc / channels;
    }
    clip.clamp_unit();
    return clip;
}

inline void save_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("save_wav: invalid sample rate");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_wav: cannot open " + path + " for writing");

    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    const uint32_t data_len = n * 2;
    const uint32_t rate = static_cast<uint32_t>(clip.sample_rate);
    const uint32_t byte_rate = rate * 2;

    auto w_u32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto w_u16 = [&](uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };

    f.write("RIFF", 4);
    w_u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    w_u32(16);
    w_u16(1);  // PCM
    w_u16(1);  // mono
    w_u32(rate);
    w_u32(byte_rate);
    w_u16(2);   // block align
    w_u16(16);  // bits per sample
    f.write("data", 4);
    w_u32(data_len);
    for (double s : clip.samples) {
        double v = std::clamp(s, -1.0, 1.0) * 32767.0;
        int16_t q = static_cast<int16_t>(std::lround(v));
        unsigned char b[2] = {static_cast<unsigned char>(q & 0xFF),
                              static_cast<unsigned char>((q >> 8) & 0xFF)};
        f.write(reinterpret_cast<char*>(b), 2);
    }
    if (!f) throw std::runtime_error("save_wav: write failed: " + path);
}

// ---------------------------------------------------------------------------
// Dataset manifest: comma-separated text, header row required.
//   clean_path,bcm_path,split,speaker_id
// bcm_path may be empty (no body-conduction channel for that utterance).
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string clean_path;
    std::string bcm_path;  // empty = null modality
    std::string split;     // train | val | test
    std::string speaker_id;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_manifest: empty file " + path);
    auto hdr = split_csv_line(line);
    if (hdr.size() < 4 || hdr[0] != "clean_path" || hdr[1] != "bcm_path" || hdr[2] != "split" ||
        hdr[3] != "speaker_id")
        throw std::runtime_error("load_manifest: bad header, expected clean_path,bcm_path,split,speaker_id");
    std::vector<ManifestEntry> entries;
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        auto cols = split_csv_line(line);
        if (cols.size() < 4)
            throw std::runtime_error("load_manifest: short row in " + path + ": " + line);
        ManifestEntry e{cols[0], cols[1], cols[2], cols[3]};
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw std::runtime_error("load_manifest: bad split '" + e.split + "' in " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
    f << "clean_path,bcm_path,split,speaker_id\n";
    for (const auto& e : entries)
        f << e.clean_path << "," << e.bcm_path << "," << e.split << "," << e.speaker_id << "\n";
}

}  // namespace subaru
