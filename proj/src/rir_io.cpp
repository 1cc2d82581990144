#include "edcforge/rir.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "edcforge/errors.hpp"
#include "edcforge/io_util.hpp"

namespace edcforge {

namespace {
constexpr char kMagic[4] = {'R', 'I', 'R', '1'};
}

void save_rir(const Rir& rir, const std::string& path) {
    if (rir.samples.empty() || !(rir.sample_rate_hz > 0.0)) {
        throw Error(ErrorKind::validation, "refusing to save an empty RIR");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(std::llround(rir.sample_rate_hz)));
    for (double v : rir.samples) write_f32(out, static_cast<float>(v));
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

Rir load_rir(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("not a RIR1 file: " + path);
    }
    Rir rir;
    rir.sample_rate_hz = read_u32(in);
    if (!(rir.sample_rate_hz > 0.0)) throw FormatError("RIR file has zero sample rate: " + path);
    while (true) {
        float v;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (in.gcount() == 0) break;
        if (in.gcount() != sizeof v) throw FormatError("truncated RIR file: " + path);
        rir.samples.push_back(v);
    }
    if (rir.samples.empty()) throw FormatError("RIR file has no samples: " + path);
    return rir;
}

void save_rir_wav(const Rir& rir, const std::string& path) {
    if (rir.samples.empty() || !(rir.sample_rate_hz > 0.0)) {
        throw Error(ErrorKind::validation, "refusing to save an empty RIR");
    }
    double peak = 0.0;
    for (double v : rir.samples) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0.0 ? 0.9 / peak : 0.0;

    const auto rate = static_cast<std::uint32_t>(std::llround(rir.sample_rate_hz));
    const auto data_bytes = static_cast<std::uint32_t>(rir.samples.size() * 2);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);
    write_u16(out, 1);
    write_u32(out, rate);
    write_u32(out, rate * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (double v : rir.samples) {
        const double x = std::clamp(v * scale, -1.0, 1.0);
        write_i16(out, static_cast<std::int16_t>(std::lround(x * 32767.0)));
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

} // namespace edcforge
