#include "edcforge/room.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include <json.hpp>

#include "edcforge/errors.hpp"
#include "edcforge/io_util.hpp"

namespace edcforge {

namespace {

// Validation should accept values the sampler can legitimately emit, so give
// range checks a hair of slack against round-tripping through decimal text.
constexpr double kEps = 1e-9;

void check_range(std::vector<std::string>& issues, const char* name, double value,
                 double lo, double hi) {
    if (!std::isfinite(value) || value < lo - kEps || value > hi + kEps) {
        issues.push_back(fmt::format("{} = {:.6g} outside [{:.6g}, {:.6g}]", name, value, lo, hi));
    }
}

void check_point(std::vector<std::string>& issues, const char* name, const Vec3& p,
                 const RoomConfig& c, double margin) {
    const std::array<std::pair<double, char>, 3> spans = {
        std::pair{c.length_m, 'x'}, std::pair{c.width_m, 'y'}, std::pair{c.height_m, 'z'}};
    const std::array<double, 3> coords = {p.x, p.y, p.z};
    for (int axis = 0; axis < 3; ++axis) {
        const double v = coords[axis];
        const double hi = spans[axis].first - margin;
        if (!std::isfinite(v) || v < margin - kEps || v > hi + kEps) {
            issues.push_back(fmt::format("{}.{} = {:.6g} closer than {:.6g} m to a wall", name,
                                         spans[axis].second, v, margin));
        }
    }
}

} // namespace

std::vector<std::string> validate(const RoomConfig& c, const RoomLimits& lim) {
    std::vector<std::string> issues;
    check_range(issues, "length_m", c.length_m, lim.min_length_m, lim.max_length_m);
    check_range(issues, "width_m", c.width_m, lim.min_width_m, lim.max_width_m);
    check_range(issues, "height_m", c.height_m, lim.min_height_m, lim.max_height_m);
    for (int b = 0; b < kNumBands; ++b) {
        const double a = c.absorption[b];
        if (!std::isfinite(a) || a <= 0.0 || a >= 1.0) {
            issues.push_back(fmt::format("absorption[{}] = {:.6g} outside (0, 1)", b, a));
        }
    }
    // Placement checks only make sense once the box itself is plausible.
    if (std::isfinite(c.length_m) && std::isfinite(c.width_m) && std::isfinite(c.height_m) &&
        c.length_m > 2.0 * lim.wall_margin_m && c.width_m > 2.0 * lim.wall_margin_m &&
        c.height_m > 2.0 * lim.wall_margin_m) {
        check_point(issues, "source", c.source, c, lim.wall_margin_m);
        check_point(issues, "receiver", c.receiver, c, lim.wall_margin_m);
        const double d = distance(c.source, c.receiver);
        if (!std::isfinite(d) || d < lim.min_src_rcv_dist_m - kEps ||
            d > lim.max_src_rcv_dist_m + kEps) {
            issues.push_back(fmt::format("source-receiver distance = {:.6g} outside [{:.6g}, {:.6g}]",
                                         d, lim.min_src_rcv_dist_m, lim.max_src_rcv_dist_m));
        }
    }
    return issues;
}

void validate_or_throw(const RoomConfig& c, const RoomLimits& lim) {
    auto issues = validate(c, lim);
    if (!issues.empty()) throw ValidationError(issues);
}

FeatureVector to_features(const RoomConfig& c) {
    FeatureVector f{};
    f[0] = c.length_m;
    f[1] = c.width_m;
    f[2] = c.height_m;
    f[3] = c.source.x;
    f[4] = c.source.y;
    f[5] = c.source.z;
    f[6] = c.receiver.x;
    f[7] = c.receiver.y;
    f[8] = c.receiver.z;
    for (int b = 0; b < kNumBands; ++b) f[9 + b] = c.absorption[b];
    return f;
}

RoomConfig from_features(const FeatureVector& f) {
    RoomConfig c;
    c.length_m = f[0];
    c.width_m = f[1];
    c.height_m = f[2];
    c.source = {f[3], f[4], f[5]};
    c.receiver = {f[6], f[7], f[8]};
    for (int b = 0; b < kNumBands; ++b) c.absorption[b] = f[9 + b];
    return c;
}

std::string room_to_json(const RoomConfig& c) {
    nlohmann::ordered_json j;
    j["length_m"] = c.length_m;
    j["width_m"] = c.width_m;
    j["height_m"] = c.height_m;
    j["source"] = {c.source.x, c.source.y, c.source.z};
    j["receiver"] = {c.receiver.x, c.receiver.y, c.receiver.z};
    j["absorption"] = c.absorption;
    return j.dump(2) + "\n";
}

RoomConfig room_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("room json: ") + e.what());
    }
    RoomConfig c;
    try {
        c.length_m = j.at("length_m").get<double>();
        c.width_m = j.at("width_m").get<double>();
        c.height_m = j.at("height_m").get<double>();
        auto s = j.at("source");
        auto r = j.at("receiver");
        if (s.size() != 3 || r.size() != 3) throw FormatError("room json: source/receiver need 3 coordinates");
        c.source = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
        c.receiver = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
        auto a = j.at("absorption");
        if (a.size() != static_cast<std::size_t>(kNumBands)) {
            throw FormatError(fmt::format("room json: absorption needs {} entries", kNumBands));
        }
        for (int b = 0; b < kNumBands; ++b) c.absorption[b] = a[b].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("room json: ") + e.what());
    }
    return c;
}

RoomConfig load_room_file(const std::string& path) {
    return room_from_json(read_text_file(path));
}

void save_room_file(const RoomConfig& c, const std::string& path) {
    write_text_file(path, room_to_json(c));
}

} // namespace edcforge
