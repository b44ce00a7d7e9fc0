#pragma once

// Sensor frames and the "OSTD" dataset file.
//
// Layout (little-endian):
//   char[4] "OSTD", u32 version = 1
//   f64 dt, u64 frame_count, u32 image_height, u32 image_width, u64 image_count
//   u32 channel_count, then per channel: u32 name_len, name bytes, u32 width
//   frame_count records of record_width f64 values, channels in listed order
//   image_count rasters of image_height*image_width f32, row-major
//
// Channel order (width): t(1) joint_pos(12) joint_vel(12) imu_theta(3)
// imu_omega(3) imu_accel(3) imu_alpha(3) contact(4) forces(12)
// depth_index(1) has_truth(1) truth(12) mocap(12) applied_forces(12)
// feet_body_true(12) slip(4).
//
// `truth` is the exact simulated state, `mocap` the noisy surrogate used as a
// training target. `depth_index` is -1 when the dataset carries no images.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "optistate/core/errors.hpp"
#include "optistate/core/state.hpp"
#include "optistate/filter/kalman.hpp"
#include "optistate/model/leg_kinematics.hpp"
#include "optistate/sim/depth_camera.hpp"

namespace optistate {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

struct SensorFrame {
    double t = 0.0;
    JointSample joints;
    ImuSample imu;
    ContactRef contact;
    GroundReactionForces forces = GroundReactionForces::Zero();
    int depth_index = -1;
    bool has_truth = false;
    TrunkState truth;
    TrunkState mocap;
    GroundReactionForces applied_forces = GroundReactionForces::Zero();
    FootPositions feet_body_true = FootPositions::Zero();
    std::array<bool, 4> slip{};
};

struct Dataset {
    double dt = 0.005;
    int image_height = 0;
    int image_width = 0;
    std::vector<SensorFrame> frames;
    std::vector<DepthImage> images;

    bool has_depth() const { return !images.empty(); }
    const DepthImage* depth_for(std::size_t k) const {
        const int i = frames[k].depth_index;
        return i < 0 ? nullptr : &images[static_cast<std::size_t>(i)];
    }
};

inline constexpr char kDatasetMagic[4] = {'O', 'S', 'T', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct ChannelSpec {
    const char* name;
    std::uint32_t width;
};

inline constexpr std::array<ChannelSpec, 16> kDatasetChannels{{
    {"t", 1}, {"joint_pos", 12}, {"joint_vel", 12}, {"imu_theta", 3}, {"imu_omega", 3},
    {"imu_accel", 3}, {"imu_alpha", 3}, {"contact", 4}, {"forces", 12}, {"depth_index", 1},
    {"has_truth", 1}, {"truth", 12}, {"mocap", 12}, {"applied_forces", 12},
    {"feet_body_true", 12}, {"slip", 4},
}};

inline constexpr std::size_t dataset_record_width() {
    std::size_t w = 0;
    for (const auto& c : kDatasetChannels) w += c.width;
    return w;
}

namespace detail {

template <class Derived>
inline void put(double*& out, const Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) *out++ = v(i);
}
template <class Derived>
inline void get(const double*& in, Eigen::MatrixBase<Derived>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = *in++;
}
inline void put_flags(double*& out, const std::array<bool, 4>& f) {
    for (bool b : f) *out++ = b ? 1.0 : 0.0;
}
inline void get_flags(const double*& in, std::array<bool, 4>& f) {
    for (bool& b : f) b = (*in++ != 0.0);
}

inline void pack_frame(const SensorFrame& s, double* out) {
    *out++ = s.t;
    put(out, s.joints.theta);
    put(out, s.joints.theta_dot);
    put(out, s.imu.theta);
    put(out, s.imu.omega);
    put(out, s.imu.accel);
    put(out, s.imu.alpha);
    put_flags(out, s.contact.flags);
    put(out, s.forces);
    *out++ = static_cast<double>(s.depth_index);
    *out++ = s.has_truth ? 1.0 : 0.0;
    put(out, s.truth.x);
    put(out, s.mocap.x);
    put(out, s.applied_forces);
    put(out, s.feet_body_true);
    put_flags(out, s.slip);
}

inline SensorFrame unpack_frame(const double* in) {
    SensorFrame s;
    s.t = *in++;
    get(in, s.joints.theta);
    get(in, s.joints.theta_dot);
    get(in, s.imu.theta);
    get(in, s.imu.omega);
    get(in, s.imu.accel);
    get(in, s.imu.alpha);
    get_flags(in, s.contact.flags);
    get(in, s.forces);
    s.depth_index = static_cast<int>(*in++);
    s.has_truth = (*in++ != 0.0);
    get(in, s.truth.x);
    get(in, s.mocap.x);
    get(in, s.applied_forces);
    get(in, s.feet_body_true);
    get_flags(in, s.slip);
    return s;
}

template <class T>
inline void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
inline T read_pod(std::istream& is, const std::string& what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw FormatError("dataset truncated while reading " + what);
    }
    return v;
}

} // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(kDatasetMagic, 4);
    detail::write_pod(os, kDatasetVersion);
    detail::write_pod(os, ds.dt);
    detail::write_pod(os, static_cast<std::uint64_t>(ds.frames.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(ds.image_height));
    detail::write_pod(os, static_cast<std::uint32_t>(ds.image_width));
    detail::write_pod(os, static_cast<std::uint64_t>(ds.images.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(kDatasetChannels.size()));
    for (const auto& c : kDatasetChannels) {
        const auto len = static_cast<std::uint32_t>(std::strlen(c.name));
        detail::write_pod(os, len);
        os.write(c.name, len);
        detail::write_pod(os, c.width);
    }
    std::vector<double> rec(dataset_record_width());
    for (const auto& f : ds.frames) {
        detail::pack_frame(f, rec.data());
        os.write(reinterpret_cast<const char*>(rec.data()),
                 static_cast<std::streamsize>(rec.size() * sizeof(double)));
    }
    for (const auto& img : ds.images) {
        if (img.height != ds.image_height || img.width != ds.image_width) {
            throw ShapeError("write_dataset: image dims disagree with the dataset header");
        }
        os.write(reinterpret_cast<const char*>(img.pixels.data()),
                 static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed for " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw FormatError(path + ": bad magic (not an OSTD dataset)");
    }
    const auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != kDatasetVersion) {
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    }
    Dataset ds;
    ds.dt = detail::read_pod<double>(is, "dt");
    const auto n_frames = detail::read_pod<std::uint64_t>(is, "frame count");
    ds.image_height = static_cast<int>(detail::read_pod<std::uint32_t>(is, "image height"));
    ds.image_width = static_cast<int>(detail::read_pod<std::uint32_t>(is, "image width"));
    const auto n_images = detail::read_pod<std::uint64_t>(is, "image count");
    const auto n_channels = detail::read_pod<std::uint32_t>(is, "channel count");
    if (n_channels != kDatasetChannels.size()) throw FormatError(path + ": unexpected channel list");
    for (const auto& c : kDatasetChannels) {
        const auto len = detail::read_pod<std::uint32_t>(is, "channel name length");
        if (len > 256) throw FormatError(path + ": corrupt channel table");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw FormatError(path + ": dataset truncated in channel table");
        const auto width = detail::read_pod<std::uint32_t>(is, "channel width");
        if (name != c.name || width != c.width) {
            throw FormatError(path + ": channel '" + name + "' does not match the expected layout");
        }
    }

    // Size check before allocating anything large.
    const auto header_end = static_cast<std::uint64_t>(is.tellg());
    is.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(is.tellg());
    is.seekg(static_cast<std::streamoff>(header_end));
    const std::uint64_t pixels = static_cast<std::uint64_t>(ds.image_height) * ds.image_width;
    const std::uint64_t expected =
        header_end + n_frames * dataset_record_width() * sizeof(double) + n_images * pixels * sizeof(float);
    if (file_size != expected) {
        throw FormatError(path + ": size " + std::to_string(file_size) + " bytes, header implies " +
                          std::to_string(expected));
    }

    std::vector<double> rec(dataset_record_width());
    ds.frames.reserve(n_frames);
    for (std::uint64_t k = 0; k < n_frames; ++k) {
        if (!is.read(reinterpret_cast<char*>(rec.data()),
                     static_cast<std::streamsize>(rec.size() * sizeof(double)))) {
            throw FormatError(path + ": dataset truncated in frame records");
        }
        ds.frames.push_back(detail::unpack_frame(rec.data()));
        const int di = ds.frames.back().depth_index;
        if (di < -1 || di >= static_cast<int>(n_images)) {
            throw FormatError(path + ": depth index out of range at frame " + std::to_string(k));
        }
    }
    ds.images.reserve(n_images);
    for (std::uint64_t i = 0; i < n_images; ++i) {
        DepthImage img(ds.image_height, ds.image_width);
        if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
                     static_cast<std::streamsize>(pixels * sizeof(float)))) {
            throw FormatError(path + ": dataset truncated in depth images");
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

inline bool operator==(const SensorFrame& a, const SensorFrame& b) {
    return a.t == b.t && a.joints.theta == b.joints.theta && a.joints.theta_dot == b.joints.theta_dot &&
           a.imu.theta == b.imu.theta && a.imu.omega == b.imu.omega && a.imu.accel == b.imu.accel &&
           a.imu.alpha == b.imu.alpha && a.contact.flags == b.contact.flags && a.forces == b.forces &&
           a.depth_index == b.depth_index && a.has_truth == b.has_truth && a.truth.x == b.truth.x &&
           a.mocap.x == b.mocap.x && a.applied_forces == b.applied_forces &&
           a.feet_body_true == b.feet_body_true && a.slip == b.slip;
}

inline bool operator==(const Dataset& a, const Dataset& b) {
    return a.dt == b.dt && a.image_height == b.image_height && a.image_width == b.image_width &&
           a.frames == b.frames && a.images == b.images;
}

} // namespace optistate
