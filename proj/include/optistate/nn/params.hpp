#pragma once

// Named parameter tensors, Adam/AdamW and the tensor checkpoint format shared
// by the ViT ("OSVT") and GRU ("OSGR") files:
//
//   char[4] magic, u32 version = 1
//   u32 text_len, config text (key = value lines)
//   u32 tensor_count, then per tensor:
//     u32 name_len, name, u32 rows, u32 cols, rows*cols f64 (row-major)

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optistate/core/errors.hpp"

namespace optistate::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
class ParamStore {
public:
    int add(std::string name, int rows, int cols, bool decay) {
        names_.push_back(std::move(name));
        values_.push_back(Mat<T>::Zero(rows, cols));
        decay_.push_back(decay);
        return static_cast<int>(values_.size()) - 1;
    }

    Mat<T>& operator[](int i) { return values_[static_cast<std::size_t>(i)]; }
    const Mat<T>& operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(values_.size()); }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    bool decays(int i) const { return decay_[static_cast<std::size_t>(i)]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
        return n;
    }

    ParamStore zeros_like() const {
        ParamStore z = *this;
        z.set_zero();
        return z;
    }

    void set_zero() {
        for (auto& v : values_) v.setZero();
    }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (int i = 0; i < size(); ++i) {
            const int id = out.add(name(i), static_cast<int>((*this)[i].rows()),
                                   static_cast<int>((*this)[i].cols()), decays(i));
            out[id] = (*this)[i].template cast<U>();
        }
        return out;
    }

    bool all_finite() const {
        for (const auto& v : values_) {
            if (!v.allFinite()) return false;
        }
        return true;
    }

    int find(const std::string& n) const {
        for (int i = 0; i < size(); ++i) {
            if (names_[static_cast<std::size_t>(i)] == n) return i;
        }
        return -1;
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat<T>> values_;
    std::vector<bool> decay_;
};

/// Truncated normal (±2σ) fill.
template <class T>
void init_trunc_normal(Mat<T>& m, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double z;
        do {
            z = g(rng);
        } while (std::abs(z) > 2.0);
        m(i) = static_cast<T>(std * z);
    }
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false;  // true: AdamW on decaying tensors only; false: L2 on every tensor
};

template <class T>
class Adam {
public:
    Adam() = default;
    Adam(const ParamStore<T>& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

    void step(ParamStore<T>& params, const ParamStore<T>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T step = static_cast<T>(cfg_.lr / bc1);
        const T inv_bc2 = static_cast<T>(1.0 / bc2);
        const T eps = static_cast<T>(cfg_.eps);
        for (int i = 0; i < params.size(); ++i) {
            Mat<T> g = grads[i];
            if (!cfg_.decoupled && cfg_.weight_decay > 0.0) {
                g += static_cast<T>(cfg_.weight_decay) * params[i];
            }
            m_[i] = b1 * m_[i] + (T(1) - b1) * g;
            v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseAbs2();
            if (cfg_.decoupled && cfg_.weight_decay > 0.0 && params.decays(i)) {
                params[i] *= static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
            }
            params[i].array() -= step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
        }
    }

    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    ParamStore<T> m_;
    ParamStore<T> v_;
    long t_ = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_checkpoint(const std::string& path, const char magic[4], const std::string& config_text,
                      const ParamStore<T>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    os.write(magic, 4);
    u32(kCheckpointVersion);
    u32(static_cast<std::uint32_t>(config_text.size()));
    os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    u32(static_cast<std::uint32_t>(params.size()));
    for (int i = 0; i < params.size(); ++i) {
        const auto& n = params.name(i);
        u32(static_cast<std::uint32_t>(n.size()));
        os.write(n.data(), static_cast<std::streamsize>(n.size()));
        const auto& m = params[i];
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const double v = static_cast<double>(m(r, c));
                os.write(reinterpret_cast<const char*>(&v), 8);
            }
        }
    }
    if (!os) throw IoError("write failed for " + path);
}

struct CheckpointTensor {
    std::string name;
    Mat<double> value;
};

struct CheckpointContents {
    std::string config_text;
    std::vector<CheckpointTensor> tensors;
};

inline CheckpointContents read_checkpoint(const std::string& path, const char magic[4]) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    auto fail = [&](const std::string& what) { throw FormatError(path + ": " + what); };
    auto u32 = [&]() {
        std::uint32_t v = 0;
        if (!is.read(reinterpret_cast<char*>(&v), 4)) fail("truncated checkpoint");
        return v;
    };
    char m[4];
    if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0) {
        fail(std::string("bad magic (expected ") + std::string(magic, 4) + ")");
    }
    if (u32() != kCheckpointVersion) fail("unsupported checkpoint version");
    CheckpointContents out;
    const auto tlen = u32();
    if (tlen > (1u << 24)) fail("corrupt config block");
    out.config_text.resize(tlen);
    if (!is.read(out.config_text.data(), tlen)) fail("truncated config block");
    const auto count = u32();
    if (count > 100000) fail("corrupt tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto nlen = u32();
        if (nlen > 4096) fail("corrupt tensor name");
        CheckpointTensor t;
        t.name.resize(nlen);
        if (!is.read(t.name.data(), nlen)) fail("truncated tensor name");
        const auto rows = u32(), cols = u32();
        if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) fail("corrupt tensor shape");
        t.value.resize(rows, cols);
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t c = 0; c < cols; ++c) {
                double v;
                if (!is.read(reinterpret_cast<char*>(&v), 8)) fail("truncated tensor data");
                t.value(r, c) = v;
            }
        }
        out.tensors.push_back(std::move(t));
    }
    if (is.peek() != std::char_traits<char>::eof()) fail("trailing bytes after tensors");
    return out;
}

/// Copies checkpoint tensors into `params`, which must have the same layout.
template <class T>
void load_tensors(const CheckpointContents& ck, ParamStore<T>& params, const std::string& what) {
    for (const auto& t : ck.tensors) {
        const int i = params.find(t.name);
        if (i < 0) throw ConfigError(what + " checkpoint has unexpected tensor '" + t.name + "'");
        if (params[i].rows() != t.value.rows() || params[i].cols() != t.value.cols()) {
            throw ConfigError(what + " checkpoint tensor '" + t.name + "' has the wrong shape for this config");
        }
        params[i] = t.value.cast<T>();
    }
    if (static_cast<int>(ck.tensors.size()) != params.size()) {
        throw ConfigError(what + " checkpoint is missing tensors for this config");
    }
}

} // namespace optistate::nn
