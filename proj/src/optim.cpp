#include "remm/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace remm {

AdamState AdamState::init(const std::vector<NamedParam>& params, float beta1,
                          float beta2, float eps) {
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.emplace_back(p.t.size(), 0.0f);
        s.v.emplace_back(p.t.size(), 0.0f);
    }
    return s;
}

void adam_step(std::vector<NamedParam>& params, AdamState& state, float lr) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("AdamState does not match parameter list");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& param = params[p];
        if (state.m[p].size() != static_cast<std::size_t>(param.t.size()))
            throw std::invalid_argument("AdamState moment shape mismatch for " +
                                        param.name);
        const float* g = param.t.grad();
        if (!g) continue;
        float* w = param.t.data();
        float* m = state.m[p].data();
        float* v = state.v[p].data();
        for (std::int64_t i = 0; i < param.t.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("non-finite gradient in parameter " +
                                         param.name);
            m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= static_cast<float>(lr * mhat /
                                       (std::sqrt(vhat) + state.eps));
        }
    }
}

namespace {

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated checkpoint");
    return v;
}

constexpr char kMagic[4] = {'R', 'E', 'M', 'M'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
    os.write(kMagic, 4);
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_raw(os, static_cast<std::uint16_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_raw(os, static_cast<std::uint8_t>(p.t.shape().size()));
        for (int d : p.t.shape()) write_raw(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p.t.data()),
                 static_cast<std::streamsize>(p.t.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::vector<NamedParam> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    const auto version = read_raw<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(version));
    const auto count = read_raw<std::uint32_t>(is);
    std::vector<NamedParam> params;
    params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_raw<std::uint8_t>(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_raw<std::uint32_t>(is));
        std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        params.push_back(
            {std::move(name),
             Tensor::from_data(std::move(shape), std::move(data), true)});
    }
    return params;
}

}  // namespace remm
