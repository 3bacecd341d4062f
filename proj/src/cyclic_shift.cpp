#include "remm/cyclic_shift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "remm/kernels.hpp"

namespace remm {

bool valid_group_size(int g_size, int dim) {
    return g_size >= 1 && g_size <= dim && dim % g_size == 0;
}

GroupedDescriptor group(const std::vector<float>& descriptor, int g_size) {
    const int dim = static_cast<int>(descriptor.size());
    if (!valid_group_size(g_size, dim))
        throw std::invalid_argument("group size " + std::to_string(g_size) +
                                    " does not divide descriptor dim " +
                                    std::to_string(dim));
    GroupedDescriptor gd;
    gd.values = descriptor;
    gd.g_size = g_size;
    gd.dim = dim;
    return gd;
}

std::vector<float> flatten(const GroupedDescriptor& gd) { return gd.values; }

int shift_value_from_angle(double theta_deg, int g_size) {
    if (!std::isfinite(theta_deg))
        throw std::invalid_argument("shift_value_from_angle: non-finite angle");
    if (!valid_group_size(g_size))
        throw std::invalid_argument("invalid group size " +
                                    std::to_string(g_size));
    const double raw = theta_deg / 360.0 * g_size;
    long s = std::lround(raw);  // ties away from zero
    s %= g_size;
    if (s < 0) s += g_size;
    return static_cast<int>(s);
}

GroupedDescriptor cyclic_shift(const GroupedDescriptor& gd, int s) {
    const int g = gd.g_size;
    int sh = s % g;
    if (sh < 0) sh += g;
    GroupedDescriptor out;
    out.g_size = g;
    out.dim = gd.dim;
    out.values.resize(gd.values.size());
    const int len = gd.group_len();
    for (int i = 0; i < g; ++i) {
        const int src = (i + sh) % g;
        std::copy_n(gd.group(src), len,
                    out.values.data() + static_cast<std::size_t>(i) * len);
    }
    return out;
}

ShiftSet topk_shift_values(const GroupedDescriptor& gd, TopKMode mode,
                           double ratio) {
    const int g = gd.g_size;
    std::vector<float> hist(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) hist[static_cast<std::size_t>(i)] = gd.group(i)[0];

    const auto max_it = std::max_element(hist.begin(), hist.end());
    const float hmax = *max_it;
    const bool all_equal =
        std::all_of(hist.begin(), hist.end(),
                    [hmax](float v) { return v == hmax; });
    ShiftSet out;
    if (all_equal) {
        out.shifts.resize(static_cast<std::size_t>(g));
        std::iota(out.shifts.begin(), out.shifts.end(), 0);
        return out;
    }
    const int argmax = static_cast<int>(max_it - hist.begin());
    if (mode == TopKMode::kTop1) {
        out.shifts = {argmax};
        return out;
    }
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("TopK ratio must be in (0,1), got " +
                                    std::to_string(ratio));
    std::vector<int> rest;
    for (int i = 0; i < g; ++i) {
        if (i == argmax) continue;
        if (hist[static_cast<std::size_t>(i)] >= ratio * hmax) rest.push_back(i);
    }
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
        return hist[static_cast<std::size_t>(a)] > hist[static_cast<std::size_t>(b)];
    });
    out.shifts.push_back(argmax);
    out.shifts.insert(out.shifts.end(), rest.begin(), rest.end());
    return out;
}

std::vector<std::vector<float>> expand_descriptors(const GroupedDescriptor& gd,
                                                   const ShiftSet& shifts) {
    std::vector<std::vector<float>> out;
    out.reserve(shifts.shifts.size());
    for (int s : shifts.shifts) {
        auto d = cyclic_shift(gd, s).values;
        kernels::l2_normalize_rows(d.data(), 1, gd.dim);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<int> shift_permutation(int s, int g_size, int dim) {
    if (!valid_group_size(g_size, dim))
        throw std::invalid_argument("invalid group size for permutation");
    int sh = s % g_size;
    if (sh < 0) sh += g_size;
    const int len = dim / g_size;
    std::vector<int> perm(static_cast<std::size_t>(dim));
    for (int i = 0; i < g_size; ++i) {
        const int src = (i + sh) % g_size;
        for (int j = 0; j < len; ++j)
            perm[static_cast<std::size_t>(i * len + j)] = src * len + j;
    }
    return perm;
}

}  // namespace remm
