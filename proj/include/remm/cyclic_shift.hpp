#pragma once

#include <vector>

namespace remm {

// A 128-dim descriptor viewed as g_size orientation groups of
// (dim / g_size) channels each; the cyclic shift permutes the groups.
struct GroupedDescriptor {
    std::vector<float> values;  // row-major [g_size x (dim/g_size)]
    int g_size = 16;
    int dim = 128;

    int group_len() const { return dim / g_size; }
    const float* group(int i) const {
        return values.data() + static_cast<std::size_t>(i) * group_len();
    }
};

// Candidate shift values, argmax first.
struct ShiftSet {
    std::vector<int> shifts;
};

enum class TopKMode { kTop1, kRatio };

bool valid_group_size(int g_size, int dim = 128);

// Row-major reshape of a unit descriptor into g_size groups. Lossless.
GroupedDescriptor group(const std::vector<float>& descriptor, int g_size);
std::vector<float> flatten(const GroupedDescriptor& gd);

// round(theta/360 * g_size) mod g_size, ties away from zero; in [0,g_size).
int shift_value_from_angle(double theta_deg, int g_size);

// Group row i of the output is group row (i + s) mod g_size of the input:
// positive s moves groups toward lower indices.
GroupedDescriptor cyclic_shift(const GroupedDescriptor& gd, int s);

// Orientation histogram h[i] = first channel of group i. kTop1 returns the
// argmax only; kRatio returns every i with h[i] >= ratio * max(h), argmax
// first, remainder by descending h. An all-equal histogram returns every
// shift in index order.
ShiftSet topk_shift_values(const GroupedDescriptor& gd, TopKMode mode,
                           double ratio = 0.0);

// One flattened, re-L2-normalized descriptor per shift, in shift order.
std::vector<std::vector<float>> expand_descriptors(const GroupedDescriptor& gd,
                                                   const ShiftSet& shifts);

// Channel permutation equivalent to cyclic_shift on the flat descriptor:
// out[i] = in[perm[i]].
std::vector<int> shift_permutation(int s, int g_size, int dim = 128);

}  // namespace remm
