#pragma once

#include <string>
#include <vector>

#include "remm/geometry.hpp"
#include "remm/image.hpp"
#include "remm/pipeline.hpp"

namespace remm {

// Side-by-side visualization: green lines for matches whose residual under
// the ground-truth transform is below 3 px, red dots for the rest.
void plot_matches(const ImageF& img_a, const ImageF& img_b,
                  const std::vector<MatchRow>& matches, const Homography& gt,
                  const std::string& out_path);

}  // namespace remm
