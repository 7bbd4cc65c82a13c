#pragma once

#include <vector>

#include "tempograd/errors.hpp"

namespace tempograd {

// Area under the ROC curve, computed from tie-averaged ranks. All integer
// arithmetic until one final division, so the result is exactly the pair
// counting value: (wins + ties/2) / (positives * negatives).
// Throws MetricError unless both classes are present; labels must be 0 or 1
// and scores finite.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace tempograd
