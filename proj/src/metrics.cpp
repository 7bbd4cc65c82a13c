#include "tempograd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tempograd {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw MetricError("auc: scores and labels must have equal length");
  const std::size_t n = scores.size();
  long long n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) throw MetricError("auc: scores must be finite");
    if (labels[i] != 0 && labels[i] != 1) throw MetricError("auc: labels must be 0 or 1");
    n_pos += labels[i];
  }
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("auc: undefined when only one class is present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Doubled tie-averaged ranks stay integral: a tie group spanning ascending
  // positions [i, j] gives each member doubled rank i + j + 2.
  long long rank2_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const long long rank2 = static_cast<long long>(i) + static_cast<long long>(j) + 2;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank2_pos += rank2;
    }
    i = j + 1;
  }

  const long long num = rank2_pos - n_pos * (n_pos + 1);
  const long long den = 2 * n_pos * n_neg;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace tempograd
