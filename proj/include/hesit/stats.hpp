// Rank statistics used by the oracle comparisons: Spearman, Pearson, sign
// agreement and ranking AUC.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hesit {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Fractional ranks (1-based) with ties assigned their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("pearson: need two equally sized vectors of length >= 2");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

// Fraction of positions whose scores have the same strict sign.
inline double sign_agreement(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("sign_agreement: need two equally sized non-empty vectors");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int sa = a[i] > 0.0 ? 1 : (a[i] < 0.0 ? -1 : 0);
    const int sb = b[i] > 0.0 ? 1 : (b[i] < 0.0 ? -1 : 0);
    if (sa == sb) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

// Probability that a positive-labeled score outranks a negative one
// (Mann-Whitney with tie correction).
inline double ranking_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size() || scores.empty())
    throw std::invalid_argument("ranking_auc: size mismatch");
  const std::vector<double> ranks = average_ranks(scores);
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      rank_sum += ranks[i];
      ++npos;
    }
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0)
    throw std::invalid_argument("ranking_auc: need both positive and negative labels");
  const double u = rank_sum - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace hesit
