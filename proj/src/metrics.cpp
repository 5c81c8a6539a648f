#include "pixelbytes/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <vector>

namespace pixelbytes {

double hamming(std::span<const TokenId> a, std::span<const TokenId> b) {
  const std::size_t n = std::min(a.size(), b.size());
  if (n == 0) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < n; ++i) diff += a[i] != b[i] ? 1 : 0;
  return static_cast<double>(diff) / static_cast<double>(n);
}

double cosine(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<double> ca(vocab::kSize, 0.0), cb(vocab::kSize, 0.0);
  for (TokenId id : a) {
    if (id >= vocab::kSize) throw std::invalid_argument("cosine: token id out of range");
    ca[id] += 1.0;
  }
  for (TokenId id : b) {
    if (id >= vocab::kSize) throw std::invalid_argument("cosine: token id out of range");
    cb[id] += 1.0;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < vocab::kSize; ++i) {
    dot += ca[i] * cb[i];
    na += ca[i] * ca[i];
    nb += cb[i] * cb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

using Gram = std::vector<TokenId>;

std::map<Gram, std::size_t> ngram_counts(std::span<const TokenId> s, std::size_t n) {
  std::map<Gram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Gram(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                              s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

double bleu(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t max_n) {
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be positive");
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t orders = max_n;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    double p = 0.0;
    if (matched > 0) {
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else if (n == 1) {
      return 0.0;
    } else {
      p = 1.0 / static_cast<double>(total + 1);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

std::string format_summary(const Summary& s, int precision) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", precision, s.mean, precision, s.std);
  return buf;
}

}  // namespace pixelbytes
