#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

// Fraction of differing positions over the common prefix length; 0 for two
// empty sequences.
double hamming(std::span<const TokenId> a, std::span<const TokenId> b);

// Cosine between token-count vectors over the vocabulary; 0 if either is
// all zero.
double cosine(std::span<const TokenId> a, std::span<const TokenId> b);

// Sentence BLEU with clipped n-gram precisions and uniform weights over
// orders 1..max_n. An order n >= 2 with no matches counts as
// 1 / (total_n + 1), which is 1 when the candidate has no n-grams of that
// order. Brevity penalty exp(1 - |ref|/|cand|) when the
// candidate is shorter.
double bleu(std::span<const TokenId> candidate, std::span<const TokenId> reference, std::size_t max_n = 4);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

Summary summarize(std::span<const double> values);

// "0.123 ± 0.045"
std::string format_summary(const Summary& s, int precision = 3);

}  // namespace pixelbytes
