#pragma once

#include <cstddef>
#include <vector>

namespace chardec {

// Pearson correlation; zero variance on either side returns 0.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Cosine similarity clamped to [-1, 1]; zero-norm sides score 0 and
// bitwise-identical vectors score exactly 1.
double cosine(const double* a, const double* b, std::size_t n);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& v);

double mean(const std::vector<double>& v);

}  // namespace chardec
