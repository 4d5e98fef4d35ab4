#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace cohere {

/// Dense row-major cost matrix. `real_rows`/`real_cols` record how much of
/// the matrix holds real entries; the rest is padding.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), real_rows_(rows), real_cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t real_rows() const { return real_rows_; }
  std::size_t real_cols() const { return real_cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  /// Grows to n x n (n = max(rows, cols)) filling new cells with `pad`.
  void pad_to_square(double pad);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t real_rows_ = 0;
  std::size_t real_cols_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<int> row_to_col;
  double total_cost = 0.0;  // summed in row order from the matrix entries
};

/// Minimum-cost perfect assignment, O(n^3) shortest augmenting paths with
/// potentials. Requires a square, finite, non-negative matrix.
Assignment hungarian(const CostMatrix& cost);

}  // namespace cohere
