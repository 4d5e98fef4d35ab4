#include "cohere/hungarian.hpp"

#include "cohere/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cohere {

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  for (const auto& row : rows) {
    if (row.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged cost matrix");
    data_.insert(data_.end(), row.begin(), row.end());
  }
  real_rows_ = rows_;
  real_cols_ = cols_;
}

void CostMatrix::pad_to_square(double pad) {
  const std::size_t n = std::max(rows_, cols_);
  std::vector<double> grown(n * n, pad);
  for (std::size_t r = 0; r < rows_; ++r) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_), cols_,
                grown.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  data_ = std::move(grown);
  rows_ = cols_ = n;
}

Assignment hungarian(const CostMatrix& cost) {
  if (!cost.square()) {
    throw Error(ErrorKind::ShapeMismatch, "cost matrix is " + std::to_string(cost.rows()) + "x" +
                                              std::to_string(cost.cols()) + ", expected square");
  }
  const std::size_t n = cost.rows();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = cost(r, c);
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::InvalidConfig, "cost entries must be finite and >= 0");
    }
  }

  Assignment out;
  out.row_to_col.assign(n, -1);
  if (n == 0) return out;

  // 1-based arrays; column 0 is the virtual start of each augmenting path.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t row0 = match[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double reduced = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (reduced < minv[col]) {
          minv[col] = reduced;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= n; ++col) {
        if (used[col]) {
          u[match[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  for (std::size_t col = 1; col <= n; ++col) out.row_to_col[match[col] - 1] = static_cast<int>(col - 1);
  for (std::size_t r = 0; r < n; ++r) out.total_cost += cost(r, static_cast<std::size_t>(out.row_to_col[r]));
  return out;
}

}  // namespace cohere
