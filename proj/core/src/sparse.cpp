#include "kamg/sparse.hpp"

#include <algorithm>

#include "kamg/errors.hpp"

namespace kamg {

SparseMatrix SparseMatrix::from_triplets(int64_t rows, int64_t cols,
                                         std::vector<Triplet> triplets) {
  for (const Triplet& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw ContractError("sparse triplet (" + std::to_string(t.row) + "," +
                          std::to_string(t.col) + ") outside " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(static_cast<size_t>(rows) + 1, 0);
  for (size_t i = 0; i < triplets.size();) {
    size_t j = i;
    double sum = 0.0;
    while (j < triplets.size() && triplets[j].row == triplets[i].row &&
           triplets[j].col == triplets[i].col) {
      sum += triplets[j].value;
      ++j;
    }
    m.col.push_back(triplets[i].col);
    m.val.push_back(sum);
    m.row_ptr[static_cast<size_t>(triplets[i].row) + 1]++;
    i = j;
  }
  for (int64_t r = 0; r < rows; ++r) m.row_ptr[static_cast<size_t>(r) + 1] += m.row_ptr[static_cast<size_t>(r)];
  return m;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<Triplet> t;
  t.reserve(val.size());
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t k = row_ptr[static_cast<size_t>(r)]; k < row_ptr[static_cast<size_t>(r) + 1]; ++k) {
      t.push_back({col[static_cast<size_t>(k)], r, val[static_cast<size_t>(k)]});
    }
  }
  return from_triplets(cols, rows, std::move(t));
}

Tensor SparseMatrix::matmul(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(0) != cols) {
    throw ContractError("spmm shape mismatch: " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " * " + shape_str(x));
  }
  const int64_t d = x.dim(1);
  Tensor y({rows, d});
  for (int64_t r = 0; r < rows; ++r) {
    double* out = y.data() + r * d;
    for (int64_t k = row_ptr[static_cast<size_t>(r)]; k < row_ptr[static_cast<size_t>(r) + 1]; ++k) {
      const double w = val[static_cast<size_t>(k)];
      const double* in = x.data() + col[static_cast<size_t>(k)] * d;
      for (int64_t j = 0; j < d; ++j) out[j] += w * in[j];
    }
  }
  return y;
}

}  // namespace kamg
