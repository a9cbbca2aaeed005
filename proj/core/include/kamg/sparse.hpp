#pragma once

#include <cstdint>
#include <vector>

#include "kamg/tensor.hpp"

namespace kamg {

// CSR matrix used for constant graph operators (GCN propagation, token-set
// averaging). Values never require gradients; only the dense operand does.
struct SparseMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int64_t> row_ptr;  // rows + 1 entries
  std::vector<int64_t> col;
  std::vector<double> val;

  struct Triplet {
    int64_t row;
    int64_t col;
    double value;
  };

  // Duplicate (row, col) entries are summed. Triplets are canonicalised to
  // (row, col) order so construction is independent of input ordering.
  static SparseMatrix from_triplets(int64_t rows, int64_t cols, std::vector<Triplet> triplets);

  SparseMatrix transposed() const;

  // y = this * x, x dense [cols, d] -> y [rows, d].
  Tensor matmul(const Tensor& x) const;

  int64_t nnz() const { return static_cast<int64_t>(val.size()); }
};

}  // namespace kamg
