#include "sheafnet/block_sparse.hpp"

namespace sheafnet {

bool BlockSparseOperator::is_symmetric_exact() const {
  for (int i = 0; i < n_blocks; ++i) {
    for (int s = row_ptr[i]; s < row_ptr[i + 1]; ++s) {
      const int j = col_idx[s];
      const int t = find_slot(j, i);
      if (t < 0) return false;
      const double* a = block(s);
      const double* b = block(t);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          if (a[r * d + c] != b[c * d + r]) return false;
    }
  }
  return true;
}

}  // namespace sheafnet
