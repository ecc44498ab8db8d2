#pragma once

#include <cstddef>
#include <functional>

namespace satfields {

// Process-wide worker count. 1 disables the pool entirely (work runs inline
// on the caller), which is the mode all byte-reproducibility guarantees are
// stated for. Values > 1 still give deterministic results for ops whose
// output elements are computed independently per thread.
void set_num_threads(int n);
int num_threads();

// Splits [0, total) into one contiguous chunk per worker and runs fn(begin,
// end) on each. Chunk boundaries depend only on (total, num_threads), never
// on scheduling, so element-wise kernels stay bitwise deterministic.
void parallel_for(std::size_t total, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace satfields
