#pragma once

namespace topopt {

/// Number of worker threads used by the data-parallel kernels (matvec,
/// element loops). Results do not depend on this value.
void set_num_threads(int n);
int num_threads();

} // namespace topopt
