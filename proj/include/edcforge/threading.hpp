#pragma once

namespace edcforge {

// Resolves a worker count: explicit request > EDCFORGE_THREADS env var >
// hardware default. Always >= 1. Results of every parallel operation in this
// project are independent of the value returned here.
int resolve_threads(int requested);

// Maximum worker count the runtime offers (1 when built without OpenMP).
int max_threads();

} // namespace edcforge
