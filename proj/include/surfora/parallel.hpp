#pragma once

namespace surfora {

/// Sets the worker count used by every parallel kernel. Results never depend on it.
void set_num_threads(int n);
int num_threads();

/// Thread count from SURFORA_THREADS, or the hardware default when unset.
int default_num_threads();

}  // namespace surfora
