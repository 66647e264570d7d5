#pragma once

#include <cstdint>

namespace skms {

// Per-flow message and latency accounting. Counters only ever increase
// within a flow.
struct CallMeter {
    uint64_t node_fetches = 0;
    uint64_t server_calls = 0;
    double latency_ms = 0.0;

    void reset() { *this = CallMeter{}; }
};

}  // namespace skms
