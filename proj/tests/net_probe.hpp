#pragma once

#include <cstdint>

namespace testsupport {

// Outbound connect() calls made by this process; the test executables
// interpose the libc symbol to count them.
std::uint64_t socket_connects();

}  // namespace testsupport
