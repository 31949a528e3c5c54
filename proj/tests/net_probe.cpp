#include "net_probe.hpp"

#include <dlfcn.h>
#include <sys/socket.h>

#include <atomic>

namespace {
std::atomic<std::uint64_t> g_connects{0};
}

namespace testsupport {
std::uint64_t socket_connects() { return g_connects.load(); }
}  // namespace testsupport

extern "C" int connect(int fd, const struct sockaddr* addr, socklen_t len) {
  using Fn = int (*)(int, const struct sockaddr*, socklen_t);
  static const Fn real = reinterpret_cast<Fn>(dlsym(RTLD_NEXT, "connect"));
  ++g_connects;
  return real(fd, addr, len);
}
