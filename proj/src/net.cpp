#include "iotad/net.hpp"

#include <charconv>

namespace iotad {

std::optional<Ipv4Addr> parse_ipv4(const std::string& dotted) {
  std::uint32_t value = 0;
  const char* p = dotted.data();
  const char* end = p + dotted.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || v > 255 || next == p) return std::nullopt;
    value = (value << 8) | v;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4Addr{value};
}

std::string to_string(Ipv4Addr addr) {
  std::string out;
  out.reserve(15);
  for (int shift = 24; shift >= 0; shift -= 8) {
    out += std::to_string((addr.value >> shift) & 0xff);
    if (shift > 0) out += '.';
  }
  return out;
}

}  // namespace iotad
