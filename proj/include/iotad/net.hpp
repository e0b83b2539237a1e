#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace iotad {

// IPv4 address held in host byte order.
struct Ipv4Addr {
  std::uint32_t value = 0;

  auto operator<=>(const Ipv4Addr&) const = default;
};

std::optional<Ipv4Addr> parse_ipv4(const std::string& dotted);
std::string to_string(Ipv4Addr addr);

}  // namespace iotad
