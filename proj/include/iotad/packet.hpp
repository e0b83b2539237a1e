#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "iotad/net.hpp"

namespace iotad {

enum class Proto : std::uint8_t { kTcp, kUdp, kOther };

// TCP flag bits, subset relevant to event fingerprinting.
namespace tcp_flag {
inline constexpr std::uint8_t kSyn = 0x01;
inline constexpr std::uint8_t kAck = 0x02;
inline constexpr std::uint8_t kFin = 0x04;
inline constexpr std::uint8_t kRst = 0x08;
inline constexpr std::uint8_t kPsh = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
}  // namespace tcp_flag

enum class Direction : std::uint8_t {
  kDeviceToController,
  kControllerToDevice,
  kDeviceToExternal,
  kExternalToDevice,
};

const char* to_string(Direction dir);
const char* to_string(Proto proto);

// One captured packet's L2-L4 header summary. Timestamps are seconds since
// the capture epoch with microsecond resolution.
struct PacketRecord {
  double ts = 0.0;
  Ipv4Addr src_addr;
  Ipv4Addr dst_addr;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Proto proto = Proto::kOther;
  std::uint32_t length = 0;
  std::uint8_t tcp_flags = 0;  // empty for non-TCP
  Direction direction = Direction::kDeviceToController;
};

// Controller address plus the address -> device-id map for one environment.
struct TraceMeta {
  Ipv4Addr controller_addr;
  std::map<Ipv4Addr, std::string> device_map;
  std::size_t record_count = 0;
  double time_span = 0.0;
};

// Classifies a (src, dst) pair relative to the controller and device map.
// Returns nullopt when neither endpoint is the controller or a known device.
std::optional<Direction> classify_direction(Ipv4Addr src, Ipv4Addr dst,
                                            const TraceMeta& meta);

// Device a record belongs to (the non-controller endpoint), or nullopt for
// controller<->external traffic.
std::optional<std::string> record_device(const PacketRecord& rec,
                                         const TraceMeta& meta);

// Canonical flag string over "SAFRPU"; "" for flagless records.
std::string flags_to_string(std::uint8_t flags);
std::optional<std::uint8_t> flags_from_string(const std::string& s);

}  // namespace iotad
