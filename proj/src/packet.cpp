#include "iotad/packet.hpp"

namespace iotad {

const char* to_string(Direction dir) {
  switch (dir) {
    case Direction::kDeviceToController: return "DEVICE_TO_CONTROLLER";
    case Direction::kControllerToDevice: return "CONTROLLER_TO_DEVICE";
    case Direction::kDeviceToExternal: return "DEVICE_TO_EXTERNAL";
    case Direction::kExternalToDevice: return "EXTERNAL_TO_DEVICE";
  }
  return "?";
}

const char* to_string(Proto proto) {
  switch (proto) {
    case Proto::kTcp: return "TCP";
    case Proto::kUdp: return "UDP";
    case Proto::kOther: return "OTHER";
  }
  return "?";
}

std::optional<Direction> classify_direction(Ipv4Addr src, Ipv4Addr dst,
                                            const TraceMeta& meta) {
  if (src == meta.controller_addr) return Direction::kControllerToDevice;
  if (dst == meta.controller_addr) return Direction::kDeviceToController;
  const bool src_known = meta.device_map.count(src) > 0;
  const bool dst_known = meta.device_map.count(dst) > 0;
  if (src_known) return Direction::kDeviceToExternal;
  if (dst_known) return Direction::kExternalToDevice;
  return std::nullopt;
}

std::optional<std::string> record_device(const PacketRecord& rec,
                                         const TraceMeta& meta) {
  const Ipv4Addr side = (rec.direction == Direction::kDeviceToController ||
                         rec.direction == Direction::kDeviceToExternal)
                            ? rec.src_addr
                            : rec.dst_addr;
  auto it = meta.device_map.find(side);
  if (it == meta.device_map.end()) return std::nullopt;
  return it->second;
}

std::string flags_to_string(std::uint8_t flags) {
  std::string out;
  if (flags & tcp_flag::kSyn) out += 'S';
  if (flags & tcp_flag::kAck) out += 'A';
  if (flags & tcp_flag::kFin) out += 'F';
  if (flags & tcp_flag::kRst) out += 'R';
  if (flags & tcp_flag::kPsh) out += 'P';
  if (flags & tcp_flag::kUrg) out += 'U';
  return out;
}

std::optional<std::uint8_t> flags_from_string(const std::string& s) {
  std::uint8_t flags = 0;
  for (char c : s) {
    switch (c) {
      case 'S': flags |= tcp_flag::kSyn; break;
      case 'A': flags |= tcp_flag::kAck; break;
      case 'F': flags |= tcp_flag::kFin; break;
      case 'R': flags |= tcp_flag::kRst; break;
      case 'P': flags |= tcp_flag::kPsh; break;
      case 'U': flags |= tcp_flag::kUrg; break;
      default: return std::nullopt;
    }
  }
  return flags;
}

}  // namespace iotad
