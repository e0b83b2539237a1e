#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iotad/packet.hpp"

namespace iotad {

// Frames a reader had to drop, kept for reporting.
struct SkipCounters {
  std::size_t non_ip = 0;     // non-IPv4 ethertype
  std::size_t ipv6 = 0;       // IPv6 frames (counted separately)
  std::size_t truncated = 0;  // snaplen cut into the L3/L4 headers
  std::size_t unmapped = 0;   // neither endpoint known

  std::size_t total() const { return non_ip + ipv6 + truncated + unmapped; }
};

struct IngestResult {
  std::vector<PacketRecord> records;
  SkipCounters skipped;
};

// Classic pcap only (magic 0xA1B2C3D4 / byte-swapped), Ethernet link type,
// IPv4. Updates meta.record_count and meta.time_span.
IngestResult read_pcap(const std::string& path, TraceMeta& meta);

// Canonical JSONL record stream; one object per line with keys
// ts, src, dst, sport, dport, proto, len, flags.
IngestResult read_jsonl(const std::string& path, TraceMeta& meta);

void write_jsonl(const std::string& path,
                 const std::vector<PacketRecord>& records);
std::string jsonl_line(const PacketRecord& rec);

// Synthesizes a classic little-endian pcap (Ethernet/IPv4/TCP-or-UDP) from
// records. record.length is the on-wire frame length and must cover the
// headers (54 bytes TCP, 42 UDP).
void write_pcap(const std::string& path,
                const std::vector<PacketRecord>& records);

// Stable by timestamp: equal-ts records keep input order.
std::vector<PacketRecord> sort_stable_by_time(std::vector<PacketRecord> records);

}  // namespace iotad
