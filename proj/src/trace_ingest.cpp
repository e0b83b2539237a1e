#include "iotad/trace_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "iotad/error.hpp"

namespace iotad {

namespace {

constexpr std::uint32_t kPcapMagic = 0xa1b2c3d4u;
constexpr std::uint32_t kPcapMagicSwapped = 0xd4c3b2a1u;
constexpr std::uint32_t kPcapMagicNs = 0xa1b23c4du;
constexpr std::uint32_t kPcapMagicNsSwapped = 0x4d3cb2a1u;
constexpr std::uint32_t kLinktypeEthernet = 1;
constexpr std::uint32_t kMaxSnapLen = 262144;

constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
constexpr std::uint16_t kEthertypeIpv6 = 0x86dd;

// On-wire TCP flag bits.
constexpr std::uint8_t kWireFin = 0x01;
constexpr std::uint8_t kWireSyn = 0x02;
constexpr std::uint8_t kWireRst = 0x04;
constexpr std::uint8_t kWirePsh = 0x08;
constexpr std::uint8_t kWireAck = 0x10;
constexpr std::uint8_t kWireUrg = 0x20;

std::uint8_t wire_to_flags(std::uint8_t wire) {
  std::uint8_t f = 0;
  if (wire & kWireSyn) f |= tcp_flag::kSyn;
  if (wire & kWireAck) f |= tcp_flag::kAck;
  if (wire & kWireFin) f |= tcp_flag::kFin;
  if (wire & kWireRst) f |= tcp_flag::kRst;
  if (wire & kWirePsh) f |= tcp_flag::kPsh;
  if (wire & kWireUrg) f |= tcp_flag::kUrg;
  return f;
}

std::uint8_t flags_to_wire(std::uint8_t flags) {
  std::uint8_t w = 0;
  if (flags & tcp_flag::kSyn) w |= kWireSyn;
  if (flags & tcp_flag::kAck) w |= kWireAck;
  if (flags & tcp_flag::kFin) w |= kWireFin;
  if (flags & tcp_flag::kRst) w |= kWireRst;
  if (flags & tcp_flag::kPsh) w |= kWirePsh;
  if (flags & tcp_flag::kUrg) w |= kWireUrg;
  return w;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

struct ByteReader {
  const std::uint8_t* data;
  std::size_t size;
  bool swap;

  std::uint16_t u16_at(std::size_t off) const {
    std::uint16_t v;
    std::memcpy(&v, data + off, 2);
    return swap ? std::uint16_t((v >> 8) | (v << 8)) : v;
  }
  std::uint32_t u32_at(std::size_t off) const {
    std::uint32_t v;
    std::memcpy(&v, data + off, 4);
    return swap ? __builtin_bswap32(v) : v;
  }
};

std::uint16_t be16(const std::uint8_t* p) {
  return std::uint16_t((p[0] << 8) | p[1]);
}
std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void finish_meta(TraceMeta& meta, const std::vector<PacketRecord>& records) {
  meta.record_count = records.size();
  meta.time_span =
      records.empty() ? 0.0 : records.back().ts - records.front().ts;
}

void append_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v >> 8));
  out.push_back(char(v & 0xff));
}
void append_u32(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char(v & 0xff));
}
void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char(v >> 24));
}

std::uint16_t ip_checksum(const std::uint8_t* hdr, std::size_t len) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < len; i += 2) sum += be16(hdr + i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return std::uint16_t(~sum);
}

}  // namespace

IngestResult read_pcap(const std::string& path, TraceMeta& meta) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 24)
    fail(ErrorCode::kMalformedHeader,
         "truncated pcap global header at offset 0");

  std::uint32_t magic;
  std::memcpy(&magic, bytes.data(), 4);
  bool swap = false;
  if (magic == kPcapMagic) {
    swap = false;
  } else if (magic == kPcapMagicSwapped) {
    swap = true;
  } else if (magic == kPcapMagicNs || magic == kPcapMagicNsSwapped) {
    fail(ErrorCode::kUnsupportedLinktype,
         "nanosecond pcap timestamps are not supported");
  } else {
    fail(ErrorCode::kMalformedHeader, "not a classic pcap file (bad magic)");
  }

  ByteReader rd{bytes.data(), bytes.size(), swap};
  const std::uint32_t linktype = rd.u32_at(20);
  if (linktype != kLinktypeEthernet)
    fail(ErrorCode::kUnsupportedLinktype,
         "unsupported link type " + std::to_string(linktype) +
             " (only Ethernet/1)");

  IngestResult result;
  std::size_t off = 24;
  while (off < bytes.size()) {
    if (off + 16 > bytes.size())
      fail(ErrorCode::kMalformedHeader,
           "truncated packet header at offset " + std::to_string(off));
    const std::uint32_t ts_sec = rd.u32_at(off);
    const std::uint32_t ts_usec = rd.u32_at(off + 4);
    const std::uint32_t incl_len = rd.u32_at(off + 8);
    const std::uint32_t orig_len = rd.u32_at(off + 12);
    if (incl_len > kMaxSnapLen)
      fail(ErrorCode::kMalformedHeader,
           "implausible captured length at offset " + std::to_string(off));
    if (off + 16 + incl_len > bytes.size())
      fail(ErrorCode::kMalformedHeader,
           "truncated packet data at offset " + std::to_string(off));

    const std::uint8_t* pkt = bytes.data() + off + 16;
    off += 16 + incl_len;

    if (incl_len < 14 + 20) {
      result.skipped.truncated++;
      continue;
    }
    const std::uint16_t ethertype = be16(pkt + 12);
    if (ethertype == kEthertypeIpv6) {
      result.skipped.ipv6++;
      continue;
    }
    if (ethertype != kEthertypeIpv4) {
      result.skipped.non_ip++;
      continue;
    }
    const std::uint8_t* ip = pkt + 14;
    if ((ip[0] >> 4) != 4) {
      result.skipped.non_ip++;
      continue;
    }
    const std::size_t ihl = std::size_t(ip[0] & 0x0f) * 4;
    if (ihl < 20 || 14 + ihl > incl_len) {
      result.skipped.truncated++;
      continue;
    }

    PacketRecord rec;
    rec.ts = double(ts_sec) + double(ts_usec) * 1e-6;
    rec.src_addr = Ipv4Addr{be32(ip + 12)};
    rec.dst_addr = Ipv4Addr{be32(ip + 16)};
    rec.length = std::max<std::uint32_t>(orig_len, 1);

    const std::uint8_t ip_proto = ip[9];
    const std::uint8_t* l4 = ip + ihl;
    const std::size_t l4_avail = incl_len - 14 - ihl;
    if (ip_proto == 6) {
      if (l4_avail < 20) {
        result.skipped.truncated++;
        continue;
      }
      rec.proto = Proto::kTcp;
      rec.src_port = be16(l4);
      rec.dst_port = be16(l4 + 2);
      rec.tcp_flags = wire_to_flags(l4[13]);
    } else if (ip_proto == 17) {
      if (l4_avail < 8) {
        result.skipped.truncated++;
        continue;
      }
      rec.proto = Proto::kUdp;
      rec.src_port = be16(l4);
      rec.dst_port = be16(l4 + 2);
    } else {
      rec.proto = Proto::kOther;
    }

    auto dir = classify_direction(rec.src_addr, rec.dst_addr, meta);
    if (!dir) {
      result.skipped.unmapped++;
      continue;
    }
    rec.direction = *dir;
    result.records.push_back(rec);
  }

  finish_meta(meta, result.records);
  return result;
}

IngestResult read_jsonl(const std::string& path, TraceMeta& meta) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path);

  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kParseError,
           "bad JSON on line " + std::to_string(line_no));
    }
    for (const char* key :
         {"ts", "src", "dst", "sport", "dport", "proto", "len", "flags"}) {
      if (!obj.contains(key))
        fail(ErrorCode::kMissingField, std::string("missing field '") + key +
                                           "' on line " +
                                           std::to_string(line_no));
    }

    const auto bad = [&](const std::string& what) -> void {
      fail(ErrorCode::kParseError,
           what + " on line " + std::to_string(line_no));
    };

    PacketRecord rec;
    if (!obj["ts"].is_number()) bad("'ts' must be a number");
    rec.ts = obj["ts"].get<double>();

    auto src = parse_ipv4(obj["src"].get<std::string>());
    auto dst = parse_ipv4(obj["dst"].get<std::string>());
    if (!src) bad("'src' is not a dotted-quad address");
    if (!dst) bad("'dst' is not a dotted-quad address");
    rec.src_addr = *src;
    rec.dst_addr = *dst;

    const auto port = [&](const char* key) -> std::uint16_t {
      if (!obj[key].is_number_integer()) bad(std::string(key) + " not integer");
      const std::int64_t v = obj[key].get<std::int64_t>();
      if (v < 0 || v > 65535) bad(std::string(key) + " out of range");
      return std::uint16_t(v);
    };
    rec.src_port = port("sport");
    rec.dst_port = port("dport");

    const std::string proto = obj["proto"].get<std::string>();
    if (proto == "TCP") {
      rec.proto = Proto::kTcp;
    } else if (proto == "UDP") {
      rec.proto = Proto::kUdp;
    } else if (proto == "OTHER") {
      rec.proto = Proto::kOther;
    } else {
      bad("unknown proto '" + proto + "'");
    }

    const std::int64_t len = obj["len"].get<std::int64_t>();
    if (len < 1) bad("'len' must be >= 1");
    rec.length = std::uint32_t(len);

    auto flags = flags_from_string(obj["flags"].get<std::string>());
    if (!flags) bad("'flags' must be a subset of SAFRPU");
    if (*flags != 0 && rec.proto != Proto::kTcp)
      bad("flags set on non-TCP record");
    rec.tcp_flags = *flags;

    auto dir = classify_direction(rec.src_addr, rec.dst_addr, meta);
    if (!dir) {
      result.skipped.unmapped++;
      continue;
    }
    rec.direction = *dir;
    result.records.push_back(rec);
  }

  finish_meta(meta, result.records);
  return result;
}

std::string jsonl_line(const PacketRecord& rec) {
  nlohmann::ordered_json obj;
  obj["ts"] = rec.ts;
  obj["src"] = to_string(rec.src_addr);
  obj["dst"] = to_string(rec.dst_addr);
  obj["sport"] = rec.src_port;
  obj["dport"] = rec.dst_port;
  obj["proto"] = to_string(rec.proto);
  obj["len"] = rec.length;
  obj["flags"] = flags_to_string(rec.tcp_flags);
  return obj.dump();
}

void write_jsonl(const std::string& path,
                 const std::vector<PacketRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& rec : records) out << jsonl_line(rec) << '\n';
}

void write_pcap(const std::string& path,
                const std::vector<PacketRecord>& records) {
  std::string out;
  out.reserve(24 + records.size() * 128);

  append_u32le(out, kPcapMagic);
  append_u32le(out, 2u | (4u << 16));  // version 2.4 (major LE16, minor LE16)
  append_u32le(out, 0);                // thiszone
  append_u32le(out, 0);                // sigfigs
  append_u32le(out, kMaxSnapLen);      // snaplen
  append_u32le(out, kLinktypeEthernet);

  for (const auto& rec : records) {
    const std::size_t l4_size = rec.proto == Proto::kTcp   ? 20
                                : rec.proto == Proto::kUdp ? 8
                                                           : 0;
    const std::size_t min_len = 14 + 20 + l4_size;
    if (rec.length < min_len)
      fail(ErrorCode::kInvalidArgument,
           "record length " + std::to_string(rec.length) +
               " cannot hold the synthesized headers (need >= " +
               std::to_string(min_len) + ")");

    double sec_part;
    double frac = std::modf(rec.ts, &sec_part);
    std::uint32_t ts_sec = std::uint32_t(sec_part);
    std::uint32_t ts_usec = std::uint32_t(std::llround(frac * 1e6));
    if (ts_usec >= 1000000) {
      ts_sec += 1;
      ts_usec -= 1000000;
    }

    append_u32le(out, ts_sec);
    append_u32le(out, ts_usec);
    append_u32le(out, rec.length);  // incl_len: full frame written
    append_u32le(out, rec.length);  // orig_len

    // Ethernet: synthetic locally-administered MACs derived from the IPs.
    const auto mac = [&](Ipv4Addr a) {
      out.push_back(0x02);
      out.push_back(0x00);
      out.push_back(char((a.value >> 24) & 0xff));
      out.push_back(char((a.value >> 16) & 0xff));
      out.push_back(char((a.value >> 8) & 0xff));
      out.push_back(char(a.value & 0xff));
    };
    mac(rec.dst_addr);
    mac(rec.src_addr);
    append_u16(out, kEthertypeIpv4);

    // IPv4
    const std::size_t ip_off = out.size();
    const std::uint16_t ip_total = std::uint16_t(rec.length - 14);
    out.push_back(0x45);
    out.push_back(0x00);
    append_u16(out, ip_total);
    append_u16(out, 0);       // id
    append_u16(out, 0x4000);  // DF, no fragmentation
    out.push_back(64);        // ttl
    out.push_back(rec.proto == Proto::kTcp   ? 6
                  : rec.proto == Proto::kUdp ? 17
                                             : 253);
    append_u16(out, 0);  // checksum placeholder
    append_u32(out, rec.src_addr.value);
    append_u32(out, rec.dst_addr.value);
    const std::uint16_t cksum =
        ip_checksum(reinterpret_cast<const std::uint8_t*>(out.data() + ip_off),
                    20);
    out[ip_off + 10] = char(cksum >> 8);
    out[ip_off + 11] = char(cksum & 0xff);

    if (rec.proto == Proto::kTcp) {
      append_u16(out, rec.src_port);
      append_u16(out, rec.dst_port);
      append_u32(out, 0);  // seq
      append_u32(out, 0);  // ack
      out.push_back(char(5 << 4));
      out.push_back(char(flags_to_wire(rec.tcp_flags)));
      append_u16(out, 65535);
      append_u16(out, 0);  // checksum (not verified by the reader)
      append_u16(out, 0);  // urgent pointer
    } else if (rec.proto == Proto::kUdp) {
      append_u16(out, rec.src_port);
      append_u16(out, rec.dst_port);
      append_u16(out, std::uint16_t(ip_total - 20));
      append_u16(out, 0);
    }

    out.append(rec.length - min_len, '\0');
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIoError, "cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
}

std::vector<PacketRecord> sort_stable_by_time(
    std::vector<PacketRecord> records) {
  std::stable_sort(
      records.begin(), records.end(),
      [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
  return records;
}

}  // namespace iotad
