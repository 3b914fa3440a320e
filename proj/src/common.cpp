/* Copyright 2026-present the dnp authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dnp/common.hpp"

#include <chrono>
#include <cstdio>

namespace dnp {

const char* errc_name(Errc e) {
  switch (e) {
    case Errc::ok: return "ok";
    case Errc::truncated: return "Truncated";
    case Errc::bad_version: return "BadVersion";
    case Errc::bad_length: return "BadLength";
    case Errc::unknown_type: return "UnknownType";
    case Errc::unsupported: return "Unsupported";
    case Errc::session_closed: return "SessionClosed";
    case Errc::xid_timeout: return "XidTimeout";
    case Errc::no_such_table: return "NoSuchTable";
    case Errc::key_width_mismatch: return "KeyWidthMismatch";
    case Errc::duplicate_table_id: return "DuplicateTableId";
    case Errc::invalid_position: return "InvalidPosition";
    case Errc::duplicate_entry: return "DuplicateEntry";
    case Errc::no_such_entry: return "NoSuchEntry";
    case Errc::dangling_action_ptr: return "DanglingActionPtr";
    case Errc::malformed_packet: return "MalformedPacket";
    case Errc::stage_limit_exceeded: return "StageLimitExceeded";
    case Errc::no_such_port: return "NoSuchPort";
    case Errc::validation_failed: return "ValidationFailed";
    case Errc::slot_in_use: return "SlotInUse";
    case Errc::no_such_slot: return "NoSuchSlot";
    case Errc::block_not_loaded: return "BlockNotLoaded";
    case Errc::backward_branch: return "BackwardBranch";
    case Errc::undeclared_resource: return "UndeclaredResource";
    case Errc::packet_write_in_passive_mode: return "PacketWriteInPassiveMode";
    case Errc::block_too_long: return "BlockTooLong";
    case Errc::unallocated_resource: return "UnallocatedResource";
    case Errc::packet_field_on_timer_context: return "PacketFieldOnTimerContext";
    case Errc::pool_exhausted: return "PoolExhausted";
    case Errc::handle_in_use: return "HandleInUse";
    case Errc::no_such_handle: return "NoSuchHandle";
    case Errc::table_full: return "TableFull";
    case Errc::no_such_timer: return "NoSuchTimer";
    case Errc::action_needs_packet: return "ActionNeedsPacket";
    case Errc::incompatible_attach_point: return "IncompatibleAttachPoint";
    case Errc::no_covering_behavior: return "NoCoveringBehavior";
    case Errc::admission_rejected: return "AdmissionRejected";
    case Errc::commit_failed: return "CommitFailed";
    case Errc::no_such_probe: return "NoSuchProbe";
    case Errc::has_subscribers: return "HasSubscribers";
    case Errc::revoke_conflict: return "RevokeConflict";
    case Errc::unresolved_selector: return "UnresolvedSelector";
    case Errc::unsupported_kind: return "UnsupportedKind";
    case Errc::no_such_query: return "NoSuchQuery";
    case Errc::deploy_failed: return "DeployFailed";
    case Errc::script_error: return "ScriptError";
    case Errc::seed_mismatch: return "SeedMismatch";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

std::string FieldRef::to_string() const {
  const char* sp = space == FieldSpace::packet    ? "pkt"
                   : space == FieldSpace::metadata ? "md"
                                                   : "reg";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s[%u:%u]", sp, offset_bits, length_bits);
  return buf;
}

bool FieldRef::parse(const std::string& text, FieldRef* out) {
  size_t lb = text.find('[');
  size_t co = text.find(':', lb == std::string::npos ? 0 : lb);
  size_t rb = text.find(']');
  if (lb == std::string::npos || co == std::string::npos ||
      rb == std::string::npos || !(lb < co && co < rb)) {
    return false;
  }
  std::string sp = text.substr(0, lb);
  FieldRef r;
  if (sp == "pkt") {
    r.space = FieldSpace::packet;
  } else if (sp == "md") {
    r.space = FieldSpace::metadata;
  } else if (sp == "reg") {
    r.space = FieldSpace::reg;
  } else {
    return false;
  }
  try {
    r.offset_bits = std::stoul(text.substr(lb + 1, co - lb - 1));
    r.length_bits = std::stoul(text.substr(co + 1, rb - co - 1));
  } catch (...) {
    return false;
  }
  if (out) *out = r;
  return true;
}

namespace {

inline int bit_at(ByteView data, size_t bit) {
  size_t byte = bit >> 3;
  if (byte >= data.size()) return 0;
  return (data[byte] >> (7 - (bit & 7))) & 1;
}

inline void set_bit(std::span<uint8_t> data, size_t bit, int v) {
  size_t byte = bit >> 3;
  if (byte >= data.size()) return;
  uint8_t mask = static_cast<uint8_t>(1u << (7 - (bit & 7)));
  if (v) {
    data[byte] |= mask;
  } else {
    data[byte] &= static_cast<uint8_t>(~mask);
  }
}

}  // namespace

uint64_t read_bits_u64(ByteView data, size_t offset_bits, size_t length_bits) {
  uint64_t v = 0;
  for (size_t i = 0; i < length_bits && i < 64; ++i) {
    v = (v << 1) | static_cast<uint64_t>(bit_at(data, offset_bits + i));
  }
  return v;
}

void write_bits_u64(std::span<uint8_t> data, size_t offset_bits,
                    size_t length_bits, uint64_t value) {
  if (length_bits > 64) length_bits = 64;
  for (size_t i = 0; i < length_bits; ++i) {
    int bit = static_cast<int>((value >> (length_bits - 1 - i)) & 1);
    set_bit(data, offset_bits + i, bit);
  }
}

void copy_bits(std::span<uint8_t> dst, size_t dst_off, ByteView src,
               size_t src_off, size_t length_bits) {
  for (size_t i = 0; i < length_bits; ++i) {
    set_bit(dst, dst_off + i, bit_at(src, src_off + i));
  }
}

Bytes extract_bits(ByteView data, size_t offset_bits, size_t length_bits) {
  Bytes out((length_bits + 7) / 8, 0);
  copy_bits(out, 0, data, offset_bits, length_bits);
  return out;
}

bool ternary_match(ByteView key, ByteView value, ByteView mask) {
  if (key.size() != value.size() || key.size() != mask.size()) return false;
  for (size_t i = 0; i < key.size(); ++i) {
    if ((key[i] & mask[i]) != value[i]) return false;
  }
  return true;
}

std::string to_hex(ByteView data) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (uint8_t b : data) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

bool from_hex(const std::string& hex, Bytes* out) {
  std::string h = hex;
  if (h.rfind("0x", 0) == 0 || h.rfind("0X", 0) == 0) h = h.substr(2);
  if (h.size() % 2) h = "0" + h;
  Bytes b;
  b.reserve(h.size() / 2);
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (size_t i = 0; i + 1 < h.size() + 1 && i < h.size(); i += 2) {
    int hi = nib(h[i]), lo = nib(h[i + 1]);
    if (hi < 0 || lo < 0) return false;
    b.push_back(static_cast<uint8_t>((hi << 4) | lo));
  }
  if (out) *out = std::move(b);
  return true;
}

uint64_t WallClock::now_ns() const {
  return static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

}  // namespace dnp
