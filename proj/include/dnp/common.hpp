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

#ifndef DNP_COMMON_HPP_
#define DNP_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dnp {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

// Error codes shared by the core API, the wire protocol ERROR message and
// the C API. Values are stable; see include/dnp.h.
enum class Errc : uint16_t {
  ok = 0,

  // codec / session
  truncated = 1,
  bad_version = 2,
  bad_length = 3,
  unknown_type = 4,
  unsupported = 5,
  session_closed = 6,
  xid_timeout = 7,

  // pipeline
  no_such_table = 10,
  key_width_mismatch = 11,
  duplicate_table_id = 12,
  invalid_position = 13,
  duplicate_entry = 14,
  no_such_entry = 15,
  dangling_action_ptr = 16,
  malformed_packet = 17,
  stage_limit_exceeded = 18,
  no_such_port = 19,

  // action store / vm
  validation_failed = 30,
  slot_in_use = 31,
  no_such_slot = 32,
  block_not_loaded = 33,
  backward_branch = 34,
  undeclared_resource = 35,
  packet_write_in_passive_mode = 36,
  block_too_long = 37,
  unallocated_resource = 38,
  packet_field_on_timer_context = 39,

  // resource pool
  pool_exhausted = 40,
  handle_in_use = 41,
  no_such_handle = 42,
  table_full = 43,
  no_such_timer = 44,
  action_needs_packet = 45,

  // probe runtime
  incompatible_attach_point = 60,
  no_covering_behavior = 61,
  admission_rejected = 62,
  commit_failed = 63,
  no_such_probe = 64,
  has_subscribers = 65,
  revoke_conflict = 66,

  // controller
  unresolved_selector = 70,
  unsupported_kind = 71,
  no_such_query = 72,
  deploy_failed = 73,

  // harness / misc
  script_error = 90,
  seed_mismatch = 91,
  parse_error = 92,
  io_error = 93,
  invalid_argument = 94,
};

const char* errc_name(Errc e);

// ---------------------------------------------------------------------------
// Bit-granular field addressing. Bit 0 of a byte sequence is the most
// significant bit of byte 0; multi-bit values read in this order are
// big-endian, which matches how packet fields are written on the wire.
// ---------------------------------------------------------------------------

enum class FieldSpace : uint8_t { packet = 0, metadata = 1, reg = 2 };

struct FieldRef {
  FieldSpace space = FieldSpace::metadata;
  uint32_t offset_bits = 0;
  uint32_t length_bits = 0;

  bool operator==(const FieldRef&) const = default;

  std::string to_string() const;
  // Parses "pkt[off:len]", "md[off:len]" or "reg[off:len]".
  static bool parse(const std::string& text, FieldRef* out);
};

// Reads up to 64 bits; bits past the end of `data` read as zero.
uint64_t read_bits_u64(ByteView data, size_t offset_bits, size_t length_bits);
// Writes up to 64 bits; writes past the end of `data` are dropped.
void write_bits_u64(std::span<uint8_t> data, size_t offset_bits,
                    size_t length_bits, uint64_t value);
// Copies an arbitrary bit range; source bits past the end read as zero,
// destination bits past the end are dropped.
void copy_bits(std::span<uint8_t> dst, size_t dst_off, ByteView src,
               size_t src_off, size_t length_bits);
// Left-aligned extraction into ceil(len/8) bytes (trailing bits zero).
Bytes extract_bits(ByteView data, size_t offset_bits, size_t length_bits);

// Ternary match over left-aligned bit strings of equal byte length.
bool ternary_match(ByteView key, ByteView value, ByteView mask);

std::string to_hex(ByteView data);
bool from_hex(const std::string& hex, Bytes* out);

// ---------------------------------------------------------------------------
// Clocks. Virtual time drives the harness; wall time drives live mode.
// ---------------------------------------------------------------------------

class Clock {
 public:
  virtual ~Clock() = default;
  virtual uint64_t now_ns() const = 0;
};

class VirtualClock : public Clock {
 public:
  uint64_t now_ns() const override { return now_; }
  void set_ns(uint64_t t) { now_ = t; }

 private:
  uint64_t now_ = 0;
};

class WallClock : public Clock {
 public:
  uint64_t now_ns() const override;
};

// Deterministic RNG helper. std::mt19937_64 output is pinned by the
// standard; the derived draws below avoid std::*_distribution, whose
// results vary across library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  uint64_t next() { return eng_(); }
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next() % n; }
  uint64_t range(uint64_t lo, uint64_t hi) {  // inclusive bounds
    return lo + below(hi - lo + 1);
  }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dnp

#endif  // DNP_COMMON_HPP_
