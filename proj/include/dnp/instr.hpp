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

#ifndef DNP_INSTR_HPP_
#define DNP_INSTR_HPP_

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dnp/common.hpp"

namespace dnp {

// The primitive instruction set action blocks are made of. Branches are
// forward-only, so every block terminates structurally.
enum class Opcode : uint8_t {
  SET_FIELD = 1,
  MOVE,
  ADD,
  SUB,
  AND,
  OR,
  SHL,
  SHR,
  BRANCH_EQ,
  BRANCH_NE,
  BRANCH_GE,
  BRANCH_LT,
  CNTR_ADD,
  CNTR_SET,
  METER_CHECK,
  REG_READ,
  REG_WRITE,
  STB_INSERT,
  STB_DELETE,
  STB_LOOKUP,
  TIMESTAMP,
  GEN_PKT,
  SAMPLE_TEST,
  OUTPUT,
  GOTO_TABLE,
  DROP,
  NOP,
  HALT,
};

const char* opcode_name(Opcode op);

// Resource classes; each class is a distinct handle namespace.
enum class ResClass : uint8_t {
  counter = 0,
  meter = 1,
  reg = 2,
  state_table = 3,
  timer = 4,
  sample = 5,
};
constexpr int kResClassCount = 6;
const char* res_class_name(ResClass c);
bool res_class_parse(const std::string& s, ResClass* out);

struct Handle {
  ResClass cls = ResClass::counter;
  uint32_t index = 0;
  bool operator==(const Handle&) const = default;
  auto operator<=>(const Handle&) const = default;
  std::string to_string() const;
};

// Generic instruction source operand.
struct Operand {
  enum class Kind : uint8_t {
    none = 0,
    field = 1,     // FieldRef read
    imm = 2,       // immediate with explicit bit width (packing width)
    pkt_len = 3,   // packet length in bytes
    q_depth = 4,   // queue depth (queue-hook context only)
    q_event = 5,   // 0 = enqueue, 1 = dequeue (queue-hook context only)
  };
  Kind kind = Kind::none;
  FieldRef field;
  uint64_t imm = 0;
  uint8_t imm_width = 64;

  bool operator==(const Operand&) const = default;

  static Operand of_field(FieldRef f) {
    Operand o;
    o.kind = Kind::field;
    o.field = f;
    return o;
  }
  static Operand of_imm(uint64_t v, uint8_t width = 64) {
    Operand o;
    o.kind = Kind::imm;
    o.imm = v;
    o.imm_width = width;
    return o;
  }
  static Operand of_pkt_len() {
    Operand o;
    o.kind = Kind::pkt_len;
    return o;
  }
  static Operand of_q_depth() {
    Operand o;
    o.kind = Kind::q_depth;
    return o;
  }
  static Operand of_q_event() {
    Operand o;
    o.kind = Kind::q_event;
    return o;
  }
};

// One flat instruction record; which members are live depends on the opcode.
// Factories below are the supported construction surface.
struct Instruction {
  Opcode op = Opcode::NOP;
  FieldRef a;                    // dst / key
  FieldRef c;                    // second dst (STB_LOOKUP value/found)
  FieldRef d;
  Operand src;                   // generic source
  Handle res;                    // resource handle
  int32_t offset = 0;            // branch displacement (target = pc + offset)
  uint32_t port = 0;             // OUTPUT / GEN_PKT destination
  uint32_t table = 0;            // GOTO_TABLE
  uint32_t template_id = 0;      // GEN_PKT
  uint16_t pad_to = 0;           // GEN_PKT payload zero-pad, bytes
  uint32_t sample_n = 0;         // SAMPLE_TEST 1-in-N
  uint8_t shift = 0;             // SHL / SHR
  bool has_dst = false;          // CNTR_ADD optional deposit
  std::vector<Operand> fields;   // GEN_PKT payload operands

  bool operator==(const Instruction&) const = default;

  static Instruction set_field(FieldRef dst, uint64_t imm);
  static Instruction move(FieldRef dst, Operand src);
  static Instruction alu(Opcode op, FieldRef dst, Operand src);
  static Instruction shift_op(Opcode op, FieldRef dst, uint8_t amount);
  static Instruction branch(Opcode op, FieldRef a, Operand b, int32_t offset);
  static Instruction cntr_add(Handle h, Operand amount,
                              std::optional<FieldRef> dst = std::nullopt);
  static Instruction cntr_set(Handle h, Operand value);
  static Instruction meter_check(Handle h, Operand amount, FieldRef dst);
  static Instruction reg_read(Handle h, FieldRef dst);
  static Instruction reg_write(Handle h, Operand src);
  static Instruction stb_insert(Handle h, FieldRef key, Operand value);
  static Instruction stb_delete(Handle h, FieldRef key);
  static Instruction stb_lookup(Handle h, FieldRef key, FieldRef value_dst,
                                FieldRef found_dst);
  static Instruction timestamp(FieldRef dst);
  static Instruction gen_pkt(uint32_t dest_port, uint32_t template_id,
                             std::vector<Operand> fields, uint16_t pad_to = 0);
  static Instruction sample_test(Handle h, uint32_t n, FieldRef dst);
  static Instruction output(Operand port);
  static Instruction goto_table(uint32_t table);
  static Instruction drop();
  static Instruction nop();
  static Instruction halt();
};

// Logical port reserved for the controller; reports and only reports go here.
constexpr uint32_t kControllerPort = 0xffffffffu;

struct CostProfile {
  uint32_t instr_count = 0;
  uint32_t mem_accesses = 0;      // CNTR_*, REG_*, STB_*, METER_CHECK
  uint32_t gen_pkt_count_max = 0;

  CostProfile& operator+=(const CostProfile& o) {
    instr_count += o.instr_count;
    mem_accesses += o.mem_accesses;
    gen_pkt_count_max += o.gen_pkt_count_max;
    return *this;
  }
  bool operator==(const CostProfile&) const = default;
};

struct ActionBlock {
  std::vector<Instruction> instructions;
  std::set<Handle> declared_resources;
  bool passive = true;

  bool operator==(const ActionBlock&) const = default;

  // Fills declared_resources from the instruction list.
  ActionBlock& finalize();
};

constexpr size_t kMaxBlockLen = 64;
constexpr size_t kMetadataBytes = 256;
// Entry params are copied into this metadata window before execution.
constexpr size_t kParamsMetaOffset = 192;
constexpr size_t kMaxParamsBytes = 64;

struct VmLimits {
  uint32_t mtu_bytes = 2048;
  uint32_t register_count = 4096;
};

struct ValidationReport {
  CostProfile cost;
  bool needs_packet = false;       // touches pkt space / pkt_len / disposition
  bool uses_queue_ctx = false;     // q_depth / q_event operands
  bool has_disposition = false;    // OUTPUT / DROP / GOTO_TABLE present
  bool writes_packet = false;
};

struct VmError {
  Errc code = Errc::ok;
  int index = -1;  // offending instruction, -1 when block-level
  std::string what;
  explicit operator bool() const { return code != Errc::ok; }
};

// Static validation: length, forward-only branches, operand bounds, handle
// typing, exact declared-resource match, passivity. Returns the static cost.
VmError validate(const ActionBlock& block, const VmLimits& limits,
                 ValidationReport* out);

// Canonical little-endian binary encoding (the control-channel form).
Bytes encode_block(const ActionBlock& block);
Errc decode_block(ByteView data, ActionBlock* out);

// Text assembler / disassembler (one instruction per line, '#' comments).
Errc assemble(const std::string& text, ActionBlock* out, std::string* err);
std::string disassemble(const ActionBlock& block);

// Inserts `code` before the trailing terminal control instruction (or
// appends when the block does not end in one), fixing up branch offsets
// and merging declared resources.
ActionBlock splice_before_terminal(const ActionBlock& base,
                                   const ActionBlock& code);

// Label-resolving block construction helper used by the probe compiler.
class BlockBuilder {
 public:
  BlockBuilder& add(Instruction ins);
  // branch whose target is resolved when build() runs
  BlockBuilder& branch_to(Opcode op, FieldRef a, Operand b,
                          const std::string& label);
  // unconditional forward jump (BRANCH_GE scratch >= 0 is always true)
  BlockBuilder& jump_to(const std::string& label, FieldRef scratch);
  BlockBuilder& mark(const std::string& label);
  // resolves labels and finalizes declared resources; empty on failure
  ActionBlock build(bool passive = true);

 private:
  std::vector<Instruction> instrs_;
  std::vector<std::pair<size_t, std::string>> fixups_;
  std::map<std::string, size_t> labels_;
  bool broken_ = false;
};

// min(base_pps, mem_budget / max(1, mem_accesses_per_packet)), in packets/s.
uint64_t estimate_throughput(const CostProfile& per_packet_cost,
                             uint64_t base_pps, uint64_t mem_budget_per_sec);

}  // namespace dnp

#endif  // DNP_INSTR_HPP_
