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

#include "dnp/instr.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace dnp {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::SET_FIELD: return "SET_FIELD";
    case Opcode::MOVE: return "MOVE";
    case Opcode::ADD: return "ADD";
    case Opcode::SUB: return "SUB";
    case Opcode::AND: return "AND";
    case Opcode::OR: return "OR";
    case Opcode::SHL: return "SHL";
    case Opcode::SHR: return "SHR";
    case Opcode::BRANCH_EQ: return "BRANCH_EQ";
    case Opcode::BRANCH_NE: return "BRANCH_NE";
    case Opcode::BRANCH_GE: return "BRANCH_GE";
    case Opcode::BRANCH_LT: return "BRANCH_LT";
    case Opcode::CNTR_ADD: return "CNTR_ADD";
    case Opcode::CNTR_SET: return "CNTR_SET";
    case Opcode::METER_CHECK: return "METER_CHECK";
    case Opcode::REG_READ: return "REG_READ";
    case Opcode::REG_WRITE: return "REG_WRITE";
    case Opcode::STB_INSERT: return "STB_INSERT";
    case Opcode::STB_DELETE: return "STB_DELETE";
    case Opcode::STB_LOOKUP: return "STB_LOOKUP";
    case Opcode::TIMESTAMP: return "TIMESTAMP";
    case Opcode::GEN_PKT: return "GEN_PKT";
    case Opcode::SAMPLE_TEST: return "SAMPLE_TEST";
    case Opcode::OUTPUT: return "OUTPUT";
    case Opcode::GOTO_TABLE: return "GOTO_TABLE";
    case Opcode::DROP: return "DROP";
    case Opcode::NOP: return "NOP";
    case Opcode::HALT: return "HALT";
  }
  return "?";
}

const char* res_class_name(ResClass c) {
  switch (c) {
    case ResClass::counter: return "counter";
    case ResClass::meter: return "meter";
    case ResClass::reg: return "register";
    case ResClass::state_table: return "state_table";
    case ResClass::timer: return "timer";
    case ResClass::sample: return "sample";
  }
  return "?";
}

bool res_class_parse(const std::string& s, ResClass* out) {
  ResClass c;
  if (s == "counter") c = ResClass::counter;
  else if (s == "meter") c = ResClass::meter;
  else if (s == "register") c = ResClass::reg;
  else if (s == "state_table" || s == "stb") c = ResClass::state_table;
  else if (s == "timer") c = ResClass::timer;
  else if (s == "sample") c = ResClass::sample;
  else return false;
  if (out) *out = c;
  return true;
}

std::string Handle::to_string() const {
  const char* pfx = "";
  switch (cls) {
    case ResClass::counter: pfx = "c"; break;
    case ResClass::meter: pfx = "m"; break;
    case ResClass::reg: pfx = "r"; break;
    case ResClass::state_table: pfx = "stb"; break;
    case ResClass::timer: pfx = "tmr"; break;
    case ResClass::sample: pfx = "smp"; break;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%s%u", pfx, index);
  return buf;
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

Instruction Instruction::set_field(FieldRef dst, uint64_t imm) {
  Instruction i;
  i.op = Opcode::SET_FIELD;
  i.a = dst;
  i.src = Operand::of_imm(imm);
  return i;
}

Instruction Instruction::move(FieldRef dst, Operand src) {
  Instruction i;
  i.op = Opcode::MOVE;
  i.a = dst;
  i.src = src;
  return i;
}

Instruction Instruction::alu(Opcode op, FieldRef dst, Operand src) {
  Instruction i;
  i.op = op;
  i.a = dst;
  i.src = src;
  return i;
}

Instruction Instruction::shift_op(Opcode op, FieldRef dst, uint8_t amount) {
  Instruction i;
  i.op = op;
  i.a = dst;
  i.shift = amount;
  return i;
}

Instruction Instruction::branch(Opcode op, FieldRef a, Operand b,
                                int32_t offset) {
  Instruction i;
  i.op = op;
  i.a = a;
  i.src = b;
  i.offset = offset;
  return i;
}

Instruction Instruction::cntr_add(Handle h, Operand amount,
                                  std::optional<FieldRef> dst) {
  Instruction i;
  i.op = Opcode::CNTR_ADD;
  i.res = h;
  i.src = amount;
  if (dst) {
    i.has_dst = true;
    i.a = *dst;
  }
  return i;
}

Instruction Instruction::cntr_set(Handle h, Operand value) {
  Instruction i;
  i.op = Opcode::CNTR_SET;
  i.res = h;
  i.src = value;
  return i;
}

Instruction Instruction::meter_check(Handle h, Operand amount, FieldRef dst) {
  Instruction i;
  i.op = Opcode::METER_CHECK;
  i.res = h;
  i.src = amount;
  i.a = dst;
  return i;
}

Instruction Instruction::reg_read(Handle h, FieldRef dst) {
  Instruction i;
  i.op = Opcode::REG_READ;
  i.res = h;
  i.a = dst;
  return i;
}

Instruction Instruction::reg_write(Handle h, Operand src) {
  Instruction i;
  i.op = Opcode::REG_WRITE;
  i.res = h;
  i.src = src;
  return i;
}

Instruction Instruction::stb_insert(Handle h, FieldRef key, Operand value) {
  Instruction i;
  i.op = Opcode::STB_INSERT;
  i.res = h;
  i.a = key;
  i.src = value;
  return i;
}

Instruction Instruction::stb_delete(Handle h, FieldRef key) {
  Instruction i;
  i.op = Opcode::STB_DELETE;
  i.res = h;
  i.a = key;
  return i;
}

Instruction Instruction::stb_lookup(Handle h, FieldRef key, FieldRef value_dst,
                                    FieldRef found_dst) {
  Instruction i;
  i.op = Opcode::STB_LOOKUP;
  i.res = h;
  i.a = key;
  i.c = value_dst;
  i.d = found_dst;
  return i;
}

Instruction Instruction::timestamp(FieldRef dst) {
  Instruction i;
  i.op = Opcode::TIMESTAMP;
  i.a = dst;
  return i;
}

Instruction Instruction::gen_pkt(uint32_t dest_port, uint32_t template_id,
                                 std::vector<Operand> fields, uint16_t pad_to) {
  Instruction i;
  i.op = Opcode::GEN_PKT;
  i.port = dest_port;
  i.template_id = template_id;
  i.fields = std::move(fields);
  i.pad_to = pad_to;
  return i;
}

Instruction Instruction::sample_test(Handle h, uint32_t n, FieldRef dst) {
  Instruction i;
  i.op = Opcode::SAMPLE_TEST;
  i.res = h;
  i.sample_n = n;
  i.a = dst;
  return i;
}

Instruction Instruction::output(Operand port) {
  Instruction i;
  i.op = Opcode::OUTPUT;
  i.src = port;
  return i;
}

Instruction Instruction::goto_table(uint32_t table) {
  Instruction i;
  i.op = Opcode::GOTO_TABLE;
  i.table = table;
  return i;
}

Instruction Instruction::drop() {
  Instruction i;
  i.op = Opcode::DROP;
  return i;
}

Instruction Instruction::nop() {
  Instruction i;
  i.op = Opcode::NOP;
  return i;
}

Instruction Instruction::halt() {
  Instruction i;
  i.op = Opcode::HALT;
  return i;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

bool op_has_resource(Opcode op) {
  switch (op) {
    case Opcode::CNTR_ADD:
    case Opcode::CNTR_SET:
    case Opcode::METER_CHECK:
    case Opcode::REG_READ:
    case Opcode::REG_WRITE:
    case Opcode::STB_INSERT:
    case Opcode::STB_DELETE:
    case Opcode::STB_LOOKUP:
    case Opcode::SAMPLE_TEST:
      return true;
    default:
      return false;
  }
}

ResClass required_class(Opcode op) {
  switch (op) {
    case Opcode::CNTR_ADD:
    case Opcode::CNTR_SET:
      return ResClass::counter;
    case Opcode::METER_CHECK:
      return ResClass::meter;
    case Opcode::REG_READ:
    case Opcode::REG_WRITE:
      return ResClass::reg;
    case Opcode::STB_INSERT:
    case Opcode::STB_DELETE:
    case Opcode::STB_LOOKUP:
      return ResClass::state_table;
    case Opcode::SAMPLE_TEST:
      return ResClass::sample;
    default:
      return ResClass::counter;
  }
}

bool is_mem_access(Opcode op) {
  switch (op) {
    case Opcode::CNTR_ADD:
    case Opcode::CNTR_SET:
    case Opcode::METER_CHECK:
    case Opcode::REG_READ:
    case Opcode::REG_WRITE:
    case Opcode::STB_INSERT:
    case Opcode::STB_DELETE:
    case Opcode::STB_LOOKUP:
      return true;
    default:
      return false;
  }
}

bool is_branch(Opcode op) {
  return op == Opcode::BRANCH_EQ || op == Opcode::BRANCH_NE ||
         op == Opcode::BRANCH_GE || op == Opcode::BRANCH_LT;
}

bool is_terminal(Opcode op) {
  return op == Opcode::OUTPUT || op == Opcode::DROP ||
         op == Opcode::GOTO_TABLE || op == Opcode::HALT;
}

struct Checker {
  const VmLimits& lim;
  ValidationReport rep;
  std::set<Handle> referenced;
  VmError err;
  int idx = -1;

  bool fail(Errc code, const std::string& what) {
    if (!err) err = VmError{code, idx, what};
    return false;
  }

  bool check_field(const FieldRef& f, bool is_write, size_t max_len = 64,
                   bool allow_reg = false) {
    if (f.length_bits == 0 || f.length_bits > max_len) {
      return fail(Errc::validation_failed,
                  "bad field length in " + f.to_string());
    }
    switch (f.space) {
      case FieldSpace::packet:
        rep.needs_packet = true;
        if (f.offset_bits + f.length_bits > lim.mtu_bytes * 8u) {
          return fail(Errc::validation_failed,
                      "packet field beyond MTU: " + f.to_string());
        }
        if (is_write) rep.writes_packet = true;
        break;
      case FieldSpace::metadata:
        if (f.offset_bits + f.length_bits > kMetadataBytes * 8u) {
          return fail(Errc::validation_failed,
                      "metadata field out of range: " + f.to_string());
        }
        break;
      case FieldSpace::reg:
        if (!allow_reg || is_write) {
          return fail(Errc::validation_failed,
                      "register space not addressable here: " + f.to_string());
        }
        if (f.offset_bits / 64 != (f.offset_bits + f.length_bits - 1) / 64 ||
            f.offset_bits + f.length_bits > lim.register_count * 64u) {
          return fail(Errc::validation_failed,
                      "register field must lie in one cell: " + f.to_string());
        }
        referenced.insert(Handle{ResClass::reg, f.offset_bits / 64});
        break;
    }
    return true;
  }

  bool check_operand(const Operand& o, bool allow_reg = false) {
    switch (o.kind) {
      case Operand::Kind::none:
        return fail(Errc::validation_failed, "missing operand");
      case Operand::Kind::field:
        return check_field(o.field, false, 64, allow_reg);
      case Operand::Kind::imm:
        if (o.imm_width == 0 || o.imm_width > 64) {
          return fail(Errc::validation_failed, "bad immediate width");
        }
        return true;
      case Operand::Kind::pkt_len:
        rep.needs_packet = true;
        return true;
      case Operand::Kind::q_depth:
      case Operand::Kind::q_event:
        rep.uses_queue_ctx = true;
        return true;
    }
    return true;
  }
};

}  // namespace

ActionBlock& ActionBlock::finalize() {
  declared_resources.clear();
  for (const auto& ins : instructions) {
    if (op_has_resource(ins.op)) declared_resources.insert(ins.res);
    if (ins.op == Opcode::GEN_PKT) {
      for (const auto& f : ins.fields) {
        if (f.kind == Operand::Kind::field &&
            f.field.space == FieldSpace::reg) {
          declared_resources.insert(
              Handle{ResClass::reg, f.field.offset_bits / 64});
        }
      }
    }
  }
  return *this;
}

VmError validate(const ActionBlock& block, const VmLimits& limits,
                 ValidationReport* out) {
  Checker ck{limits, {}, {}, {}, -1};
  size_t n = block.instructions.size();
  if (n > kMaxBlockLen) {
    return VmError{Errc::block_too_long, -1, "block exceeds 64 instructions"};
  }
  ck.rep.cost.instr_count = static_cast<uint32_t>(n);

  for (size_t i = 0; i < n; ++i) {
    const Instruction& ins = block.instructions[i];
    ck.idx = static_cast<int>(i);
    if (is_mem_access(ins.op)) ck.rep.cost.mem_accesses++;
    if (op_has_resource(ins.op)) {
      if (ins.res.cls != required_class(ins.op)) {
        ck.fail(Errc::validation_failed,
                std::string("handle class mismatch for ") +
                    opcode_name(ins.op));
        break;
      }
      ck.referenced.insert(ins.res);
    }
    bool ok = true;
    switch (ins.op) {
      case Opcode::SET_FIELD:
        ok = ck.check_field(ins.a, true);
        break;
      case Opcode::MOVE:
        ok = ck.check_field(ins.a, true, 128) && ck.check_operand(ins.src);
        if (ok && ins.src.kind == Operand::Kind::field) {
          // wide copies allowed, but widths must agree
          if (ins.src.field.length_bits != ins.a.length_bits) {
            ok = ck.fail(Errc::validation_failed, "MOVE width mismatch");
          } else if (ins.a.length_bits > 64) {
            ok = ck.check_field(ins.src.field, false, 128);
          }
        } else if (ok && ins.a.length_bits > 64) {
          ok = ck.fail(Errc::validation_failed, "wide MOVE needs field source");
        }
        break;
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::AND:
      case Opcode::OR:
        ok = ck.check_field(ins.a, true) && ck.check_operand(ins.src);
        break;
      case Opcode::SHL:
      case Opcode::SHR:
        ok = ck.check_field(ins.a, true);
        if (ok && ins.shift > 63) {
          ok = ck.fail(Errc::validation_failed, "shift amount > 63");
        }
        break;
      case Opcode::BRANCH_EQ:
      case Opcode::BRANCH_NE:
      case Opcode::BRANCH_GE:
      case Opcode::BRANCH_LT:
        ok = ck.check_field(ins.a, false) && ck.check_operand(ins.src);
        if (ok && ins.offset < 1) {
          return VmError{Errc::backward_branch, static_cast<int>(i),
                         "branch offset must be positive"};
        }
        if (ok && i + static_cast<size_t>(ins.offset) > n) {
          ok = ck.fail(Errc::validation_failed, "branch target out of range");
        }
        break;
      case Opcode::CNTR_ADD:
        ok = ck.check_operand(ins.src);
        if (ok && ins.has_dst) ok = ck.check_field(ins.a, true);
        break;
      case Opcode::CNTR_SET:
      case Opcode::REG_WRITE:
        ok = ck.check_operand(ins.src);
        break;
      case Opcode::METER_CHECK:
        ok = ck.check_operand(ins.src) && ck.check_field(ins.a, true);
        break;
      case Opcode::REG_READ:
        ok = ck.check_field(ins.a, true);
        break;
      case Opcode::STB_INSERT:
        ok = ck.check_field(ins.a, false, 128) && ck.check_operand(ins.src);
        break;
      case Opcode::STB_DELETE:
        ok = ck.check_field(ins.a, false, 128);
        break;
      case Opcode::STB_LOOKUP:
        ok = ck.check_field(ins.a, false, 128) && ck.check_field(ins.c, true) &&
             ck.check_field(ins.d, true);
        break;
      case Opcode::TIMESTAMP:
        ok = ck.check_field(ins.a, true);
        if (ok && ins.a.length_bits != 64) {
          ok = ck.fail(Errc::validation_failed, "TIMESTAMP needs a 64-bit dst");
        }
        break;
      case Opcode::GEN_PKT:
        ck.rep.cost.gen_pkt_count_max++;
        if (ins.fields.size() > 8) {
          ok = ck.fail(Errc::validation_failed, "GEN_PKT has > 8 fields");
        }
        if (ok && ins.pad_to > limits.mtu_bytes) {
          ok = ck.fail(Errc::validation_failed, "GEN_PKT pad beyond MTU");
        }
        for (const auto& f : ins.fields) {
          if (!ok) break;
          ok = ck.check_operand(f, /*allow_reg=*/true);
        }
        break;
      case Opcode::SAMPLE_TEST:
        ok = ck.check_field(ins.a, true);
        if (ok && ins.sample_n < 1) {
          ok = ck.fail(Errc::validation_failed, "SAMPLE_TEST needs N >= 1");
        }
        break;
      case Opcode::OUTPUT:
        ok = ck.check_operand(ins.src);
        ck.rep.has_disposition = true;
        ck.rep.needs_packet = true;
        break;
      case Opcode::GOTO_TABLE:
      case Opcode::DROP:
        ck.rep.has_disposition = true;
        ck.rep.needs_packet = true;
        break;
      case Opcode::NOP:
      case Opcode::HALT:
        break;
    }
    if (!ok || ck.err) break;

    // passivity: writes into packet space are reserved for active blocks
    if (!ck.err && block.passive && ck.rep.writes_packet) {
      return VmError{Errc::packet_write_in_passive_mode, static_cast<int>(i),
                     "packet write in passive block"};
    }
  }
  if (ck.err) return ck.err;

  for (size_t i = 0; i < n; ++i) {
    const Instruction& ins = block.instructions[i];
    if (op_has_resource(ins.op) &&
        !block.declared_resources.count(ins.res)) {
      return VmError{Errc::undeclared_resource, static_cast<int>(i),
                     "undeclared " + ins.res.to_string()};
    }
  }
  for (const Handle& h : block.declared_resources) {
    if (!ck.referenced.count(h)) {
      return VmError{Errc::undeclared_resource, -1,
                     "declared but unreferenced " + h.to_string()};
    }
  }

  if (out) *out = ck.rep;
  return {};
}

// ---------------------------------------------------------------------------
// Binary codec
// ---------------------------------------------------------------------------

namespace {

struct Writer {
  Bytes out;
  void u8(uint8_t v) { out.push_back(v); }
  void u16(uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void field(const FieldRef& f) {
    u8(static_cast<uint8_t>(f.space));
    u32(f.offset_bits);
    u16(static_cast<uint16_t>(f.length_bits));
  }
  void operand(const Operand& o) {
    u8(static_cast<uint8_t>(o.kind));
    if (o.kind == Operand::Kind::field) {
      field(o.field);
    } else if (o.kind == Operand::Kind::imm) {
      u64(o.imm);
      u8(o.imm_width);
    }
  }
  void handle(const Handle& h) {
    u8(static_cast<uint8_t>(h.cls));
    u32(h.index);
  }
};

struct Reader {
  ByteView in;
  size_t pos = 0;
  bool bad = false;

  bool need(size_t n) {
    if (pos + n > in.size()) {
      bad = true;
      return false;
    }
    return true;
  }
  uint8_t u8() {
    if (!need(1)) return 0;
    return in[pos++];
  }
  uint16_t u16() {
    if (!need(2)) return 0;
    uint16_t v = static_cast<uint16_t>(in[pos] | (in[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    if (!need(4)) return 0;
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    if (!need(8)) return 0;
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  FieldRef field() {
    FieldRef f;
    uint8_t sp = u8();
    if (sp > 2) bad = true;
    f.space = static_cast<FieldSpace>(sp);
    f.offset_bits = u32();
    f.length_bits = u16();
    return f;
  }
  Operand operand() {
    Operand o;
    uint8_t k = u8();
    if (k > 5) {
      bad = true;
      return o;
    }
    o.kind = static_cast<Operand::Kind>(k);
    if (o.kind == Operand::Kind::field) {
      o.field = field();
    } else if (o.kind == Operand::Kind::imm) {
      o.imm = u64();
      o.imm_width = u8();
    }
    return o;
  }
  Handle handle() {
    Handle h;
    uint8_t c = u8();
    if (c >= kResClassCount) bad = true;
    h.cls = static_cast<ResClass>(c);
    h.index = u32();
    return h;
  }
};

void encode_instruction(Writer& w, const Instruction& ins) {
  w.u8(static_cast<uint8_t>(ins.op));
  switch (ins.op) {
    case Opcode::SET_FIELD:
      w.field(ins.a);
      w.u64(ins.src.imm);
      break;
    case Opcode::MOVE:
    case Opcode::ADD:
    case Opcode::SUB:
    case Opcode::AND:
    case Opcode::OR:
      w.field(ins.a);
      w.operand(ins.src);
      break;
    case Opcode::SHL:
    case Opcode::SHR:
      w.field(ins.a);
      w.u8(ins.shift);
      break;
    case Opcode::BRANCH_EQ:
    case Opcode::BRANCH_NE:
    case Opcode::BRANCH_GE:
    case Opcode::BRANCH_LT:
      w.field(ins.a);
      w.operand(ins.src);
      w.i32(ins.offset);
      break;
    case Opcode::CNTR_ADD:
      w.handle(ins.res);
      w.operand(ins.src);
      w.u8(ins.has_dst ? 1 : 0);
      if (ins.has_dst) w.field(ins.a);
      break;
    case Opcode::CNTR_SET:
    case Opcode::REG_WRITE:
      w.handle(ins.res);
      w.operand(ins.src);
      break;
    case Opcode::METER_CHECK:
      w.handle(ins.res);
      w.operand(ins.src);
      w.field(ins.a);
      break;
    case Opcode::REG_READ:
      w.handle(ins.res);
      w.field(ins.a);
      break;
    case Opcode::STB_INSERT:
      w.handle(ins.res);
      w.field(ins.a);
      w.operand(ins.src);
      break;
    case Opcode::STB_DELETE:
      w.handle(ins.res);
      w.field(ins.a);
      break;
    case Opcode::STB_LOOKUP:
      w.handle(ins.res);
      w.field(ins.a);
      w.field(ins.c);
      w.field(ins.d);
      break;
    case Opcode::TIMESTAMP:
      w.field(ins.a);
      break;
    case Opcode::GEN_PKT:
      w.u32(ins.port);
      w.u32(ins.template_id);
      w.u16(ins.pad_to);
      w.u8(static_cast<uint8_t>(ins.fields.size()));
      for (const auto& f : ins.fields) w.operand(f);
      break;
    case Opcode::SAMPLE_TEST:
      w.handle(ins.res);
      w.u32(ins.sample_n);
      w.field(ins.a);
      break;
    case Opcode::OUTPUT:
      w.operand(ins.src);
      break;
    case Opcode::GOTO_TABLE:
      w.u32(ins.table);
      break;
    case Opcode::DROP:
    case Opcode::NOP:
    case Opcode::HALT:
      break;
  }
}

bool decode_instruction(Reader& r, Instruction* out) {
  uint8_t opb = r.u8();
  if (r.bad || opb < 1 || opb > static_cast<uint8_t>(Opcode::HALT)) return false;
  Instruction ins;
  ins.op = static_cast<Opcode>(opb);
  switch (ins.op) {
    case Opcode::SET_FIELD:
      ins.a = r.field();
      ins.src = Operand::of_imm(r.u64());
      break;
    case Opcode::MOVE:
    case Opcode::ADD:
    case Opcode::SUB:
    case Opcode::AND:
    case Opcode::OR:
      ins.a = r.field();
      ins.src = r.operand();
      break;
    case Opcode::SHL:
    case Opcode::SHR:
      ins.a = r.field();
      ins.shift = r.u8();
      break;
    case Opcode::BRANCH_EQ:
    case Opcode::BRANCH_NE:
    case Opcode::BRANCH_GE:
    case Opcode::BRANCH_LT:
      ins.a = r.field();
      ins.src = r.operand();
      ins.offset = r.i32();
      break;
    case Opcode::CNTR_ADD:
      ins.res = r.handle();
      ins.src = r.operand();
      ins.has_dst = r.u8() != 0;
      if (ins.has_dst) ins.a = r.field();
      break;
    case Opcode::CNTR_SET:
    case Opcode::REG_WRITE:
      ins.res = r.handle();
      ins.src = r.operand();
      break;
    case Opcode::METER_CHECK:
      ins.res = r.handle();
      ins.src = r.operand();
      ins.a = r.field();
      break;
    case Opcode::REG_READ:
      ins.res = r.handle();
      ins.a = r.field();
      break;
    case Opcode::STB_INSERT:
      ins.res = r.handle();
      ins.a = r.field();
      ins.src = r.operand();
      break;
    case Opcode::STB_DELETE:
      ins.res = r.handle();
      ins.a = r.field();
      break;
    case Opcode::STB_LOOKUP:
      ins.res = r.handle();
      ins.a = r.field();
      ins.c = r.field();
      ins.d = r.field();
      break;
    case Opcode::TIMESTAMP:
      ins.a = r.field();
      break;
    case Opcode::GEN_PKT: {
      ins.port = r.u32();
      ins.template_id = r.u32();
      ins.pad_to = r.u16();
      uint8_t nf = r.u8();
      if (nf > 8) return false;
      for (uint8_t i = 0; i < nf && !r.bad; ++i) ins.fields.push_back(r.operand());
      break;
    }
    case Opcode::SAMPLE_TEST:
      ins.res = r.handle();
      ins.sample_n = r.u32();
      ins.a = r.field();
      break;
    case Opcode::OUTPUT:
      ins.src = r.operand();
      break;
    case Opcode::GOTO_TABLE:
      ins.table = r.u32();
      break;
    case Opcode::DROP:
    case Opcode::NOP:
    case Opcode::HALT:
      break;
  }
  if (r.bad) return false;
  *out = std::move(ins);
  return true;
}

}  // namespace

Bytes encode_block(const ActionBlock& block) {
  Writer w;
  w.u16(static_cast<uint16_t>(block.instructions.size()));
  for (const auto& ins : block.instructions) encode_instruction(w, ins);
  w.u8(block.passive ? 1 : 0);
  w.u16(static_cast<uint16_t>(block.declared_resources.size()));
  for (const auto& h : block.declared_resources) w.handle(h);
  return std::move(w.out);
}

Errc decode_block(ByteView data, ActionBlock* out) {
  Reader r{data};
  ActionBlock b;
  uint16_t n = r.u16();
  if (n > kMaxBlockLen) return Errc::bad_length;
  for (uint16_t i = 0; i < n; ++i) {
    Instruction ins;
    if (!decode_instruction(r, &ins)) return Errc::bad_length;
    b.instructions.push_back(std::move(ins));
  }
  b.passive = r.u8() != 0;
  uint16_t nd = r.u16();
  for (uint16_t i = 0; i < nd; ++i) {
    Handle h = r.handle();
    if (r.bad) return Errc::bad_length;
    b.declared_resources.insert(h);
  }
  if (r.bad || r.pos != data.size()) return Errc::bad_length;
  *out = std::move(b);
  return Errc::ok;
}

// ---------------------------------------------------------------------------
// Assembler / disassembler
// ---------------------------------------------------------------------------

namespace {

std::string operand_to_text(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::none: return "?";
    case Operand::Kind::field: return o.field.to_string();
    case Operand::Kind::imm: {
      char buf[48];
      if (o.imm_width == 64) {
        std::snprintf(buf, sizeof(buf), "%llu",
                      static_cast<unsigned long long>(o.imm));
      } else {
        std::snprintf(buf, sizeof(buf), "%llu:%u",
                      static_cast<unsigned long long>(o.imm), o.imm_width);
      }
      return buf;
    }
    case Operand::Kind::pkt_len: return "pktlen";
    case Operand::Kind::q_depth: return "qdepth";
    case Operand::Kind::q_event: return "qevent";
  }
  return "?";
}

bool parse_u64(const std::string& t, uint64_t* out) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(t, &used, 0);
    if (used != t.size()) return false;
    *out = v;
    return true;
  } catch (...) {
    return false;
  }
}

bool parse_handle(const std::string& t, Handle* out) {
  struct Pfx {
    const char* p;
    ResClass c;
  };
  // longest prefixes first so "stb"/"smp" win over "s"
  static const Pfx pfx[] = {{"stb", ResClass::state_table},
                            {"smp", ResClass::sample},
                            {"tmr", ResClass::timer},
                            {"c", ResClass::counter},
                            {"m", ResClass::meter},
                            {"r", ResClass::reg}};
  for (const auto& p : pfx) {
    size_t l = std::strlen(p.p);
    if (t.size() > l && t.compare(0, l, p.p) == 0 &&
        std::isdigit(static_cast<unsigned char>(t[l]))) {
      uint64_t idx;
      if (!parse_u64(t.substr(l), &idx)) return false;
      *out = Handle{p.c, static_cast<uint32_t>(idx)};
      return true;
    }
  }
  return false;
}

bool parse_operand(const std::string& t, Operand* out) {
  if (t == "pktlen") {
    *out = Operand::of_pkt_len();
    return true;
  }
  if (t == "qdepth") {
    *out = Operand::of_q_depth();
    return true;
  }
  if (t == "qevent") {
    *out = Operand::of_q_event();
    return true;
  }
  FieldRef f;
  if (FieldRef::parse(t, &f)) {
    *out = Operand::of_field(f);
    return true;
  }
  // value[:width]
  size_t colon = t.rfind(':');
  if (colon != std::string::npos && t.find('[') == std::string::npos) {
    uint64_t v, w;
    if (parse_u64(t.substr(0, colon), &v) && parse_u64(t.substr(colon + 1), &w) &&
        w >= 1 && w <= 64) {
      *out = Operand::of_imm(v, static_cast<uint8_t>(w));
      return true;
    }
    return false;
  }
  uint64_t v;
  if (parse_u64(t, &v)) {
    *out = Operand::of_imm(v);
    return true;
  }
  return false;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) {
    if (t[0] == '#') break;
    toks.push_back(t);
  }
  return toks;
}

}  // namespace

Errc assemble(const std::string& text, ActionBlock* out, std::string* err) {
  ActionBlock b;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    if (err) *err = "line " + std::to_string(lineno) + ": " + what;
    return Errc::parse_error;
  };
  while (std::getline(is, line)) {
    ++lineno;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    const std::string& m = toks[0];
    auto narg = toks.size() - 1;
    auto field_arg = [&](size_t i, FieldRef* f) {
      return i < toks.size() && FieldRef::parse(toks[i], f);
    };
    auto op_arg = [&](size_t i, Operand* o) {
      return i < toks.size() && parse_operand(toks[i], o);
    };
    auto handle_arg = [&](size_t i, Handle* h) {
      return i < toks.size() && parse_handle(toks[i], h);
    };
    auto u64_arg = [&](size_t i, uint64_t* v) {
      return i < toks.size() && parse_u64(toks[i], v);
    };

    FieldRef a, c, d;
    Operand o;
    Handle h;
    uint64_t v = 0;

    if (m == "SET_FIELD") {
      if (!field_arg(1, &a) || !u64_arg(2, &v)) return fail("SET_FIELD dst imm");
      b.instructions.push_back(Instruction::set_field(a, v));
    } else if (m == "MOVE" || m == "ADD" || m == "SUB" || m == "AND" ||
               m == "OR") {
      if (!field_arg(1, &a) || !op_arg(2, &o)) return fail(m + " dst src");
      Opcode op = m == "MOVE"  ? Opcode::MOVE
                  : m == "ADD" ? Opcode::ADD
                  : m == "SUB" ? Opcode::SUB
                  : m == "AND" ? Opcode::AND
                               : Opcode::OR;
      b.instructions.push_back(op == Opcode::MOVE
                                   ? Instruction::move(a, o)
                                   : Instruction::alu(op, a, o));
    } else if (m == "SHL" || m == "SHR") {
      if (!field_arg(1, &a) || !u64_arg(2, &v)) return fail(m + " dst amount");
      b.instructions.push_back(Instruction::shift_op(
          m == "SHL" ? Opcode::SHL : Opcode::SHR, a, static_cast<uint8_t>(v)));
    } else if (m == "BRANCH_EQ" || m == "BRANCH_NE" || m == "BRANCH_GE" ||
               m == "BRANCH_LT") {
      if (!field_arg(1, &a) || !op_arg(2, &o) || narg < 3 ||
          toks[3][0] != '+' || !parse_u64(toks[3].substr(1), &v)) {
        return fail(m + " a b +offset");
      }
      Opcode op = m == "BRANCH_EQ"   ? Opcode::BRANCH_EQ
                  : m == "BRANCH_NE" ? Opcode::BRANCH_NE
                  : m == "BRANCH_GE" ? Opcode::BRANCH_GE
                                     : Opcode::BRANCH_LT;
      b.instructions.push_back(
          Instruction::branch(op, a, o, static_cast<int32_t>(v)));
    } else if (m == "CNTR_ADD") {
      if (!handle_arg(1, &h) || !op_arg(2, &o)) return fail("CNTR_ADD c amount [dst]");
      std::optional<FieldRef> dst;
      if (narg >= 3) {
        if (!field_arg(3, &a)) return fail("CNTR_ADD bad dst");
        dst = a;
      }
      b.instructions.push_back(Instruction::cntr_add(h, o, dst));
    } else if (m == "CNTR_SET") {
      if (!handle_arg(1, &h) || !op_arg(2, &o)) return fail("CNTR_SET c value");
      b.instructions.push_back(Instruction::cntr_set(h, o));
    } else if (m == "METER_CHECK") {
      if (!handle_arg(1, &h) || !op_arg(2, &o) || !field_arg(3, &a)) {
        return fail("METER_CHECK m amount dst");
      }
      b.instructions.push_back(Instruction::meter_check(h, o, a));
    } else if (m == "REG_READ") {
      if (!handle_arg(1, &h) || !field_arg(2, &a)) return fail("REG_READ r dst");
      b.instructions.push_back(Instruction::reg_read(h, a));
    } else if (m == "REG_WRITE") {
      if (!handle_arg(1, &h) || !op_arg(2, &o)) return fail("REG_WRITE r src");
      b.instructions.push_back(Instruction::reg_write(h, o));
    } else if (m == "STB_INSERT") {
      if (!handle_arg(1, &h) || !field_arg(2, &a) || !op_arg(3, &o)) {
        return fail("STB_INSERT stb key value");
      }
      b.instructions.push_back(Instruction::stb_insert(h, a, o));
    } else if (m == "STB_DELETE") {
      if (!handle_arg(1, &h) || !field_arg(2, &a)) return fail("STB_DELETE stb key");
      b.instructions.push_back(Instruction::stb_delete(h, a));
    } else if (m == "STB_LOOKUP") {
      if (!handle_arg(1, &h) || !field_arg(2, &a) || !field_arg(3, &c) ||
          !field_arg(4, &d)) {
        return fail("STB_LOOKUP stb key value_dst found_dst");
      }
      b.instructions.push_back(Instruction::stb_lookup(h, a, c, d));
    } else if (m == "TIMESTAMP") {
      if (!field_arg(1, &a)) return fail("TIMESTAMP dst");
      b.instructions.push_back(Instruction::timestamp(a));
    } else if (m == "GEN_PKT") {
      // GEN_PKT <ctrl|portnum> <template> [pad=N] operands...
      if (narg < 2) return fail("GEN_PKT dest template ...");
      uint32_t dest;
      if (toks[1] == "ctrl") {
        dest = kControllerPort;
      } else if (uint64_t pv; parse_u64(toks[1], &pv)) {
        dest = static_cast<uint32_t>(pv);
      } else {
        return fail("GEN_PKT bad dest");
      }
      if (!u64_arg(2, &v)) return fail("GEN_PKT bad template");
      uint16_t pad = 0;
      size_t i = 3;
      if (i < toks.size() && toks[i].rfind("pad=", 0) == 0) {
        uint64_t p;
        if (!parse_u64(toks[i].substr(4), &p)) return fail("GEN_PKT bad pad");
        pad = static_cast<uint16_t>(p);
        ++i;
      }
      std::vector<Operand> flds;
      for (; i < toks.size(); ++i) {
        Operand f;
        if (!parse_operand(toks[i], &f)) return fail("GEN_PKT bad field");
        flds.push_back(f);
      }
      b.instructions.push_back(
          Instruction::gen_pkt(dest, static_cast<uint32_t>(v), flds, pad));
    } else if (m == "SAMPLE_TEST") {
      if (!handle_arg(1, &h) || !u64_arg(2, &v) || !field_arg(3, &a)) {
        return fail("SAMPLE_TEST smp n dst");
      }
      b.instructions.push_back(
          Instruction::sample_test(h, static_cast<uint32_t>(v), a));
    } else if (m == "OUTPUT") {
      if (!op_arg(1, &o)) return fail("OUTPUT port");
      b.instructions.push_back(Instruction::output(o));
    } else if (m == "GOTO_TABLE") {
      if (!u64_arg(1, &v)) return fail("GOTO_TABLE table");
      b.instructions.push_back(Instruction::goto_table(static_cast<uint32_t>(v)));
    } else if (m == "DROP") {
      b.instructions.push_back(Instruction::drop());
    } else if (m == "NOP") {
      b.instructions.push_back(Instruction::nop());
    } else if (m == "HALT") {
      b.instructions.push_back(Instruction::halt());
    } else if (m == ".active") {
      b.passive = false;
    } else {
      return fail("unknown mnemonic " + m);
    }
  }
  b.finalize();
  *out = std::move(b);
  return Errc::ok;
}

std::string disassemble(const ActionBlock& block) {
  std::ostringstream os;
  if (!block.passive) os << ".active\n";
  for (const auto& ins : block.instructions) {
    os << opcode_name(ins.op);
    switch (ins.op) {
      case Opcode::SET_FIELD:
        os << ' ' << ins.a.to_string() << ' ' << ins.src.imm;
        break;
      case Opcode::MOVE:
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::AND:
      case Opcode::OR:
        os << ' ' << ins.a.to_string() << ' ' << operand_to_text(ins.src);
        break;
      case Opcode::SHL:
      case Opcode::SHR:
        os << ' ' << ins.a.to_string() << ' ' << static_cast<int>(ins.shift);
        break;
      case Opcode::BRANCH_EQ:
      case Opcode::BRANCH_NE:
      case Opcode::BRANCH_GE:
      case Opcode::BRANCH_LT:
        os << ' ' << ins.a.to_string() << ' ' << operand_to_text(ins.src) << " +"
           << ins.offset;
        break;
      case Opcode::CNTR_ADD:
        os << ' ' << ins.res.to_string() << ' ' << operand_to_text(ins.src);
        if (ins.has_dst) os << ' ' << ins.a.to_string();
        break;
      case Opcode::CNTR_SET:
      case Opcode::REG_WRITE:
        os << ' ' << ins.res.to_string() << ' ' << operand_to_text(ins.src);
        break;
      case Opcode::METER_CHECK:
        os << ' ' << ins.res.to_string() << ' ' << operand_to_text(ins.src)
           << ' ' << ins.a.to_string();
        break;
      case Opcode::REG_READ:
        os << ' ' << ins.res.to_string() << ' ' << ins.a.to_string();
        break;
      case Opcode::STB_INSERT:
        os << ' ' << ins.res.to_string() << ' ' << ins.a.to_string() << ' '
           << operand_to_text(ins.src);
        break;
      case Opcode::STB_DELETE:
        os << ' ' << ins.res.to_string() << ' ' << ins.a.to_string();
        break;
      case Opcode::STB_LOOKUP:
        os << ' ' << ins.res.to_string() << ' ' << ins.a.to_string() << ' '
           << ins.c.to_string() << ' ' << ins.d.to_string();
        break;
      case Opcode::TIMESTAMP:
        os << ' ' << ins.a.to_string();
        break;
      case Opcode::GEN_PKT:
        if (ins.port == kControllerPort) {
          os << " ctrl";
        } else {
          os << ' ' << ins.port;
        }
        os << ' ' << ins.template_id;
        if (ins.pad_to) os << " pad=" << ins.pad_to;
        for (const auto& f : ins.fields) os << ' ' << operand_to_text(f);
        break;
      case Opcode::SAMPLE_TEST:
        os << ' ' << ins.res.to_string() << ' ' << ins.sample_n << ' '
           << ins.a.to_string();
        break;
      case Opcode::OUTPUT:
        os << ' ' << operand_to_text(ins.src);
        break;
      case Opcode::GOTO_TABLE:
        os << ' ' << ins.table;
        break;
      case Opcode::DROP:
      case Opcode::NOP:
      case Opcode::HALT:
        break;
    }
    os << '\n';
  }
  return os.str();
}

ActionBlock splice_before_terminal(const ActionBlock& base,
                                   const ActionBlock& code) {
  ActionBlock out;
  size_t n = base.instructions.size();
  size_t pos = n;
  if (n > 0 && is_terminal(base.instructions.back().op)) pos = n - 1;
  size_t k = code.instructions.size();

  out.instructions.reserve(n + k);
  for (size_t i = 0; i < pos; ++i) {
    Instruction ins = base.instructions[i];
    if (is_branch(ins.op)) {
      size_t target = i + static_cast<size_t>(ins.offset);
      if (target > pos) ins.offset += static_cast<int32_t>(k);
    }
    out.instructions.push_back(std::move(ins));
  }
  for (const auto& ins : code.instructions) out.instructions.push_back(ins);
  for (size_t i = pos; i < n; ++i) out.instructions.push_back(base.instructions[i]);

  out.passive = base.passive && code.passive;
  out.finalize();
  return out;
}

BlockBuilder& BlockBuilder::add(Instruction ins) {
  instrs_.push_back(std::move(ins));
  return *this;
}

BlockBuilder& BlockBuilder::branch_to(Opcode op, FieldRef a, Operand b,
                                      const std::string& label) {
  fixups_.emplace_back(instrs_.size(), label);
  instrs_.push_back(Instruction::branch(op, a, b, 1));
  return *this;
}

BlockBuilder& BlockBuilder::jump_to(const std::string& label, FieldRef scratch) {
  return branch_to(Opcode::BRANCH_GE, scratch, Operand::of_imm(0), label);
}

BlockBuilder& BlockBuilder::mark(const std::string& label) {
  if (labels_.count(label)) broken_ = true;
  labels_[label] = instrs_.size();
  return *this;
}

ActionBlock BlockBuilder::build(bool passive) {
  for (const auto& [at, label] : fixups_) {
    auto it = labels_.find(label);
    if (it == labels_.end() || it->second <= at) {
      broken_ = true;  // unknown or backward label
      break;
    }
    instrs_[at].offset = static_cast<int32_t>(it->second - at);
  }
  if (broken_) return {};
  ActionBlock b;
  b.instructions = std::move(instrs_);
  b.passive = passive;
  return b.finalize();
}

uint64_t estimate_throughput(const CostProfile& per_packet_cost,
                             uint64_t base_pps, uint64_t mem_budget_per_sec) {
  uint64_t mem = std::max<uint64_t>(1, per_packet_cost.mem_accesses);
  uint64_t by_mem = mem_budget_per_sec / mem;
  return std::min(base_pps, by_mem);
}

}  // namespace dnp
