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

#include "dnp/vm.hpp"

#include <map>

namespace dnp {

void ExecContext::load_params(ByteView p) {
  size_t n = std::min(p.size(), kMaxParamsBytes);
  for (size_t i = 0; i < kMaxParamsBytes; ++i) {
    metadata[kParamsMetaOffset + i] = i < n ? p[i] : 0;
  }
  params = p;
}

namespace {

// Read-through overlay so that all effects become visible to later
// instructions of the same block but reach the pool only on success.
struct EffectBuffer {
  ResourcePool* pool;
  std::map<uint32_t, CounterCell> counters;
  std::map<uint32_t, uint64_t> registers;
  std::map<uint32_t, MeterCell> meters;
  std::map<uint32_t, uint64_t> samples;
  struct StbShadow {
    std::map<Bytes, std::pair<bool, uint64_t>> view;  // present?, value
    size_t size = 0;
    uint32_t capacity = 0;
  };
  std::map<uint32_t, StbShadow> stbs;
  std::vector<StbWrite> stb_writes;

  CounterCell* counter(uint32_t idx) {
    auto it = counters.find(idx);
    if (it != counters.end()) return &it->second;
    CounterCell* c = pool->counter(idx);
    if (!c) return nullptr;
    return &counters.emplace(idx, *c).first->second;
  }
  uint64_t* reg(uint32_t idx) {
    auto it = registers.find(idx);
    if (it != registers.end()) return &it->second;
    uint64_t* r = pool->reg_cell(idx);
    if (!r) return nullptr;
    return &registers.emplace(idx, *r).first->second;
  }
  MeterCell* meter(uint32_t idx) {
    auto it = meters.find(idx);
    if (it != meters.end()) return &it->second;
    MeterCell* m = pool->meter(idx);
    if (!m) return nullptr;
    return &meters.emplace(idx, *m).first->second;
  }
  uint64_t* sample(uint32_t idx) {
    auto it = samples.find(idx);
    if (it != samples.end()) return &it->second;
    uint64_t* s = pool->sample_cell(idx);
    if (!s) return nullptr;
    return &samples.emplace(idx, *s).first->second;
  }
  StbShadow* stb(uint32_t idx) {
    auto it = stbs.find(idx);
    if (it != stbs.end()) return &it->second;
    const StateTableCell* s = pool->stb(idx);
    if (!s) return nullptr;
    StbShadow sh;
    sh.size = s->entries.size();
    sh.capacity = s->capacity;
    return &stbs.emplace(idx, std::move(sh)).first->second;
  }

  // returns presence/value through the shadow
  bool stb_present(uint32_t idx, const Bytes& key, uint64_t* value) {
    StbShadow* sh = stb(idx);
    if (!sh) return false;
    auto it = sh->view.find(key);
    if (it != sh->view.end()) {
      if (it->second.first && value) *value = it->second.second;
      return it->second.first;
    }
    auto v = pool->stb_lookup(idx, key);
    if (v && value) *value = *v;
    return v.has_value();
  }

  bool stb_insert(uint32_t idx, const Bytes& key, uint64_t value) {
    StbShadow* sh = stb(idx);
    if (!sh) return false;
    bool present = stb_present(idx, key, nullptr);
    bool accepted = present || sh->size < sh->capacity;
    if (accepted) {
      if (!present) sh->size++;
      sh->view[key] = {true, value};
    }
    stb_writes.push_back({idx, true, key, value, accepted});
    return true;
  }

  bool stb_delete(uint32_t idx, const Bytes& key) {
    StbShadow* sh = stb(idx);
    if (!sh) return false;
    if (stb_present(idx, key, nullptr)) sh->size--;
    sh->view[key] = {false, 0};
    stb_writes.push_back({idx, false, key, 0, true});
    return true;
  }

  void commit(uint64_t now) {
    for (auto& [idx, c] : counters) *pool->counter(idx) = c;
    for (auto& [idx, v] : registers) pool->reg_write(idx, v);
    for (auto& [idx, m] : meters) *pool->meter(idx) = m;
    for (auto& [idx, v] : samples) *pool->sample_cell(idx) = v;
    for (auto& w : stb_writes) {
      if (!w.accepted) {
        // replay the capacity drop so the diagnostic counter advances
        pool->stb_insert(w.stb_index, w.key, w.value, now);
      } else if (w.insert) {
        pool->stb_insert(w.stb_index, w.key, w.value, now);
      } else {
        pool->stb_delete(w.stb_index, w.key);
      }
    }
  }
};

struct Machine {
  ExecEnv& env;
  ExecContext& ctx;
  EffectBuffer fx;
  Errc err = Errc::ok;

  uint64_t now() const { return env.clock ? env.clock->now_ns() : 0; }

  bool fail(Errc e) {
    err = e;
    return false;
  }

  bool read_field(const FieldRef& f, uint64_t* out) {
    switch (f.space) {
      case FieldSpace::packet:
        if (!ctx.packet_present) return fail(Errc::packet_field_on_timer_context);
        *out = read_bits_u64(*ctx.packet, f.offset_bits, f.length_bits);
        return true;
      case FieldSpace::metadata:
        *out = read_bits_u64(ctx.metadata, f.offset_bits, f.length_bits);
        return true;
      case FieldSpace::reg: {
        uint32_t idx = f.offset_bits / 64;
        uint64_t* cell = fx.reg(idx);
        if (!cell) return fail(Errc::unallocated_resource);
        Bytes be(8);
        for (int i = 0; i < 8; ++i) be[i] = (*cell >> (8 * (7 - i))) & 0xff;
        *out = read_bits_u64(be, f.offset_bits % 64, f.length_bits);
        return true;
      }
    }
    return false;
  }

  bool write_field(const FieldRef& f, uint64_t value) {
    switch (f.space) {
      case FieldSpace::metadata:
        write_bits_u64(ctx.metadata, f.offset_bits, f.length_bits, value);
        return true;
      case FieldSpace::packet:
        if (!ctx.packet_present) return fail(Errc::packet_field_on_timer_context);
        write_bits_u64(*ctx.packet, f.offset_bits, f.length_bits, value);
        return true;
      case FieldSpace::reg:
        return fail(Errc::validation_failed);
    }
    return false;
  }

  bool eval(const Operand& o, uint64_t* out) {
    switch (o.kind) {
      case Operand::Kind::none:
        return fail(Errc::validation_failed);
      case Operand::Kind::field:
        return read_field(o.field, out);
      case Operand::Kind::imm:
        *out = o.imm_width >= 64 ? o.imm
                                 : (o.imm & ((1ull << o.imm_width) - 1));
        return true;
      case Operand::Kind::pkt_len:
        if (!ctx.packet_present) return fail(Errc::packet_field_on_timer_context);
        *out = ctx.packet->size();
        return true;
      case Operand::Kind::q_depth:
        if (!ctx.queue_ctx) return fail(Errc::unallocated_resource);
        *out = ctx.queue_depth;
        return true;
      case Operand::Kind::q_event:
        if (!ctx.queue_ctx) return fail(Errc::unallocated_resource);
        *out = ctx.queue_event;
        return true;
    }
    return false;
  }

  bool operand_width(const Operand& o, uint32_t* out) {
    switch (o.kind) {
      case Operand::Kind::field: *out = o.field.length_bits; return true;
      case Operand::Kind::imm: *out = o.imm_width; return true;
      case Operand::Kind::pkt_len: *out = 32; return true;
      case Operand::Kind::q_depth: *out = 32; return true;
      case Operand::Kind::q_event: *out = 8; return true;
      default: return false;
    }
  }

  Bytes key_bytes(const FieldRef& f) {
    if (f.space == FieldSpace::packet && ctx.packet_present) {
      return extract_bits(*ctx.packet, f.offset_bits, f.length_bits);
    }
    if (f.space == FieldSpace::metadata) {
      return extract_bits(ctx.metadata, f.offset_bits, f.length_bits);
    }
    return {};
  }
};

uint64_t trunc_to(uint64_t v, uint32_t bits) {
  return bits >= 64 ? v : (v & ((1ull << bits) - 1));
}

}  // namespace

Errc execute(const ActionBlock& block, ExecEnv& env, ExecContext& ctx,
             ExecResult* out) {
  Machine m{env, ctx, EffectBuffer{}, Errc::ok};
  m.fx.pool = env.pool;
  ExecResult res;
  const auto& code = block.instructions;
  size_t pc = 0;

  // resource existence is checked up front so a block never half-executes
  for (const Handle& h : block.declared_resources) {
    if (h.cls == ResClass::timer) continue;
    if (!env.pool->live(h)) return Errc::unallocated_resource;
  }

  while (pc < code.size()) {
    const Instruction& ins = code[pc];
    size_t next = pc + 1;
    uint64_t v = 0, w = 0;
    switch (ins.op) {
      case Opcode::SET_FIELD:
        if (!m.write_field(ins.a, ins.src.imm)) return m.err;
        break;
      case Opcode::MOVE:
        if (ins.src.kind == Operand::Kind::field &&
            ins.a.length_bits > 64) {
          // wide copy, bit-exact
          const FieldRef& s = ins.src.field;
          ByteView sv;
          if (s.space == FieldSpace::packet) {
            if (!ctx.packet_present) return Errc::packet_field_on_timer_context;
            sv = *ctx.packet;
          } else {
            sv = ctx.metadata;
          }
          if (ins.a.space == FieldSpace::metadata) {
            copy_bits(ctx.metadata, ins.a.offset_bits, sv, s.offset_bits,
                      ins.a.length_bits);
          } else {
            if (!ctx.packet_present) return Errc::packet_field_on_timer_context;
            copy_bits(*ctx.packet, ins.a.offset_bits, sv, s.offset_bits,
                      ins.a.length_bits);
          }
        } else {
          if (!m.eval(ins.src, &v)) return m.err;
          if (!m.write_field(ins.a, v)) return m.err;
        }
        break;
      case Opcode::ADD:
      case Opcode::SUB:
      case Opcode::AND:
      case Opcode::OR:
        if (!m.read_field(ins.a, &v) || !m.eval(ins.src, &w)) return m.err;
        switch (ins.op) {
          case Opcode::ADD: v = v + w; break;
          case Opcode::SUB: v = v - w; break;
          case Opcode::AND: v = v & w; break;
          default: v = v | w; break;
        }
        if (!m.write_field(ins.a, trunc_to(v, ins.a.length_bits))) return m.err;
        break;
      case Opcode::SHL:
      case Opcode::SHR:
        if (!m.read_field(ins.a, &v)) return m.err;
        v = ins.op == Opcode::SHL ? (v << ins.shift) : (v >> ins.shift);
        if (!m.write_field(ins.a, trunc_to(v, ins.a.length_bits))) return m.err;
        break;
      case Opcode::BRANCH_EQ:
      case Opcode::BRANCH_NE:
      case Opcode::BRANCH_GE:
      case Opcode::BRANCH_LT: {
        if (!m.read_field(ins.a, &v) || !m.eval(ins.src, &w)) return m.err;
        bool taken = false;
        switch (ins.op) {
          case Opcode::BRANCH_EQ: taken = v == w; break;
          case Opcode::BRANCH_NE: taken = v != w; break;
          case Opcode::BRANCH_GE: taken = v >= w; break;
          default: taken = v < w; break;
        }
        if (taken) next = pc + static_cast<size_t>(ins.offset);
        break;
      }
      case Opcode::CNTR_ADD: {
        CounterCell* c = m.fx.counter(ins.res.index);
        if (!c) return Errc::unallocated_resource;
        if (!m.eval(ins.src, &v)) return m.err;
        c->value += v;
        // the post-add value lands in metadata so threshold tests need no
        // second read
        if (ins.has_dst && !m.write_field(ins.a, c->value)) return m.err;
        break;
      }
      case Opcode::CNTR_SET: {
        CounterCell* c = m.fx.counter(ins.res.index);
        if (!c) return Errc::unallocated_resource;
        if (!m.eval(ins.src, &v)) return m.err;
        c->value = v;
        break;
      }
      case Opcode::METER_CHECK: {
        MeterCell* mt = m.fx.meter(ins.res.index);
        if (!mt) return Errc::unallocated_resource;
        if (!m.eval(ins.src, &v)) return m.err;
        uint8_t color = mt->check(m.now(), v);
        if (!m.write_field(ins.a, color)) return m.err;
        break;
      }
      case Opcode::REG_READ: {
        uint64_t* r = m.fx.reg(ins.res.index);
        if (!r) return Errc::unallocated_resource;
        if (!m.write_field(ins.a, *r)) return m.err;
        break;
      }
      case Opcode::REG_WRITE: {
        uint64_t* r = m.fx.reg(ins.res.index);
        if (!r) return Errc::unallocated_resource;
        if (!m.eval(ins.src, &v)) return m.err;
        *r = v;
        break;
      }
      case Opcode::STB_INSERT: {
        Bytes key = m.key_bytes(ins.a);
        const StateTableCell* s = env.pool->stb(ins.res.index);
        if (!s) return Errc::unallocated_resource;
        if (ins.a.length_bits != s->key_width_bits) return Errc::key_width_mismatch;
        if (!m.eval(ins.src, &v)) return m.err;
        if (!m.fx.stb_insert(ins.res.index, key, v)) return Errc::unallocated_resource;
        break;
      }
      case Opcode::STB_DELETE: {
        Bytes key = m.key_bytes(ins.a);
        const StateTableCell* s = env.pool->stb(ins.res.index);
        if (!s) return Errc::unallocated_resource;
        if (ins.a.length_bits != s->key_width_bits) return Errc::key_width_mismatch;
        if (!m.fx.stb_delete(ins.res.index, key)) return Errc::unallocated_resource;
        break;
      }
      case Opcode::STB_LOOKUP: {
        Bytes key = m.key_bytes(ins.a);
        const StateTableCell* s = env.pool->stb(ins.res.index);
        if (!s) return Errc::unallocated_resource;
        if (ins.a.length_bits != s->key_width_bits) return Errc::key_width_mismatch;
        uint64_t val = 0;
        bool found = m.fx.stb_present(ins.res.index, key, &val);
        if (!m.write_field(ins.c, found ? val : 0)) return m.err;
        if (!m.write_field(ins.d, found ? 1 : 0)) return m.err;
        break;
      }
      case Opcode::TIMESTAMP:
        if (!m.write_field(ins.a, m.now())) return m.err;
        break;
      case Opcode::GEN_PKT: {
        Report rep;
        rep.dest_port = ins.port;
        rep.template_id = ins.template_id;
        rep.ts = m.now();
        size_t bit_len = 0;
        Bytes payload;
        for (const auto& f : ins.fields) {
          uint32_t width = 0;
          if (!m.operand_width(f, &width)) return Errc::validation_failed;
          if (!m.eval(f, &v)) return m.err;
          payload.resize((bit_len + width + 7) / 8, 0);
          write_bits_u64(payload, bit_len, width, v);
          bit_len += width;
        }
        if (ins.pad_to > payload.size()) payload.resize(ins.pad_to, 0);
        rep.payload = std::move(payload);
        res.reports.push_back(std::move(rep));
        break;
      }
      case Opcode::SAMPLE_TEST: {
        uint64_t* s = m.fx.sample(ins.res.index);
        if (!s) return Errc::unallocated_resource;
        // deterministic 1-in-N: fires on the 1st, N+1st, ... matched packet
        uint64_t hit = (*s % ins.sample_n) == 0 ? 1 : 0;
        (*s)++;
        if (!m.write_field(ins.a, hit)) return m.err;
        break;
      }
      case Opcode::OUTPUT:
        if (!ctx.packet_present) return Errc::packet_field_on_timer_context;
        if (!m.eval(ins.src, &v)) return m.err;
        res.disp = Disposition::output;
        res.out_port = static_cast<uint32_t>(v);
        next = code.size();
        break;
      case Opcode::GOTO_TABLE:
        if (!ctx.packet_present) return Errc::packet_field_on_timer_context;
        res.disp = Disposition::goto_table;
        res.next_table = ins.table;
        next = code.size();
        break;
      case Opcode::DROP:
        if (!ctx.packet_present) return Errc::packet_field_on_timer_context;
        res.disp = Disposition::drop;
        next = code.size();
        break;
      case Opcode::NOP:
        break;
      case Opcode::HALT:
        next = code.size();
        break;
    }
    if (m.err != Errc::ok) return m.err;
    pc = next;
  }

  // effects become visible only now
  m.fx.commit(m.now());
  res.stb_writes = std::move(m.fx.stb_writes);
  if (out) *out = std::move(res);
  return Errc::ok;
}

}  // namespace dnp
