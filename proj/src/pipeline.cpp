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

#include "dnp/pipeline.hpp"

#include <algorithm>

#include "json.hpp"

namespace dnp {

namespace {

ActionBlock builtin_miss_block() {
  ActionBlock b;
  b.instructions.push_back(
      Instruction::gen_pkt(kControllerPort, kTplMiss, {}, 0));
  b.instructions.push_back(Instruction::drop());
  return b.finalize();
}

ActionBlock builtin_continue_block() {
  ActionBlock b;
  b.instructions.push_back(Instruction::halt());
  return b.finalize();
}

void sort_entries(std::vector<FlowEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const FlowEntry& a, const FlowEntry& b) {
              if (a.priority != b.priority) return a.priority > b.priority;
              return a.entry_id < b.entry_id;
            });
}

}  // namespace

Device::Device(uint32_t id, std::string name, const DeviceCaps& caps,
               const DeviceLimits& limits, const PoolSizes& pools,
               std::shared_ptr<Clock> clock)
    : id_(id),
      name_(std::move(name)),
      caps_(caps),
      limits_(limits),
      clock_(std::move(clock)),
      pool_(pools) {
  if (!clock_) {
    auto vc = std::make_shared<VirtualClock>();
    vclock_ = vc.get();
    clock_ = vc;
  } else {
    vclock_ = dynamic_cast<VirtualClock*>(clock_.get());
  }
  // builtin slot 0: table-miss default (drop + report); slot 1: continue
  ValidationReport rep;
  ActionBlock miss = builtin_miss_block();
  validate(miss, vm_limits(), &rep);
  BlockRef mb = make_loaded(0, miss, rep);
  slots_[0] = ActionSlot{mb, mb, 1};
  ActionBlock cont = builtin_continue_block();
  validate(cont, vm_limits(), &rep);
  BlockRef cb = make_loaded(1, cont, rep);
  slots_[1] = ActionSlot{cb, cb, 1};
}

VmLimits Device::vm_limits() const {
  return VmLimits{limits_.mtu_bytes, pool_.sizes().registers};
}

Errc Device::add_port(uint32_t port) {
  if (port == kControllerPort) return Errc::invalid_argument;
  if (ports_.count(port)) return Errc::invalid_argument;
  Port p;
  p.id = port;
  ports_[port] = std::move(p);
  return Errc::ok;
}

std::vector<uint32_t> Device::port_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& [id, p] : ports_) ids.push_back(id);
  return ids;
}

Port* Device::port(uint32_t id) {
  auto it = ports_.find(id);
  return it == ports_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

Errc Device::create_table(const TableDef& def, const TablePosition& pos) {
  if (tables_.count(def.table_id)) return Errc::duplicate_table_id;
  uint32_t width = 0;
  for (const FieldRef& f : def.key_spec) {
    if (f.length_bits == 0 || f.length_bits > 128 ||
        f.space == FieldSpace::reg) {
      last_error_ = "bad key_spec field " + f.to_string();
      return Errc::invalid_argument;
    }
    width += f.length_bits;
  }
  if (width > 1024) return Errc::invalid_argument;
  if (!slot_exists(def.miss_slot)) return Errc::dangling_action_ptr;

  size_t at = chain_.size();
  switch (pos.kind) {
    case TablePosition::Kind::at_start:
      at = 0;
      break;
    case TablePosition::Kind::at_end:
      at = chain_.size();
      break;
    case TablePosition::Kind::after: {
      auto it = std::find(chain_.begin(), chain_.end(), pos.after_table);
      if (it == chain_.end()) return Errc::invalid_position;
      at = static_cast<size_t>(it - chain_.begin()) + 1;
      break;
    }
  }

  FlowTable t;
  t.table_id = def.table_id;
  t.key_spec = def.key_spec;
  t.key_width_bits = width;
  t.miss_slot = def.miss_slot;
  t.writable_by_actions = def.writable_by_actions;
  tables_[def.table_id] = std::move(t);
  chain_.insert(chain_.begin() + static_cast<ptrdiff_t>(at), def.table_id);
  slot_ref(def.miss_slot);
  return Errc::ok;
}

Errc Device::delete_table(uint32_t table_id) {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) return Errc::no_such_table;
  for (const FlowEntry& e : it->second.entries) slot_unref(e.action_slot);
  slot_unref(it->second.miss_slot);
  tables_.erase(it);
  chain_.erase(std::remove(chain_.begin(), chain_.end(), table_id),
               chain_.end());
  return Errc::ok;
}

const FlowTable* Device::table(uint32_t table_id) const {
  auto it = tables_.find(table_id);
  return it == tables_.end() ? nullptr : &it->second;
}

FlowTable* Device::table(uint32_t table_id) {
  auto it = tables_.find(table_id);
  return it == tables_.end() ? nullptr : &it->second;
}

Errc Device::insert_entry(uint32_t table_id, const MatchKey& key,
                          int32_t priority, uint32_t action_slot,
                          const Bytes& params, uint64_t* entry_id,
                          uint64_t want_entry_id) {
  FlowTable* t = table(table_id);
  if (!t) return Errc::no_such_table;
  size_t want_bytes = (t->key_width_bits + 7) / 8;
  if (key.value.size() != want_bytes || key.mask.size() != want_bytes) {
    return Errc::key_width_mismatch;
  }
  for (size_t i = 0; i < key.value.size(); ++i) {
    if (key.value[i] & ~key.mask[i]) {
      last_error_ = "match value has bits outside mask";
      return Errc::invalid_argument;
    }
  }
  if (params.size() > kMaxParamsBytes) return Errc::invalid_argument;
  if (!slot_exists(action_slot)) return Errc::dangling_action_ptr;
  for (const FlowEntry& e : t->entries) {
    if (e.priority == priority && e.key == key) return Errc::duplicate_entry;
    if (want_entry_id && e.entry_id == want_entry_id) return Errc::duplicate_entry;
  }
  FlowEntry e;
  e.entry_id = want_entry_id ? want_entry_id : t->next_entry_id;
  t->next_entry_id = std::max<uint64_t>(t->next_entry_id, e.entry_id) + 1;
  e.key = key;
  e.priority = priority;
  e.action_slot = action_slot;
  e.params = params;
  if (entry_id) *entry_id = e.entry_id;
  t->entries.push_back(std::move(e));
  sort_entries(t->entries);
  slot_ref(action_slot);
  return Errc::ok;
}

Errc Device::delete_entry(uint32_t table_id, uint64_t entry_id) {
  FlowTable* t = table(table_id);
  if (!t) return Errc::no_such_table;
  for (auto it = t->entries.begin(); it != t->entries.end(); ++it) {
    if (it->entry_id == entry_id) {
      slot_unref(it->action_slot);
      t->entries.erase(it);
      return Errc::ok;
    }
  }
  return Errc::no_such_entry;
}

Errc Device::modify_entry(uint32_t table_id, uint64_t entry_id,
                          std::optional<uint32_t> new_slot,
                          std::optional<Bytes> new_params) {
  FlowTable* t = table(table_id);
  if (!t) return Errc::no_such_table;
  for (FlowEntry& e : t->entries) {
    if (e.entry_id != entry_id) continue;
    if (new_slot) {
      if (!slot_exists(*new_slot)) return Errc::dangling_action_ptr;
      slot_ref(*new_slot);
      slot_unref(e.action_slot);
      e.action_slot = *new_slot;
    }
    if (new_params) {
      if (new_params->size() > kMaxParamsBytes) return Errc::invalid_argument;
      e.params = *new_params;
    }
    return Errc::ok;
  }
  return Errc::no_such_entry;
}

Errc Device::lookup(uint32_t table_id, ByteView key_bits, size_t width_bits,
                    const FlowEntry** out) const {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) return Errc::no_such_table;
  const FlowTable& t = it->second;
  if (width_bits != t.key_width_bits ||
      key_bits.size() != (t.key_width_bits + 7) / 8) {
    return Errc::key_width_mismatch;
  }
  // entries are kept in (priority desc, entry_id asc) order
  for (const FlowEntry& e : t.entries) {
    if (ternary_match(key_bits, e.key.value, e.key.mask)) {
      if (out) *out = &e;
      return Errc::ok;
    }
  }
  if (out) *out = nullptr;
  return Errc::ok;
}

const FlowEntry* Device::find_entry(uint32_t table_id, const MatchKey& key,
                                    int32_t priority) const {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) return nullptr;
  for (const FlowEntry& e : it->second.entries) {
    if (e.priority == priority && e.key == key) return &e;
  }
  return nullptr;
}

const FlowEntry* Device::entry_by_id(uint32_t table_id,
                                     uint64_t entry_id) const {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) return nullptr;
  for (const FlowEntry& e : it->second.entries) {
    if (e.entry_id == entry_id) return &e;
  }
  return nullptr;
}

Errc Device::set_table_miss(uint32_t table_id, uint32_t slot, uint32_t* prev) {
  FlowTable* t = table(table_id);
  if (!t) return Errc::no_such_table;
  if (!slot_exists(slot)) return Errc::dangling_action_ptr;
  if (prev) *prev = t->miss_slot;
  slot_ref(slot);
  slot_unref(t->miss_slot);
  t->miss_slot = slot;
  return Errc::ok;
}

// ---------------------------------------------------------------------------
// Action store
// ---------------------------------------------------------------------------

Errc Device::validate_for_device(const ActionBlock& block,
                                 ValidationReport* rep) {
  VmError err = validate(block, vm_limits(), rep);
  if (err) {
    last_error_ = std::string(errc_name(err.code)) + " at instruction " +
                  std::to_string(err.index) + ": " + err.what;
    return err.code == Errc::backward_branch ||
                   err.code == Errc::undeclared_resource ||
                   err.code == Errc::packet_write_in_passive_mode ||
                   err.code == Errc::block_too_long
               ? err.code
               : Errc::validation_failed;
  }
  if (!block.passive && !permissive_) {
    last_error_ = "active (packet-writing) block outside permissive mode";
    return Errc::validation_failed;
  }
  return Errc::ok;
}

BlockRef Device::make_loaded(uint32_t slot, const ActionBlock& block,
                             const ValidationReport& rep) {
  auto* lb = new LoadedBlock{slot, block, rep, encode_block(block)};
  ResourcePool* pool = &pool_;
  for (const Handle& h : block.declared_resources) pool->block_ref(h);
  std::set<Handle> held = block.declared_resources;
  return BlockRef(lb, [pool, held](const LoadedBlock* p) {
    for (const Handle& h : held) pool->block_unref(h);
    delete p;
  });
}

Errc Device::load_action(const ActionBlock& block, uint32_t* slot) {
  ValidationReport rep;
  Errc rc = validate_for_device(block, &rep);
  if (rc != Errc::ok) return rc;
  for (const Handle& h : block.declared_resources) {
    if (!pool_.live(h)) {
      last_error_ = "block references unallocated " + h.to_string();
      return Errc::unallocated_resource;
    }
  }
  uint32_t idx = 2;  // 0 and 1 are builtin
  while (slots_.count(idx)) ++idx;
  BlockRef b = make_loaded(idx, block, rep);
  slots_[idx] = ActionSlot{b, b, 0};
  if (slot) *slot = idx;
  return Errc::ok;
}

Errc Device::delete_action(uint32_t slot) {
  auto it = slots_.find(slot);
  if (it == slots_.end()) return Errc::no_such_slot;
  if (slot < 2 || it->second.refcount > 0) return Errc::slot_in_use;
  slots_.erase(it);
  return Errc::ok;
}

Errc Device::switch_action_pointer(uint32_t slot, uint32_t src_slot,
                                   uint32_t* prev_home) {
  auto it = slots_.find(slot);
  if (it == slots_.end()) return Errc::no_such_slot;
  auto src = slots_.find(src_slot);
  if (src == slots_.end() || !src->second.home) return Errc::block_not_loaded;
  if (prev_home) *prev_home = it->second.cur->home_slot;
  // single assignment at a packet boundary: atomic per packet
  it->second.cur = src->second.home;
  return Errc::ok;
}

Errc Device::switch_action_raw(uint32_t slot, BlockRef block, BlockRef* prev) {
  auto it = slots_.find(slot);
  if (it == slots_.end()) return Errc::no_such_slot;
  if (!block) return Errc::block_not_loaded;
  if (prev) *prev = it->second.cur;
  it->second.cur = std::move(block);
  return Errc::ok;
}

BlockRef Device::slot_block(uint32_t slot) const {
  auto it = slots_.find(slot);
  return it == slots_.end() ? nullptr : it->second.cur;
}

BlockRef Device::slot_home(uint32_t slot) const {
  auto it = slots_.find(slot);
  return it == slots_.end() ? nullptr : it->second.home;
}

std::vector<uint32_t> Device::slot_ids(bool include_builtin) const {
  std::vector<uint32_t> ids;
  for (const auto& [idx, s] : slots_) {
    if (include_builtin || idx >= 2) ids.push_back(idx);
  }
  return ids;
}

uint32_t Device::slot_refcount(uint32_t slot) const {
  auto it = slots_.find(slot);
  return it == slots_.end() ? 0 : it->second.refcount;
}

bool Device::slot_exists(uint32_t slot) const { return slots_.count(slot) > 0; }

void Device::slot_ref(uint32_t slot) {
  auto it = slots_.find(slot);
  if (it != slots_.end()) it->second.refcount++;
}

void Device::slot_unref(uint32_t slot) {
  auto it = slots_.find(slot);
  if (it != slots_.end() && it->second.refcount > 0) it->second.refcount--;
}

// ---------------------------------------------------------------------------
// Hooks
// ---------------------------------------------------------------------------

Errc Device::set_hook(uint32_t port, HookPoint point, uint32_t slot,
                      uint32_t* prev) {
  Port* p = this->port(port);
  if (!p) return Errc::no_such_port;
  if (slot != kNoSlot) {
    BlockRef b = slot_block(slot);
    if (!b) return Errc::no_such_slot;
    if (b->report.has_disposition) {
      last_error_ = "hook blocks cannot dispose of packets";
      return Errc::validation_failed;
    }
  }
  uint32_t* target = nullptr;
  switch (point) {
    case HookPoint::port_ingress: target = &p->ingress_hook; break;
    case HookPoint::port_egress: target = &p->egress_hook; break;
    case HookPoint::queue_enqueue: target = &p->queue.enqueue_hook; break;
    case HookPoint::queue_dequeue: target = &p->queue.dequeue_hook; break;
  }
  if (prev) *prev = *target;
  if (*target != kNoSlot) slot_unref(*target);
  *target = slot;
  if (slot != kNoSlot) slot_ref(slot);
  return Errc::ok;
}

uint32_t Device::hook(uint32_t port, HookPoint point) const {
  auto it = ports_.find(port);
  if (it == ports_.end()) return kNoSlot;
  switch (point) {
    case HookPoint::port_ingress: return it->second.ingress_hook;
    case HookPoint::port_egress: return it->second.egress_hook;
    case HookPoint::queue_enqueue: return it->second.queue.enqueue_hook;
    case HookPoint::queue_dequeue: return it->second.queue.dequeue_hook;
  }
  return kNoSlot;
}

// ---------------------------------------------------------------------------
// Packet path
// ---------------------------------------------------------------------------

void Device::route_reports(std::vector<Report>& reports,
                           ForwardingOutcome* outcome) {
  for (Report& r : reports) {
    if (r.dest_port == kControllerPort) {
      if (outcome) outcome->reports.push_back(r);
      if (report_sink_) report_sink_(r);
    } else if (ports_.count(r.dest_port)) {
      // injected packet: enters the egress queue directly, never the tables
      queue_enqueue(r.dest_port, r.payload);
    }
  }
}

void Device::diag_report(uint32_t tpl, uint64_t a, uint64_t b,
                         ForwardingOutcome* outcome) {
  Report r;
  r.dest_port = kControllerPort;
  r.template_id = tpl;
  r.ts = clock_->now_ns();
  r.payload.resize(16);
  write_bits_u64(r.payload, 0, 64, a);
  write_bits_u64(r.payload, 64, 64, b);
  if (outcome) outcome->reports.push_back(r);
  if (report_sink_) report_sink_(r);
}

Errc Device::run_observer(uint32_t slot, ExecContext& ctx,
                          ForwardingOutcome* out) {
  if (slot == kNoSlot) return Errc::ok;
  BlockRef b = slot_block(slot);
  if (!b) return Errc::no_such_slot;
  ExecEnv env{&pool_, clock_.get()};
  ExecResult er;
  Errc rc = execute(b->block, env, ctx, &er);
  if (rc != Errc::ok) return rc;
  route_reports(er.reports, out);
  if (out) {
    for (auto& w : er.stb_writes) out->tables_written.push_back(std::move(w));
  }
  return Errc::ok;
}

ForwardingOutcome Device::process_packet(const PacketBuffer& pkt) {
  ForwardingOutcome outcome;
  packets_processed_++;

  auto drop = [&](Errc why, uint64_t& stat) {
    stat++;
    outcome.dropped = true;
    outcome.drop_reason = why;
  };

  Port* in_port = port(pkt.ingress_port);
  if (!in_port) {
    drop(Errc::no_such_port, drops_.ts_violation);
    return outcome;
  }
  if (pkt.arrival_ts < in_port->last_arrival_ts) {
    drop(Errc::invalid_argument, drops_.ts_violation);
    return outcome;
  }
  in_port->last_arrival_ts = pkt.arrival_ts;

  if (pkt.bytes.size() > limits_.mtu_bytes) {
    drop(Errc::malformed_packet, drops_.malformed);
    return outcome;
  }
  if (chain_.empty()) {
    drop(Errc::no_such_table, drops_.no_tables);
    return outcome;
  }

  Bytes packet = pkt.bytes;
  ExecContext ctx;
  ctx.packet = &packet;
  ctx.packet_present = true;
  ctx.ingress_port = pkt.ingress_port;
  ctx.reset_metadata();

  if (run_observer(in_port->ingress_hook, ctx, &outcome) != Errc::ok) {
    diag_report(kTplExecAbort, id_, 0, &outcome);
    drop(Errc::unallocated_resource, drops_.exec_abort);
    return outcome;
  }

  uint32_t cur = chain_.front();
  bool first_stage = true;
  for (uint32_t stage = 0; stage < limits_.max_stages; ++stage) {
    const FlowTable* t = table(cur);
    if (!t) {
      diag_report(kTplBadGoto, cur, 0, &outcome);
      drop(Errc::no_such_table, drops_.bad_goto);
      return outcome;
    }

    // key extraction: packet + metadata, bit-concatenated in key_spec order
    Bytes key((t->key_width_bits + 7) / 8, 0);
    size_t at = 0;
    for (const FieldRef& f : t->key_spec) {
      if (f.space == FieldSpace::packet) {
        if (first_stage &&
            f.offset_bits + f.length_bits > packet.size() * 8) {
          // shorter than the entry table's key extent
          drop(Errc::malformed_packet, drops_.malformed);
          return outcome;
        }
        copy_bits(key, at, packet, f.offset_bits, f.length_bits);
      } else {
        copy_bits(key, at, ctx.metadata, f.offset_bits, f.length_bits);
      }
      at += f.length_bits;
    }
    first_stage = false;

    const FlowEntry* entry = nullptr;
    lookup(cur, key, t->key_width_bits, &entry);
    uint32_t slot = entry ? entry->action_slot : t->miss_slot;
    BlockRef block = slot_block(slot);
    if (!block) {
      diag_report(kTplExecAbort, id_, slot, &outcome);
      drop(Errc::no_such_slot, drops_.exec_abort);
      return outcome;
    }

    ctx.load_params(entry ? ByteView(entry->params) : ByteView());
    ExecEnv env{&pool_, clock_.get()};
    ExecResult er;
    Errc rc = execute(block->block, env, ctx, &er);
    if (rc != Errc::ok) {
      diag_report(kTplExecAbort, id_, static_cast<uint64_t>(rc), &outcome);
      drop(rc, drops_.exec_abort);
      return outcome;
    }
    route_reports(er.reports, &outcome);
    for (auto& w : er.stb_writes) outcome.tables_written.push_back(std::move(w));

    if (er.disp == Disposition::output) {
      Port* out_p = port(er.out_port);
      if (!out_p) {
        drop(Errc::no_such_port, drops_.no_disposition);
        return outcome;
      }
      ExecContext ectx;
      ectx.packet = &packet;
      ectx.packet_present = true;
      ectx.ingress_port = pkt.ingress_port;
      if (run_observer(out_p->egress_hook, ectx, &outcome) != Errc::ok) {
        diag_report(kTplExecAbort, id_, 0, &outcome);
        drop(Errc::unallocated_resource, drops_.exec_abort);
        return outcome;
      }
      if (!queue_enqueue(er.out_port, packet)) {
        outcome.dropped = true;
        outcome.drop_reason = Errc::table_full;
        return outcome;
      }
      outcome.emitted.emplace_back(er.out_port, packet);
      return outcome;
    }
    if (er.disp == Disposition::drop) {
      outcome.dropped = true;
      return outcome;
    }
    if (er.disp == Disposition::goto_table) {
      cur = er.next_table;
      continue;
    }
    // fallthrough: next table in the chain
    auto it = std::find(chain_.begin(), chain_.end(), cur);
    if (it == chain_.end() || ++it == chain_.end()) {
      drop(Errc::no_such_table, drops_.no_disposition);
      return outcome;
    }
    cur = *it;
  }

  diag_report(kTplStageLimit, id_, limits_.max_stages, &outcome);
  drop(Errc::stage_limit_exceeded, drops_.stage_limit);
  return outcome;
}

// ---------------------------------------------------------------------------
// Queues
// ---------------------------------------------------------------------------

Errc Device::set_queue_bounds(uint32_t port, uint64_t capacity, uint64_t low,
                              uint64_t high) {
  Port* p = this->port(port);
  if (!p) return Errc::no_such_port;
  if (low > high || high > capacity) return Errc::invalid_argument;
  p->queue.capacity = capacity;
  p->queue.low_watermark = low;
  p->queue.high_watermark = high;
  return Errc::ok;
}

bool Device::queue_enqueue(uint32_t port, Bytes bytes, bool notify) {
  Port* p = this->port(port);
  if (!p) return false;
  EgressQueue& q = p->queue;
  if (q.depth >= q.capacity) {
    drops_.queue_overflow++;
    return false;
  }
  q.fifo.push_back(std::move(bytes));
  q.depth++;
  if (q.enqueue_hook != kNoSlot) {
    ExecContext ctx;
    Bytes& back = q.fifo.back();
    ctx.packet = &back;
    ctx.packet_present = true;
    ctx.queue_ctx = true;
    ctx.queue_depth = q.depth;
    ctx.queue_event = 0;
    run_observer(q.enqueue_hook, ctx, nullptr);
  }
  if (notify && queue_sink_) {
    queue_sink_(port);
  } else if (!queue_sink_) {
    // standalone mode: queues auto-drain
    Bytes out;
    queue_dequeue(port, &out);
  }
  return true;
}

bool Device::queue_dequeue(uint32_t port, Bytes* out) {
  Port* p = this->port(port);
  if (!p || p->queue.fifo.empty()) return false;
  EgressQueue& q = p->queue;
  Bytes bytes = std::move(q.fifo.front());
  q.fifo.pop_front();
  q.depth--;
  if (q.dequeue_hook != kNoSlot) {
    ExecContext ctx;
    ctx.packet = &bytes;
    ctx.packet_present = true;
    ctx.queue_ctx = true;
    ctx.queue_depth = q.depth;
    ctx.queue_event = 1;
    run_observer(q.dequeue_hook, ctx, nullptr);
  }
  if (out) *out = std::move(bytes);
  return true;
}

size_t Device::queue_peek_size(uint32_t port) const {
  auto it = ports_.find(port);
  if (it == ports_.end() || it->second.queue.fifo.empty()) return 0;
  return it->second.queue.fifo.front().size();
}

uint64_t Device::queue_depth(uint32_t port) const {
  auto it = ports_.find(port);
  return it == ports_.end() ? 0 : it->second.queue.depth;
}

// ---------------------------------------------------------------------------
// Timers
// ---------------------------------------------------------------------------

Errc Device::set_timer(uint64_t interval_ns, TimerMode mode, uint32_t slot,
                       uint32_t* timer_id) {
  BlockRef b = slot_block(slot);
  if (!b) return Errc::no_such_slot;
  if (b->report.needs_packet) return Errc::action_needs_packet;
  Errc rc =
      pool_.set_timer(interval_ns, mode, slot, clock_->now_ns(), timer_id);
  if (rc != Errc::ok) return rc;
  slot_ref(slot);
  if (timer_arm_hook_) timer_arm_hook_(clock_->now_ns() + interval_ns);
  return Errc::ok;
}

Errc Device::cancel_timer(uint32_t timer_id) {
  const TimerEntry* t = pool_.timer(timer_id);
  if (!t) return Errc::no_such_timer;
  slot_unref(t->linked_slot);
  return pool_.cancel_timer(timer_id);
}

std::vector<FiredTimer> Device::advance_clock(uint64_t to_ns) {
  std::vector<FiredTimer> fired;
  if (!vclock_) return fired;
  std::vector<TimerEntry> due = pool_.pop_due_timers(to_ns);
  for (const TimerEntry& t : due) {
    vclock_->set_ns(t.next_fire);
    BlockRef b = slot_block(t.linked_slot);
    if (b) {
      ExecContext ctx;
      ctx.packet_present = false;
      ExecEnv env{&pool_, clock_.get()};
      ExecResult er;
      if (execute(b->block, env, ctx, &er) == Errc::ok) {
        route_reports(er.reports, nullptr);
      } else {
        diag_report(kTplExecAbort, id_, t.linked_slot, nullptr);
      }
    }
    if (t.mode == TimerMode::one_shot) slot_unref(t.linked_slot);
    fired.push_back({t.next_fire, t.timer_id, t.linked_slot});
  }
  if (to_ns > vclock_->now_ns()) vclock_->set_ns(to_ns);
  return fired;
}

// ---------------------------------------------------------------------------
// Snapshot / audit
// ---------------------------------------------------------------------------

std::string Device::snapshot_json() const {
  nlohmann::json j;
  nlohmann::json jt = nlohmann::json::array();
  for (uint32_t tid : chain_) {
    const FlowTable& t = tables_.at(tid);
    nlohmann::json ks = nlohmann::json::array();
    for (const FieldRef& f : t.key_spec) ks.push_back(f.to_string());
    nlohmann::json ents = nlohmann::json::array();
    for (const FlowEntry& e : t.entries) {
      ents.push_back({{"id", e.entry_id},
                      {"key", to_hex(e.key.value)},
                      {"mask", to_hex(e.key.mask)},
                      {"priority", e.priority},
                      {"slot", e.action_slot},
                      {"params", to_hex(e.params)}});
    }
    jt.push_back({{"id", t.table_id},
                  {"key_spec", ks},
                  {"miss_slot", t.miss_slot},
                  {"writable", t.writable_by_actions},
                  {"entries", ents}});
  }
  j["tables"] = jt;

  nlohmann::json js;
  for (const auto& [idx, s] : slots_) {
    js[std::to_string(idx)] = {{"home", to_hex(s.home->encoding)},
                               {"cur", to_hex(s.cur->encoding)},
                               {"refcount", s.refcount}};
  }
  j["actions"] = js;

  nlohmann::json jp;
  for (const auto& [pid, p] : ports_) {
    jp[std::to_string(pid)] = {
        {"ingress_hook", p.ingress_hook},
        {"egress_hook", p.egress_hook},
        {"q_enq_hook", p.queue.enqueue_hook},
        {"q_deq_hook", p.queue.dequeue_hook},
        {"q_capacity", p.queue.capacity},
        {"q_low", p.queue.low_watermark},
        {"q_high", p.queue.high_watermark},
        {"q_depth", p.queue.depth}};
  }
  j["ports"] = jp;
  j["pools"] = nlohmann::json::parse(pool_.snapshot_json());
  j["permissive"] = permissive_;
  return j.dump();
}

std::string Device::dump_config_json() const {
  nlohmann::json j;
  j["mtu"] = limits_.mtu_bytes;
  j["max_stages"] = limits_.max_stages;
  nlohmann::json ports = nlohmann::json::array();
  for (const auto& [pid, p] : ports_) ports.push_back(pid);
  j["ports"] = ports;
  j["pools"] = {{"counters", pool_.sizes().counters},
                {"meters", pool_.sizes().meters},
                {"registers", pool_.sizes().registers},
                {"state_tables", pool_.sizes().state_tables},
                {"stb_capacity", pool_.sizes().stb_default_capacity},
                {"timers", pool_.sizes().timers},
                {"samples", pool_.sizes().samples}};
  j["caps"] = {{"base_pps", caps_.base_pps},
               {"mem_budget", caps_.mem_access_budget_per_sec},
               {"floor_pps", caps_.throughput_floor_pps}};

  nlohmann::json res = nlohmann::json::array();
  for (int c = 0; c < kResClassCount; ++c) {
    ResClass cls = static_cast<ResClass>(c);
    if (cls == ResClass::timer) continue;
    for (uint32_t i : pool_.allocated_indices(cls)) {
      nlohmann::json r = {{"class", res_class_name(cls)}};
      if (cls == ResClass::counter) {
        uint64_t v;
        CounterUnit u;
        pool_.counter_read(i, &v, &u);
        r["unit"] = u == CounterUnit::bytes ? "bytes" : "packets";
      } else if (cls == ResClass::state_table) {
        const StateTableCell* s = pool_.stb(i);
        r["key_width"] = s->key_width_bits;
        r["capacity"] = s->capacity;
      }
      res.push_back(r);
    }
  }
  j["resources"] = res;

  nlohmann::json queues = nlohmann::json::array();
  for (const auto& [pid, p] : ports_) {
    queues.push_back({{"port", pid},
                      {"capacity", p.queue.capacity},
                      {"low", p.queue.low_watermark},
                      {"high", p.queue.high_watermark}});
  }
  j["queues"] = queues;

  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [idx, s] : slots_) {
    if (idx < 2) continue;
    blocks["slot" + std::to_string(idx)] = disassemble(s.cur->block);
  }
  j["blocks"] = blocks;

  nlohmann::json tables = nlohmann::json::array();
  for (uint32_t tid : chain_) {
    const FlowTable& t = tables_.at(tid);
    nlohmann::json ks = nlohmann::json::array();
    for (const FieldRef& f : t.key_spec) ks.push_back(f.to_string());
    nlohmann::json ents = nlohmann::json::array();
    for (const FlowEntry& e : t.entries) {
      ents.push_back({{"key", to_hex(e.key.value)},
                      {"mask", to_hex(e.key.mask)},
                      {"priority", e.priority},
                      {"action", "slot" + std::to_string(e.action_slot)},
                      {"params", to_hex(e.params)}});
    }
    tables.push_back({{"id", t.table_id},
                      {"key", ks},
                      {"miss", t.miss_slot == 0 ? std::string("drop_report")
                                                : (t.miss_slot == 1
                                                       ? std::string("continue")
                                                       : "slot" + std::to_string(
                                                                      t.miss_slot))},
                      {"entries", ents}});
  }
  j["tables"] = tables;
  return j.dump(2);
}

bool Device::audit_refcounts(std::string* what) const {
  std::map<uint32_t, uint32_t> want;
  for (const auto& [idx, s] : slots_) want[idx] = idx < 2 ? 1 : 0;
  for (const auto& [tid, t] : tables_) {
    want[t.miss_slot]++;
    for (const FlowEntry& e : t.entries) want[e.action_slot]++;
  }
  for (const auto& [pid, p] : ports_) {
    for (uint32_t h : {p.ingress_hook, p.egress_hook, p.queue.enqueue_hook,
                       p.queue.dequeue_hook}) {
      if (h != kNoSlot) want[h]++;
    }
  }
  // live timers pin their linked slots
  for (const TimerEntry& t : pool_.all_timers()) want[t.linked_slot]++;
  for (const auto& [idx, s] : slots_) {
    if (want[idx] != s.refcount) {
      if (what) {
        *what = "slot " + std::to_string(idx) + " refcount " +
                std::to_string(s.refcount) + " expected " +
                std::to_string(want[idx]);
      }
      return false;
    }
  }
  return true;
}

}  // namespace dnp
