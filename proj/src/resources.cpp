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

#include "dnp/resources.hpp"

#include <algorithm>

#include "json.hpp"

namespace dnp {

uint8_t MeterCell::check(uint64_t now_ns, uint64_t amount) {
  if (now_ns > last_ns) {
    uint64_t dt = now_ns - last_ns;
    // refill, saturating at the burst sizes
    auto refill = [dt](uint64_t tokens, uint64_t rate, uint64_t burst) {
      double add = static_cast<double>(rate) * static_cast<double>(dt) / 1e9;
      double t = static_cast<double>(tokens) + add;
      double cap = static_cast<double>(burst);
      return static_cast<uint64_t>(t > cap ? cap : t);
    };
    tokens_c = refill(tokens_c, cir_bps, cbs);
    tokens_p = refill(tokens_p, pir_bps, pbs);
    last_ns = now_ns;
  }
  if (tokens_p < amount) return 2;  // red
  tokens_p -= amount;
  if (tokens_c < amount) return 1;  // yellow
  tokens_c -= amount;
  return 0;  // green
}

uint32_t PoolSizes::of(ResClass c) const {
  switch (c) {
    case ResClass::counter: return counters;
    case ResClass::meter: return meters;
    case ResClass::reg: return registers;
    case ResClass::state_table: return state_tables;
    case ResClass::timer: return timers;
    case ResClass::sample: return samples;
  }
  return 0;
}

bool PoolStats::operator==(const PoolStats& o) const {
  for (int i = 0; i < kResClassCount; ++i) {
    if (per_class[i].capacity != o.per_class[i].capacity ||
        per_class[i].allocated != o.per_class[i].allocated ||
        per_class[i].free != o.per_class[i].free) {
      return false;
    }
  }
  return true;
}

template <typename T>
Errc ResourcePool::Slab<T>::take(uint32_t* idx) {
  for (uint32_t i = 0; i < used.size(); ++i) {
    if (!used[i]) {
      used[i] = true;
      cells[i] = T{};  // zero-initialized cell for the new tenant
      ++allocated;
      *idx = i;
      return Errc::ok;
    }
  }
  return Errc::pool_exhausted;
}

template <typename T>
Errc ResourcePool::Slab<T>::put(uint32_t idx) {
  if (idx >= used.size() || !used[idx]) return Errc::no_such_handle;
  used[idx] = false;
  cells[idx] = T{};  // clear contents on release
  --allocated;
  return Errc::ok;
}

ResourcePool::ResourcePool(const PoolSizes& sizes) : sizes_(sizes) {
  counters_.cells.resize(sizes.counters);
  counters_.used.resize(sizes.counters, false);
  meters_.cells.resize(sizes.meters);
  meters_.used.resize(sizes.meters, false);
  registers_.cells.resize(sizes.registers, 0);
  registers_.used.resize(sizes.registers, false);
  stbs_.cells.resize(sizes.state_tables);
  stbs_.used.resize(sizes.state_tables, false);
  samples_.cells.resize(sizes.samples, 0);
  samples_.used.resize(sizes.samples, false);
}

Errc ResourcePool::alloc(ResClass cls, const ResourceParams& params,
                         uint32_t* index) {
  Errc rc = Errc::ok;
  switch (cls) {
    case ResClass::counter:
      rc = counters_.take(index);
      if (rc == Errc::ok) counters_.cells[*index].unit = params.unit;
      break;
    case ResClass::meter:
      rc = meters_.take(index);
      if (rc == Errc::ok) {
        MeterCell& m = meters_.cells[*index];
        m.cir_bps = params.cir_bps;
        m.cbs = params.cbs;
        m.pir_bps = params.pir_bps;
        m.pbs = params.pbs;
        m.tokens_c = params.cbs;
        m.tokens_p = params.pbs;
      }
      break;
    case ResClass::reg:
      rc = registers_.take(index);
      break;
    case ResClass::state_table:
      rc = stbs_.take(index);
      if (rc == Errc::ok) {
        StateTableCell& s = stbs_.cells[*index];
        s.key_width_bits = params.stb_key_width_bits;
        s.capacity = params.stb_capacity ? params.stb_capacity
                                         : sizes_.stb_default_capacity;
      }
      break;
    case ResClass::sample:
      rc = samples_.take(index);
      break;
    case ResClass::timer:
      return Errc::invalid_argument;  // timers are armed via set_timer
  }
  return rc;
}

Errc ResourcePool::release(ResClass cls, uint32_t index) {
  Handle h{cls, index};
  if (!live(h)) return Errc::no_such_handle;
  auto it = block_refs_.find(h);
  if (it != block_refs_.end() && it->second > 0) return Errc::handle_in_use;
  switch (cls) {
    case ResClass::counter: return counters_.put(index);
    case ResClass::meter: return meters_.put(index);
    case ResClass::reg: return registers_.put(index);
    case ResClass::state_table: return stbs_.put(index);
    case ResClass::sample: return samples_.put(index);
    case ResClass::timer: return cancel_timer(index);
  }
  return Errc::invalid_argument;
}

bool ResourcePool::live(Handle h) const {
  switch (h.cls) {
    case ResClass::counter: return counters_.live(h.index);
    case ResClass::meter: return meters_.live(h.index);
    case ResClass::reg: return registers_.live(h.index);
    case ResClass::state_table: return stbs_.live(h.index);
    case ResClass::sample: return samples_.live(h.index);
    case ResClass::timer: return timers_.count(h.index) > 0;
  }
  return false;
}

void ResourcePool::block_ref(Handle h) { block_refs_[h]++; }

void ResourcePool::block_unref(Handle h) {
  auto it = block_refs_.find(h);
  if (it == block_refs_.end()) return;
  if (--it->second == 0) block_refs_.erase(it);
}

uint32_t ResourcePool::block_refs(Handle h) const {
  auto it = block_refs_.find(h);
  return it == block_refs_.end() ? 0 : it->second;
}

Errc ResourcePool::counter_read(uint32_t idx, uint64_t* value,
                                CounterUnit* unit) const {
  if (!counters_.live(idx)) return Errc::no_such_handle;
  if (value) *value = counters_.cells[idx].value;
  if (unit) *unit = counters_.cells[idx].unit;
  return Errc::ok;
}

CounterCell* ResourcePool::counter(uint32_t idx) {
  return counters_.live(idx) ? &counters_.cells[idx] : nullptr;
}

Errc ResourcePool::reg_read(uint32_t idx, uint64_t* value) const {
  if (!registers_.live(idx)) return Errc::no_such_handle;
  if (value) *value = registers_.cells[idx];
  return Errc::ok;
}

Errc ResourcePool::reg_write(uint32_t idx, uint64_t value) {
  if (!registers_.live(idx)) return Errc::no_such_handle;
  registers_.cells[idx] = value;
  return Errc::ok;
}

uint64_t* ResourcePool::reg_cell(uint32_t idx) {
  return registers_.live(idx) ? &registers_.cells[idx] : nullptr;
}

MeterCell* ResourcePool::meter(uint32_t idx) {
  return meters_.live(idx) ? &meters_.cells[idx] : nullptr;
}

uint64_t* ResourcePool::sample_cell(uint32_t idx) {
  return samples_.live(idx) ? &samples_.cells[idx] : nullptr;
}

StateTableCell* ResourcePool::stb(uint32_t idx) {
  return stbs_.live(idx) ? &stbs_.cells[idx] : nullptr;
}

const StateTableCell* ResourcePool::stb(uint32_t idx) const {
  return stbs_.live(idx) ? &stbs_.cells[idx] : nullptr;
}

Errc ResourcePool::stb_insert(uint32_t idx, const Bytes& key, uint64_t value,
                              uint64_t now) {
  StateTableCell* s = stb(idx);
  if (!s) return Errc::no_such_handle;
  if (key.size() != (s->key_width_bits + 7) / 8) return Errc::key_width_mismatch;
  auto it = s->entries.find(key);
  if (it != s->entries.end()) {
    // overwrite refreshes the timestamp
    it->second.value = value;
    it->second.insert_ts = now;
    it->second.seq = ++s->seq_counter;
    return Errc::ok;
  }
  if (s->entries.size() >= s->capacity) {
    s->dropped_full++;
    return Errc::table_full;
  }
  StbEntry e{key, value, now, ++s->seq_counter};
  s->entries.emplace(key, std::move(e));
  return Errc::ok;
}

Errc ResourcePool::stb_delete(uint32_t idx, const Bytes& key) {
  StateTableCell* s = stb(idx);
  if (!s) return Errc::no_such_handle;
  s->entries.erase(key);  // deleting an absent key succeeds
  return Errc::ok;
}

std::optional<uint64_t> ResourcePool::stb_lookup(uint32_t idx,
                                                 const Bytes& key) const {
  const StateTableCell* s = stb(idx);
  if (!s) return std::nullopt;
  auto it = s->entries.find(key);
  if (it == s->entries.end()) return std::nullopt;
  return it->second.value;
}

Errc ResourcePool::stb_dump(uint32_t idx, std::vector<StbEntry>* out) const {
  const StateTableCell* s = stb(idx);
  if (!s) return Errc::no_such_handle;
  out->clear();
  for (const auto& [k, e] : s->entries) out->push_back(e);
  std::sort(out->begin(), out->end(), [](const StbEntry& a, const StbEntry& b) {
    if (a.insert_ts != b.insert_ts) return a.insert_ts < b.insert_ts;
    return a.seq < b.seq;
  });
  return Errc::ok;
}

Errc ResourcePool::set_timer(uint64_t interval_ns, TimerMode mode,
                             uint32_t linked_slot, uint64_t now,
                             uint32_t* timer_id) {
  if (timers_.size() >= sizes_.timers) return Errc::pool_exhausted;
  if (interval_ns == 0) return Errc::invalid_argument;
  TimerEntry t;
  t.timer_id = next_timer_id_++;
  t.interval_ns = interval_ns;
  t.mode = mode;
  t.linked_slot = linked_slot;
  t.armed_at = now;
  t.next_fire = now + interval_ns;
  timers_[t.timer_id] = t;
  if (timer_id) *timer_id = t.timer_id;
  return Errc::ok;
}

Errc ResourcePool::cancel_timer(uint32_t timer_id) {
  return timers_.erase(timer_id) ? Errc::ok : Errc::no_such_timer;
}

const TimerEntry* ResourcePool::timer(uint32_t timer_id) const {
  auto it = timers_.find(timer_id);
  return it == timers_.end() ? nullptr : &it->second;
}

std::vector<TimerEntry> ResourcePool::all_timers() const {
  std::vector<TimerEntry> out;
  for (const auto& [id, t] : timers_) out.push_back(t);
  return out;
}

std::optional<uint64_t> ResourcePool::next_timer_deadline() const {
  std::optional<uint64_t> best;
  for (const auto& [id, t] : timers_) {
    if (!best || t.next_fire < *best) best = t.next_fire;
  }
  return best;
}

std::vector<TimerEntry> ResourcePool::pop_due_timers(uint64_t now) {
  std::vector<TimerEntry> due;
  for (auto& [id, t] : timers_) {
    while (t.next_fire <= now) {
      due.push_back(t);
      if (t.mode == TimerMode::one_shot) break;
      // exact multiples of the interval from the arming time: no drift
      t.next_fire += t.interval_ns;
    }
  }
  std::sort(due.begin(), due.end(), [](const TimerEntry& a, const TimerEntry& b) {
    if (a.next_fire != b.next_fire) return a.next_fire < b.next_fire;
    return a.timer_id < b.timer_id;
  });
  // fired one-shots auto-release
  for (const auto& t : due) {
    if (t.mode == TimerMode::one_shot) timers_.erase(t.timer_id);
  }
  return due;
}

PoolStats ResourcePool::stats() const {
  PoolStats st;
  auto fill = [&](ResClass c, uint32_t cap, uint32_t alloc) {
    auto& e = st.per_class[static_cast<int>(c)];
    e.capacity = cap;
    e.allocated = alloc;
    e.free = cap - alloc;
  };
  fill(ResClass::counter, sizes_.counters, counters_.allocated);
  fill(ResClass::meter, sizes_.meters, meters_.allocated);
  fill(ResClass::reg, sizes_.registers, registers_.allocated);
  fill(ResClass::state_table, sizes_.state_tables, stbs_.allocated);
  fill(ResClass::timer, sizes_.timers, static_cast<uint32_t>(timers_.size()));
  fill(ResClass::sample, sizes_.samples, samples_.allocated);
  return st;
}

std::vector<uint32_t> ResourcePool::allocated_indices(ResClass cls) const {
  std::vector<uint32_t> out;
  auto scan = [&out](const std::vector<bool>& used) {
    for (uint32_t i = 0; i < used.size(); ++i) {
      if (used[i]) out.push_back(i);
    }
  };
  switch (cls) {
    case ResClass::counter: scan(counters_.used); break;
    case ResClass::meter: scan(meters_.used); break;
    case ResClass::reg: scan(registers_.used); break;
    case ResClass::state_table: scan(stbs_.used); break;
    case ResClass::sample: scan(samples_.used); break;
    case ResClass::timer:
      for (const auto& [id, t] : timers_) out.push_back(id);
      break;
  }
  return out;
}

std::string ResourcePool::snapshot_json() const {
  nlohmann::json j;
  PoolStats st = stats();
  for (int i = 0; i < kResClassCount; ++i) {
    const auto& e = st.per_class[i];
    j["stats"][res_class_name(static_cast<ResClass>(i))] = {
        {"capacity", e.capacity}, {"allocated", e.allocated}, {"free", e.free}};
  }
  nlohmann::json cs = nlohmann::json::array();
  for (uint32_t i = 0; i < counters_.used.size(); ++i) {
    if (!counters_.used[i]) continue;
    cs.push_back({{"i", i},
                  {"value", counters_.cells[i].value},
                  {"unit", counters_.cells[i].unit == CounterUnit::bytes
                               ? "bytes"
                               : "packets"}});
  }
  j["counters"] = cs;
  nlohmann::json rs = nlohmann::json::array();
  for (uint32_t i = 0; i < registers_.used.size(); ++i) {
    if (registers_.used[i]) rs.push_back({{"i", i}, {"value", registers_.cells[i]}});
  }
  j["registers"] = rs;
  nlohmann::json ms = nlohmann::json::array();
  for (uint32_t i = 0; i < meters_.used.size(); ++i) {
    if (!meters_.used[i]) continue;
    const MeterCell& m = meters_.cells[i];
    ms.push_back({{"i", i},
                  {"cir", m.cir_bps},
                  {"cbs", m.cbs},
                  {"pir", m.pir_bps},
                  {"pbs", m.pbs}});
  }
  j["meters"] = ms;
  nlohmann::json ss = nlohmann::json::array();
  for (uint32_t i = 0; i < stbs_.used.size(); ++i) {
    if (!stbs_.used[i]) continue;
    const StateTableCell& s = stbs_.cells[i];
    nlohmann::json ents = nlohmann::json::array();
    std::vector<StbEntry> dump;
    stb_dump(i, &dump);
    for (const auto& e : dump) {
      ents.push_back({{"key", to_hex(e.key)}, {"value", e.value}, {"ts", e.insert_ts}});
    }
    ss.push_back({{"i", i},
                  {"key_width", s.key_width_bits},
                  {"capacity", s.capacity},
                  {"entries", ents}});
  }
  j["state_tables"] = ss;
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& [id, t] : timers_) {
    ts.push_back({{"interval", t.interval_ns},
                  {"mode", t.mode == TimerMode::periodic ? "periodic" : "one_shot"},
                  {"slot", t.linked_slot},
                  {"armed_at", t.armed_at},
                  {"next_fire", t.next_fire}});
  }
  j["timers"] = ts;
  nlohmann::json smp = nlohmann::json::array();
  for (uint32_t i = 0; i < samples_.used.size(); ++i) {
    if (samples_.used[i]) smp.push_back({{"i", i}, {"value", samples_.cells[i]}});
  }
  j["samples"] = smp;
  return j.dump();
}

}  // namespace dnp
