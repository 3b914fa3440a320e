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

#ifndef DNP_RESOURCES_HPP_
#define DNP_RESOURCES_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnp/instr.hpp"

namespace dnp {

enum class CounterUnit : uint8_t { packets = 0, bytes = 1 };

struct CounterCell {
  uint64_t value = 0;
  CounterUnit unit = CounterUnit::packets;
};

// Two-rate token bucket; METER_CHECK returns a color into metadata.
struct MeterCell {
  uint64_t cir_bps = 0;  // committed rate, units/sec
  uint64_t cbs = 0;      // committed burst
  uint64_t pir_bps = 0;  // peak rate
  uint64_t pbs = 0;      // peak burst
  uint64_t tokens_c = 0;
  uint64_t tokens_p = 0;
  uint64_t last_ns = 0;

  // 0 = green, 1 = yellow, 2 = red
  uint8_t check(uint64_t now_ns, uint64_t amount);
};

struct StbEntry {
  Bytes key;
  uint64_t value = 0;
  uint64_t insert_ts = 0;
  uint64_t seq = 0;  // insertion-order tie-break for dumps
};

struct StateTableCell {
  uint32_t key_width_bits = 32;
  uint32_t capacity = 65536;
  std::map<Bytes, StbEntry> entries;
  uint64_t seq_counter = 0;
  uint64_t dropped_full = 0;  // diagnostic: inserts dropped at capacity
};

enum class TimerMode : uint8_t { one_shot = 0, periodic = 1 };

struct TimerEntry {
  uint32_t timer_id = 0;
  uint64_t interval_ns = 0;
  TimerMode mode = TimerMode::one_shot;
  uint32_t linked_slot = 0;
  uint64_t armed_at = 0;
  uint64_t next_fire = 0;
};

struct ResourceParams {
  CounterUnit unit = CounterUnit::packets;
  uint32_t stb_key_width_bits = 32;
  uint32_t stb_capacity = 0;  // 0 = pool default
  uint64_t cir_bps = 0, cbs = 0, pir_bps = 0, pbs = 0;
};

struct PoolSizes {
  uint32_t counters = 16384;
  uint32_t meters = 1024;
  uint32_t registers = 4096;
  uint32_t state_tables = 64;
  uint32_t stb_default_capacity = 65536;
  uint32_t timers = 256;
  uint32_t samples = 1024;

  uint32_t of(ResClass c) const;
};

struct ClassStats {
  uint32_t capacity = 0;
  uint32_t allocated = 0;
  uint32_t free = 0;
};

struct PoolStats {
  ClassStats per_class[kResClassCount];
  bool operator==(const PoolStats&) const;
};

// The dynamically shared pool of counters, meters, registers, state tables,
// timers and sample cells. Allocation hands out the lowest free index;
// release zeroes the cell so the next tenant starts clean.
class ResourcePool {
 public:
  explicit ResourcePool(const PoolSizes& sizes = {});

  Errc alloc(ResClass cls, const ResourceParams& params, uint32_t* index);
  Errc release(ResClass cls, uint32_t index);
  bool live(Handle h) const;

  // blocks referencing a handle pin it against release
  void block_ref(Handle h);
  void block_unref(Handle h);
  uint32_t block_refs(Handle h) const;

  // counters
  Errc counter_read(uint32_t idx, uint64_t* value, CounterUnit* unit) const;
  CounterCell* counter(uint32_t idx);
  // registers
  Errc reg_read(uint32_t idx, uint64_t* value) const;
  Errc reg_write(uint32_t idx, uint64_t value);
  uint64_t* reg_cell(uint32_t idx);
  // meters
  MeterCell* meter(uint32_t idx);
  // samples
  uint64_t* sample_cell(uint32_t idx);

  // state tables
  StateTableCell* stb(uint32_t idx);
  const StateTableCell* stb(uint32_t idx) const;
  Errc stb_insert(uint32_t idx, const Bytes& key, uint64_t value, uint64_t now);
  Errc stb_delete(uint32_t idx, const Bytes& key);  // absent key is a no-op
  std::optional<uint64_t> stb_lookup(uint32_t idx, const Bytes& key) const;
  Errc stb_dump(uint32_t idx, std::vector<StbEntry>* out) const;

  // timers (allocated via set_timer only)
  Errc set_timer(uint64_t interval_ns, TimerMode mode, uint32_t linked_slot,
                 uint64_t now, uint32_t* timer_id);
  Errc cancel_timer(uint32_t timer_id);
  const TimerEntry* timer(uint32_t timer_id) const;
  std::vector<TimerEntry> all_timers() const;
  std::optional<uint64_t> next_timer_deadline() const;
  // Pops every timer due at or before `now`, in (next_fire, timer_id) order;
  // periodic timers are re-armed at exact interval multiples.
  std::vector<TimerEntry> pop_due_timers(uint64_t now);

  PoolStats stats() const;
  const PoolSizes& sizes() const { return sizes_; }
  std::vector<uint32_t> allocated_indices(ResClass cls) const;
  std::string snapshot_json() const;

 private:
  template <typename T>
  struct Slab {
    std::vector<T> cells;
    std::vector<bool> used;
    uint32_t allocated = 0;
    Errc take(uint32_t* idx);
    Errc put(uint32_t idx);
    bool live(uint32_t idx) const {
      return idx < used.size() && used[idx];
    }
  };

  PoolSizes sizes_;
  Slab<CounterCell> counters_;
  Slab<MeterCell> meters_;
  Slab<uint64_t> registers_;
  Slab<StateTableCell> stbs_;
  Slab<uint64_t> samples_;

  std::map<uint32_t, TimerEntry> timers_;
  uint32_t next_timer_id_ = 1;

  std::map<Handle, uint32_t> block_refs_;
};

}  // namespace dnp

#endif  // DNP_RESOURCES_HPP_
