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

#ifndef DNP_PIPELINE_HPP_
#define DNP_PIPELINE_HPP_

#include <deque>
#include <functional>
#include <map>
#include <memory>

#include "dnp/vm.hpp"

namespace dnp {

constexpr uint32_t kNoSlot = 0xffffffffu;

// reserved report template ids; probe templates start at kProbeTemplateBase
constexpr uint32_t kTplMiss = 0;
constexpr uint32_t kTplStageLimit = 1;
constexpr uint32_t kTplExecAbort = 2;
constexpr uint32_t kTplBadGoto = 3;
constexpr uint32_t kProbeTemplateBase = 256;

struct PacketBuffer {
  Bytes bytes;
  uint32_t ingress_port = 0;
  uint64_t arrival_ts = 0;
};

struct MatchKey {
  Bytes value;
  Bytes mask;
  bool operator==(const MatchKey&) const = default;
};

struct FlowEntry {
  uint64_t entry_id = 0;
  MatchKey key;
  int32_t priority = 0;
  uint32_t action_slot = 0;
  Bytes params;
};

struct TableDef {
  uint32_t table_id = 0;
  std::vector<FieldRef> key_spec;
  uint32_t miss_slot = 0;  // builtin drop+report unless overridden
  bool writable_by_actions = false;
};

struct FlowTable {
  uint32_t table_id = 0;
  std::vector<FieldRef> key_spec;
  uint32_t key_width_bits = 0;
  std::vector<FlowEntry> entries;  // sorted: priority desc, entry_id asc
  uint32_t miss_slot = 0;
  bool writable_by_actions = false;
  uint64_t next_entry_id = 1;
};

struct TablePosition {
  enum class Kind : uint8_t { at_start = 0, after = 1, at_end = 2 };
  Kind kind = Kind::at_end;
  uint32_t after_table = 0;

  static TablePosition start() { return {Kind::at_start, 0}; }
  static TablePosition after(uint32_t t) { return {Kind::after, t}; }
  static TablePosition end() { return {Kind::at_end, 0}; }
};

struct EgressQueue {
  uint64_t depth = 0;
  uint64_t capacity = 4096;
  uint64_t low_watermark = 0;
  uint64_t high_watermark = 4096;
  uint32_t enqueue_hook = kNoSlot;
  uint32_t dequeue_hook = kNoSlot;
  std::deque<Bytes> fifo;
};

struct Port {
  uint32_t id = 0;
  uint32_t ingress_hook = kNoSlot;
  uint32_t egress_hook = kNoSlot;
  EgressQueue queue;
  uint64_t last_arrival_ts = 0;
};

enum class HookPoint : uint8_t {
  port_ingress = 0,
  port_egress = 1,
  queue_enqueue = 2,
  queue_dequeue = 3,
};

struct LoadedBlock {
  uint32_t home_slot = 0;
  ActionBlock block;
  ValidationReport report;
  Bytes encoding;
};
using BlockRef = std::shared_ptr<const LoadedBlock>;

struct DeviceCaps {
  uint64_t base_pps = 1000000;
  uint64_t mem_access_budget_per_sec = 10000000;
  uint64_t throughput_floor_pps = 0;  // 0 = 90% of base_pps

  uint64_t floor() const {
    return throughput_floor_pps ? throughput_floor_pps : base_pps * 9 / 10;
  }
};

struct DeviceLimits {
  uint32_t mtu_bytes = 2048;
  uint32_t max_stages = 32;
};

struct DropStats {
  uint64_t malformed = 0;
  uint64_t stage_limit = 0;
  uint64_t no_disposition = 0;
  uint64_t no_tables = 0;
  uint64_t queue_overflow = 0;
  uint64_t exec_abort = 0;
  uint64_t bad_goto = 0;
  uint64_t ts_violation = 0;
  uint64_t total() const {
    return malformed + stage_limit + no_disposition + no_tables +
           queue_overflow + exec_abort + bad_goto + ts_violation;
  }
};

struct ForwardingOutcome {
  std::vector<std::pair<uint32_t, Bytes>> emitted;
  bool dropped = false;
  Errc drop_reason = Errc::ok;
  std::vector<Report> reports;
  std::vector<StbWrite> tables_written;
};

struct FiredTimer {
  uint64_t fire_time = 0;
  uint32_t timer_id = 0;
  uint32_t slot = 0;
};

// One forwarding device: match-action tables in a chain, action-ID slot
// indirection, shared resource pools, per-port egress queues. Control
// mutations are serialized with packet processing at packet boundaries;
// the object is not thread-safe.
class Device {
 public:
  using ReportSink = std::function<void(const Report&)>;
  // Invoked when a queue goes non-empty; the harness services it. When no
  // sink is set, queues auto-drain.
  using QueueSink = std::function<void(uint32_t port)>;

  Device(uint32_t id, std::string name, const DeviceCaps& caps = {},
         const DeviceLimits& limits = {}, const PoolSizes& pools = {},
         std::shared_ptr<Clock> clock = nullptr);

  uint32_t id() const { return id_; }
  const std::string& name() const { return name_; }
  const DeviceCaps& caps() const { return caps_; }
  const DeviceLimits& limits() const { return limits_; }
  ResourcePool& pool() { return pool_; }
  const ResourcePool& pool() const { return pool_; }
  Clock& clock() { return *clock_; }
  VirtualClock* virtual_clock() { return vclock_; }
  const std::string& last_error() const { return last_error_; }
  void set_permissive(bool on) { permissive_ = on; }

  // ports
  Errc add_port(uint32_t port);
  bool has_port(uint32_t port) const { return ports_.count(port) > 0; }
  std::vector<uint32_t> port_ids() const;
  Port* port(uint32_t id);

  // tables
  Errc create_table(const TableDef& def, const TablePosition& pos);
  Errc delete_table(uint32_t table_id);
  const FlowTable* table(uint32_t table_id) const;
  FlowTable* table(uint32_t table_id);
  const std::vector<uint32_t>& chain() const { return chain_; }

  // entries
  Errc insert_entry(uint32_t table_id, const MatchKey& key, int32_t priority,
                    uint32_t action_slot, const Bytes& params,
                    uint64_t* entry_id, uint64_t want_entry_id = 0);
  Errc delete_entry(uint32_t table_id, uint64_t entry_id);
  Errc modify_entry(uint32_t table_id, uint64_t entry_id,
                    std::optional<uint32_t> new_slot,
                    std::optional<Bytes> new_params);
  Errc lookup(uint32_t table_id, ByteView key_bits, size_t width_bits,
              const FlowEntry** out) const;
  const FlowEntry* find_entry(uint32_t table_id, const MatchKey& key,
                              int32_t priority) const;
  const FlowEntry* entry_by_id(uint32_t table_id, uint64_t entry_id) const;
  Errc set_table_miss(uint32_t table_id, uint32_t slot, uint32_t* prev);

  // actions
  Errc load_action(const ActionBlock& block, uint32_t* slot);
  Errc delete_action(uint32_t slot);
  // points `slot` at the block loaded into `src_slot`; returns the home
  // slot of the block previously executing there, so switching back to it
  // restores the original action (the paper's x -> x' -> x cycle)
  Errc switch_action_pointer(uint32_t slot, uint32_t src_slot,
                             uint32_t* prev_home);
  // rollback path: restores an exact block pointer
  Errc switch_action_raw(uint32_t slot, BlockRef block, BlockRef* prev);
  BlockRef slot_block(uint32_t slot) const;   // what executes now
  BlockRef slot_home(uint32_t slot) const;    // what was loaded here
  std::vector<uint32_t> slot_ids(bool include_builtin = false) const;
  uint32_t slot_refcount(uint32_t slot) const;
  bool slot_exists(uint32_t slot) const;

  // hooks
  Errc set_hook(uint32_t port, HookPoint point, uint32_t slot, uint32_t* prev);
  uint32_t hook(uint32_t port, HookPoint point) const;

  // packet path
  ForwardingOutcome process_packet(const PacketBuffer& pkt);

  // queues
  Errc set_queue_bounds(uint32_t port, uint64_t capacity, uint64_t low,
                        uint64_t high);
  bool queue_enqueue(uint32_t port, Bytes bytes, bool notify = true);
  bool queue_dequeue(uint32_t port, Bytes* out);
  size_t queue_peek_size(uint32_t port) const;
  uint64_t queue_depth(uint32_t port) const;

  // timers
  Errc set_timer(uint64_t interval_ns, TimerMode mode, uint32_t slot,
                 uint32_t* timer_id);
  Errc cancel_timer(uint32_t timer_id);
  std::vector<FiredTimer> advance_clock(uint64_t to_ns);
  std::optional<uint64_t> next_timer_deadline() const {
    return pool_.next_timer_deadline();
  }

  void set_report_sink(ReportSink sink) { report_sink_ = std::move(sink); }
  void set_queue_sink(QueueSink sink) { queue_sink_ = std::move(sink); }
  void set_timer_arm_hook(std::function<void(uint64_t)> fn) {
    timer_arm_hook_ = std::move(fn);
  }

  const DropStats& drops() const { return drops_; }
  uint64_t packets_processed() const { return packets_processed_; }

  // full device state for round-trip comparisons; allocation cursors and
  // traffic statistics are excluded by design
  std::string snapshot_json() const;
  std::string dump_config_json() const;

  // test support: recomputes slot refcounts from first principles
  bool audit_refcounts(std::string* what = nullptr) const;

 private:
  struct ActionSlot {
    BlockRef home;  // immutable while the slot lives
    BlockRef cur;
    uint32_t refcount = 0;
  };

  Errc validate_for_device(const ActionBlock& block, ValidationReport* rep);
  BlockRef make_loaded(uint32_t slot, const ActionBlock& block,
                       const ValidationReport& rep);
  void slot_ref(uint32_t slot);
  void slot_unref(uint32_t slot);
  void route_reports(std::vector<Report>& reports, ForwardingOutcome* outcome);
  void diag_report(uint32_t tpl, uint64_t a, uint64_t b,
                   ForwardingOutcome* outcome);
  Errc run_observer(uint32_t slot, ExecContext& ctx, ForwardingOutcome* out);
  VmLimits vm_limits() const;

  uint32_t id_;
  std::string name_;
  DeviceCaps caps_;
  DeviceLimits limits_;
  std::shared_ptr<Clock> clock_;
  VirtualClock* vclock_ = nullptr;
  bool permissive_ = false;

  ResourcePool pool_;  // must outlive the action store
  std::map<uint32_t, ActionSlot> slots_;
  std::map<uint32_t, FlowTable> tables_;
  std::vector<uint32_t> chain_;
  std::map<uint32_t, Port> ports_;

  DropStats drops_;
  uint64_t packets_processed_ = 0;
  ReportSink report_sink_;
  QueueSink queue_sink_;
  std::function<void(uint64_t)> timer_arm_hook_;
  std::string last_error_;
};

}  // namespace dnp

#endif  // DNP_PIPELINE_HPP_
