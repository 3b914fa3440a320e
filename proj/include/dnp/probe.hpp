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

#ifndef DNP_PROBE_HPP_
#define DNP_PROBE_HPP_

#include <set>

#include "dnp/pipeline.hpp"

namespace dnp {

enum class ProbeKind : uint8_t {
  counter = 0,
  threshold_push,
  timer_poll,
  fsm_half_open,
  flow_duration,
  queue_watermark,
  filter,
  latency_source,
  latency_sink,
};
const char* probe_kind_name(ProbeKind k);
bool probe_kind_parse(const std::string& s, ProbeKind* out);
// every catalog kind, in a stable order
std::vector<ProbeKind> probe_catalog();

enum class AttachKind : uint8_t {
  table_entry = 0,
  table_miss,
  port_ingress,
  port_egress,
  queue,
  timer,
};
const char* attach_kind_name(AttachKind k);

struct AttachPoint {
  AttachKind kind = AttachKind::table_entry;
  uint32_t table = 0;
  MatchKey key;       // table_entry
  int32_t priority = 0;
  uint32_t port = 0;  // port_* / queue
};

// a single equality or bit-mask test against a packet field
struct FieldTest {
  FieldRef field;
  uint64_t mask = 0;  // 0 means equality test
  uint64_t eq = 0;
};

// default synthetic trace layout: kind[0:16] flow[16:32] flags[48:8] proto[56:8]
constexpr uint16_t kDefaultProbeMarker = 0xA55A;

struct ProbeParams {
  CounterUnit unit = CounterUnit::packets;
  uint64_t threshold = 0;
  uint64_t interval_ns = 0;
  uint32_t sample_n = 1;
  uint32_t probe_count = 0;  // latency_source: 1 = single probe packet
  uint32_t out_port = 0;     // latency_source egress
  uint32_t port = 0;         // timer_poll load source
  bool egress_side = false;  // timer_poll: count egress instead of ingress
  uint64_t low = 0, high = 0;
  bool marks_set = false;
  uint16_t marker = kDefaultProbeMarker;
  std::vector<FieldRef> digest_fields;
  FieldRef flow_sig{FieldSpace::packet, 16, 32};
  FieldRef ts_field{FieldSpace::packet, 16, 64};  // latency_sink old_time
  FieldTest proto{{FieldSpace::packet, 56, 8}, 0, 6};
  FieldTest syn{{FieldSpace::packet, 48, 8}, 1, 0};
  FieldTest ack{{FieldSpace::packet, 48, 8}, 2, 0};
  FieldTest fin{{FieldSpace::packet, 48, 8}, 4, 0};
  FieldRef id_field{FieldSpace::packet, 16, 32};
  std::optional<uint32_t> use_register;    // externally owned tally register
  std::optional<uint32_t> watch_register;  // threshold_push register-watch
  bool extend_overlaps = false;
};

struct ProbeSpec {
  ProbeKind kind = ProbeKind::counter;
  AttachPoint attach;
  ProbeParams params;

  // structured text form (JSON; see docs/formats.md)
  static Errc parse(const std::string& text, ProbeSpec* out, std::string* err);
  std::string to_text() const;          // canonical serialization
  bool attach_compatible() const;       // kind / attach-point matrix
};

// Plans reference results of earlier steps through placeholder handle
// indices >= kStepRefBase; commit resolves them to allocated handles.
constexpr uint32_t kStepRefBase = 0xffff0000u;
constexpr uint32_t kTemplatePlaceholder = 0xffffffffu;

struct Mutation {
  enum class Kind : uint8_t {
    alloc,
    load_block,
    insert_entry,
    switch_ptr,
    set_hook,
    set_miss,
    retarget_entry,
    arm_timer,
  };
  Kind kind = Kind::alloc;
  // alloc
  ResClass res_class = ResClass::counter;
  ResourceParams res_params;
  // load_block
  ActionBlock block;
  // insert_entry / set_miss / retarget_entry
  uint32_t table = 0;
  MatchKey key;
  int32_t priority = 0;
  int slot_step = -1;  // step index that loaded the entry's block
  Bytes entry_params;
  uint64_t entry_id = 0;  // retarget_entry
  // switch_ptr
  uint32_t target_slot = 0;
  int src_step = -1;
  // set_hook / arm_timer
  uint32_t port = 0;
  HookPoint hook_point = HookPoint::port_ingress;
  uint64_t interval_ns = 0;
  TimerMode timer_mode = TimerMode::periodic;

  std::string describe() const;
};

struct OverlapInfo {
  uint32_t table = 0;
  uint64_t entry_id = 0;
  int32_t priority = 0;
};

struct InstallPlan {
  std::vector<Mutation> steps;
  std::vector<std::string> rollback;  // exact inverses, reverse order
  CostProfile cost_delta;             // per-packet cost added to the data path
  std::vector<OverlapInfo> overlaps;
  std::string to_text() const;
};

// realized inverse of one committed step
struct TeardownOp {
  enum class Kind : uint8_t {
    release,
    delete_action,
    delete_entry,
    restore_ptr,
    restore_hook,
    restore_miss,
    restore_entry_ptr,
    cancel_timer,
  };
  Kind kind;
  ResClass res_class = ResClass::counter;
  uint32_t index = 0;      // handle / slot / timer id
  uint32_t table = 0;
  uint64_t entry_id = 0;
  uint32_t target_slot = 0;
  BlockRef restore_block;   // restore_ptr: what to put back
  BlockRef expected_block;  // restore_ptr: what we installed (LIFO check)
  uint32_t port = 0;
  HookPoint hook_point = HookPoint::port_ingress;
  uint32_t prev_hook = kNoSlot;
  uint32_t prev_slot = 0;  // restore_miss / restore_entry_ptr
};

struct ProbeHandle {
  uint64_t probe_id = 0;
  ProbeSpec spec;
  std::vector<Handle> owned_resources;
  std::vector<TeardownOp> teardown;  // applied in reverse order on revoke
  std::set<std::string> subscribers;
  uint64_t created_ts = 0;
  CostProfile cost_delta;
  uint32_t template_id = 0;
};

// Device-side probe manager: plans spec -> mutations, admits against the
// throughput floor, commits hitlessly with rollback, tracks subscriptions
// and recycles resources on revoke.
class DnpRuntime {
 public:
  using AppSink =
      std::function<void(const std::string& app, uint64_t probe_id, const Report&)>;
  using RawSink = std::function<void(uint64_t probe_id, const Report&)>;

  explicit DnpRuntime(Device& dev);

  Errc plan_install(const ProbeSpec& spec, InstallPlan* out) const;
  Errc admission_check(const InstallPlan& plan, uint64_t* estimate,
                       uint64_t* floor) const;
  Errc commit(const ProbeSpec& spec, const InstallPlan& plan,
              uint64_t* probe_id);
  // plan + admission + commit
  Errc install(const ProbeSpec& spec, uint64_t* probe_id,
               uint64_t* estimate = nullptr);
  Errc revoke(uint64_t probe_id, bool force = false);

  Errc subscribe(uint64_t probe_id, const std::string& app, size_t* count);
  Errc unsubscribe(uint64_t probe_id, const std::string& app, size_t* count);

  const ProbeHandle* probe(uint64_t probe_id) const;
  std::vector<uint64_t> probe_ids() const;
  const CostProfile& active_cost() const { return active_cost_; }
  const std::string& last_error() const { return last_error_; }

  void set_app_sink(AppSink sink) { app_sink_ = std::move(sink); }
  void set_raw_sink(RawSink sink) { raw_sink_ = std::move(sink); }

  // test hook: force the commit step at this index to fail
  void fail_at_step(int step) { fail_at_step_ = step; }

 private:
  void on_report(const Report& r);
  Errc plan_for_kind(const ProbeSpec& spec, InstallPlan* plan) const;

  Device& dev_;
  std::map<uint64_t, ProbeHandle> probes_;
  uint64_t next_probe_id_ = 1;
  CostProfile active_cost_;
  int fail_at_step_ = -1;
  AppSink app_sink_;
  RawSink raw_sink_;
  mutable std::string last_error_;
};

}  // namespace dnp

#endif  // DNP_PROBE_HPP_
