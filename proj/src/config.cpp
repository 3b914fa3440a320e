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

#include "dnp/config.hpp"

#include <map>

#include "json.hpp"

namespace dnp {

using nlohmann::json;

namespace {

Errc parse_pools(const json& j, PoolSizes* out) {
  if (!j.contains("pools")) return Errc::ok;
  const json& p = j["pools"];
  if (p.contains("counters")) out->counters = p["counters"];
  if (p.contains("meters")) out->meters = p["meters"];
  if (p.contains("registers")) out->registers = p["registers"];
  if (p.contains("state_tables")) out->state_tables = p["state_tables"];
  if (p.contains("stb_capacity")) out->stb_default_capacity = p["stb_capacity"];
  if (p.contains("timers")) out->timers = p["timers"];
  if (p.contains("samples")) out->samples = p["samples"];
  return Errc::ok;
}

struct ConfigApplier {
  Device& dev;
  std::string* err;
  size_t ops = 0;
  const std::function<void()>* per_op = nullptr;

  void tick() {
    ops++;
    if (per_op && *per_op) (*per_op)();
  }

  bool fail(const std::string& what) {
    if (err) *err = what;
    return false;
  }

  bool apply(const json& j) {
    // pre-allocated resources, in declaration order (c0, c1, ... per class)
    if (j.contains("resources")) {
      for (const json& r : j["resources"]) {
        ResClass cls;
        if (!res_class_parse(r.value("class", ""), &cls)) {
          return fail("bad resource class");
        }
        ResourceParams p;
        if (r.value("unit", "packets") == std::string("bytes")) {
          p.unit = CounterUnit::bytes;
        }
        if (r.contains("key_width")) p.stb_key_width_bits = r["key_width"];
        if (r.contains("capacity")) p.stb_capacity = r["capacity"];
        if (r.contains("cir")) p.cir_bps = r["cir"];
        if (r.contains("cbs")) p.cbs = r["cbs"];
        if (r.contains("pir")) p.pir_bps = r["pir"];
        if (r.contains("pbs")) p.pbs = r["pbs"];
        uint32_t idx;
        if (dev.pool().alloc(cls, p, &idx) != Errc::ok) {
          return fail("resource allocation failed");
        }
        tick();
      }
    }

    std::map<std::string, uint32_t> block_slots;
    block_slots["drop_report"] = 0;
    block_slots["continue"] = 1;
    if (j.contains("blocks")) {
      for (auto it = j["blocks"].begin(); it != j["blocks"].end(); ++it) {
        ActionBlock b;
        std::string aerr;
        std::string text;
        if (it.value().is_array()) {
          for (const json& line : it.value()) {
            text += line.get<std::string>() + "\n";
          }
        } else {
          text = it.value().get<std::string>();
        }
        if (assemble(text, &b, &aerr) != Errc::ok) {
          return fail("block '" + it.key() + "': " + aerr);
        }
        uint32_t slot;
        Errc rc = dev.load_action(b, &slot);
        if (rc != Errc::ok) {
          return fail("block '" + it.key() + "': " + errc_name(rc) + " " +
                      dev.last_error());
        }
        block_slots[it.key()] = slot;
        tick();
      }
    }

    auto resolve_block = [&](const std::string& name, uint32_t* slot) {
      auto bit = block_slots.find(name);
      if (bit == block_slots.end()) return false;
      *slot = bit->second;
      return true;
    };

    if (j.contains("tables")) {
      for (const json& t : j["tables"]) {
        TableDef def;
        def.table_id = t.at("id");
        for (const json& k : t.at("key")) {
          FieldRef f;
          if (!FieldRef::parse(k.get<std::string>(), &f)) {
            return fail("bad key field in table");
          }
          def.key_spec.push_back(f);
        }
        std::string miss = t.value("miss", "drop_report");
        if (!resolve_block(miss, &def.miss_slot)) {
          return fail("unknown miss block '" + miss + "'");
        }
        def.writable_by_actions = t.value("writable", false);
        Errc rc = dev.create_table(def, TablePosition::end());
        if (rc != Errc::ok) return fail(std::string("create_table: ") + errc_name(rc));
        tick();

        for (const json& e : t.value("entries", json::array())) {
          MatchKey key;
          if (!from_hex(e.value("key", ""), &key.value) ||
              !from_hex(e.value("mask", ""), &key.mask)) {
            return fail("bad entry key hex");
          }
          size_t want = (def.key_spec.empty()
                             ? 0
                             : (dev.table(def.table_id)->key_width_bits + 7) / 8);
          key.value.resize(want, 0);
          key.mask.resize(want, 0);
          uint32_t slot;
          std::string action = e.value("action", "drop_report");
          if (!resolve_block(action, &slot)) {
            return fail("unknown action block '" + action + "'");
          }
          Bytes params;
          if (e.contains("params")) from_hex(e["params"], &params);
          Errc rc2 = dev.insert_entry(def.table_id, key,
                                      e.value("priority", 0), slot, params,
                                      nullptr);
          if (rc2 != Errc::ok) {
            return fail(std::string("insert_entry: ") + errc_name(rc2));
          }
          tick();
        }
      }
    }

    if (j.contains("queues")) {
      for (const json& q : j["queues"]) {
        dev.set_queue_bounds(q.at("port"), q.value("capacity", 4096),
                             q.value("low", 0), q.value("high", 4096));
        tick();
      }
    }
    return true;
  }
};

}  // namespace

Errc load_device_config(const std::string& json_text, uint32_t device_id,
                        const std::string& name, std::unique_ptr<Device>* out,
                        std::string* err, std::shared_ptr<Clock> clock) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    if (err) *err = e.what();
    return Errc::parse_error;
  }

  DeviceLimits limits;
  if (j.contains("mtu")) limits.mtu_bytes = j["mtu"];
  if (j.contains("max_stages")) limits.max_stages = j["max_stages"];
  PoolSizes pools;
  parse_pools(j, &pools);
  DeviceCaps caps;
  if (j.contains("caps")) {
    const json& c = j["caps"];
    if (c.contains("base_pps")) caps.base_pps = c["base_pps"];
    if (c.contains("mem_budget")) caps.mem_access_budget_per_sec = c["mem_budget"];
    if (c.contains("floor_pps")) caps.throughput_floor_pps = c["floor_pps"];
  }

  auto dev = std::make_unique<Device>(device_id, name, caps, limits, pools,
                                      std::move(clock));
  if (j.contains("ports")) {
    for (const json& p : j["ports"]) dev->add_port(p.get<uint32_t>());
  }
  ConfigApplier a{*dev, err};
  if (!a.apply(j)) return Errc::parse_error;
  *out = std::move(dev);
  return Errc::ok;
}

Errc apply_device_config(Device& dev, const std::string& json_text,
                         std::string* err, size_t* ops_applied,
                         const std::function<void()>& per_op) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    if (err) *err = e.what();
    return Errc::parse_error;
  }
  if (j.contains("ports")) {
    for (const json& p : j["ports"]) dev.add_port(p.get<uint32_t>());
  }
  ConfigApplier a{dev, err};
  a.per_op = &per_op;
  if (!a.apply(j)) return Errc::parse_error;
  if (ops_applied) *ops_applied = a.ops;
  return Errc::ok;
}

size_t teardown_device(Device& dev, const std::function<void()>& per_op) {
  size_t ops = 0;
  auto tick = [&] {
    ops++;
    if (per_op) per_op();
  };
  std::vector<uint32_t> chain = dev.chain();
  for (uint32_t t : chain) {
    dev.delete_table(t);
    tick();
  }
  for (uint32_t slot : dev.slot_ids()) {
    if (dev.delete_action(slot) == Errc::ok) tick();
  }
  // release every pool handle that is no longer pinned
  PoolStats st = dev.pool().stats();
  for (int c = 0; c < kResClassCount; ++c) {
    ResClass cls = static_cast<ResClass>(c);
    if (cls == ResClass::timer) continue;
    uint32_t cap = st.per_class[c].capacity;
    for (uint32_t i = 0; i < cap; ++i) {
      if (dev.pool().live(Handle{cls, i}) &&
          dev.pool().release(cls, i) == Errc::ok) {
        tick();
      }
    }
  }
  for (const TimerEntry& t : dev.pool().all_timers()) {
    dev.cancel_timer(t.timer_id);
    tick();
  }
  return ops;
}

}  // namespace dnp
