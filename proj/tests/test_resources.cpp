#include "doctest.h"
#include "dnp/resources.hpp"

using namespace dnp;

namespace {
PoolSizes tiny_pool() {
  PoolSizes s;
  s.counters = 4;
  s.meters = 2;
  s.registers = 4;
  s.state_tables = 2;
  s.stb_default_capacity = 8;
  s.timers = 4;
  s.samples = 2;
  return s;
}
}  // namespace

TEST_CASE("alloc exhausts at capacity and hands back zeroed cells") {
  ResourcePool pool(tiny_pool());
  uint32_t idx;
  for (int i = 0; i < 4; ++i) {
    REQUIRE(pool.alloc(ResClass::counter, {}, &idx) == Errc::ok);
    CHECK(idx == static_cast<uint32_t>(i));  // lowest free index first
    uint64_t v = 1;
    CHECK(pool.counter_read(idx, &v, nullptr) == Errc::ok);
    CHECK(v == 0);
  }
  CHECK(pool.alloc(ResClass::counter, {}, &idx) == Errc::pool_exhausted);
}

TEST_CASE("no leakage across tenants") {
  ResourcePool pool(tiny_pool());
  uint32_t idx;
  REQUIRE(pool.alloc(ResClass::counter, {}, &idx) == Errc::ok);
  pool.counter(idx)->value += 5;
  REQUIRE(pool.release(ResClass::counter, idx) == Errc::ok);
  uint32_t again;
  REQUIRE(pool.alloc(ResClass::counter, {}, &again) == Errc::ok);
  CHECK(again == idx);
  uint64_t v = 99;
  pool.counter_read(again, &v, nullptr);
  CHECK(v == 0);
}

TEST_CASE("release is blocked while a loaded block references the handle") {
  ResourcePool pool(tiny_pool());
  uint32_t idx;
  REQUIRE(pool.alloc(ResClass::reg, {}, &idx) == Errc::ok);
  pool.block_ref(Handle{ResClass::reg, idx});
  CHECK(pool.release(ResClass::reg, idx) == Errc::handle_in_use);
  pool.block_unref(Handle{ResClass::reg, idx});
  CHECK(pool.release(ResClass::reg, idx) == Errc::ok);
  CHECK(pool.release(ResClass::reg, idx) == Errc::no_such_handle);
}

TEST_CASE("pool stats conserve capacity") {
  ResourcePool pool(tiny_pool());
  uint32_t a, b;
  pool.alloc(ResClass::counter, {}, &a);
  pool.alloc(ResClass::state_table, {}, &b);
  PoolStats st = pool.stats();
  for (int i = 0; i < kResClassCount; ++i) {
    CHECK(st.per_class[i].allocated + st.per_class[i].free ==
          st.per_class[i].capacity);
  }
  CHECK(st.per_class[static_cast<int>(ResClass::counter)].allocated == 1);
}

TEST_CASE("state table keeps map semantics and dump order") {
  ResourcePool pool(tiny_pool());
  uint32_t s;
  ResourceParams p;
  p.stb_key_width_bits = 16;
  REQUIRE(pool.alloc(ResClass::state_table, p, &s) == Errc::ok);

  Bytes k1 = {0x00, 0x01}, k2 = {0x00, 0x02};
  CHECK(pool.stb_insert(s, k1, 10, 100) == Errc::ok);
  CHECK(pool.stb_insert(s, k2, 20, 200) == Errc::ok);
  CHECK(pool.stb_delete(s, k1) == Errc::ok);
  std::vector<StbEntry> dump;
  REQUIRE(pool.stb_dump(s, &dump) == Errc::ok);
  REQUIRE(dump.size() == 1);
  CHECK(dump[0].key == k2);

  // the ACK-without-SYN case: deleting an absent key must not fault
  CHECK(pool.stb_delete(s, Bytes{0xde, 0xad}) == Errc::ok);

  // overwrite refreshes insert_ts
  CHECK(pool.stb_insert(s, k2, 21, 300) == Errc::ok);
  pool.stb_dump(s, &dump);
  CHECK(dump[0].insert_ts == 300);
  CHECK(dump[0].value == 21);
}

TEST_CASE("state table drops inserts at capacity and counts them") {
  ResourcePool pool(tiny_pool());
  uint32_t s;
  ResourceParams p;
  p.stb_key_width_bits = 8;
  p.stb_capacity = 2;
  REQUIRE(pool.alloc(ResClass::state_table, p, &s) == Errc::ok);
  CHECK(pool.stb_insert(s, Bytes{1}, 0, 0) == Errc::ok);
  CHECK(pool.stb_insert(s, Bytes{2}, 0, 0) == Errc::ok);
  CHECK(pool.stb_insert(s, Bytes{3}, 0, 0) == Errc::table_full);
  CHECK(pool.stb(s)->entries.size() == 2);
  CHECK(pool.stb(s)->dropped_full == 1);
}

TEST_CASE("stb key width is enforced") {
  ResourcePool pool(tiny_pool());
  uint32_t s;
  ResourceParams p;
  p.stb_key_width_bits = 16;
  pool.alloc(ResClass::state_table, p, &s);
  CHECK(pool.stb_insert(s, Bytes{1}, 0, 0) == Errc::key_width_mismatch);
}

TEST_CASE("periodic timers fire at exact interval multiples") {
  ResourcePool pool(tiny_pool());
  uint32_t id;
  REQUIRE(pool.set_timer(1000, TimerMode::periodic, 7, 500, &id) == Errc::ok);
  auto due = pool.pop_due_timers(3600);
  REQUIRE(due.size() == 3);
  CHECK(due[0].next_fire == 1500);
  CHECK(due[1].next_fire == 2500);
  CHECK(due[2].next_fire == 3500);
  // no drift: the next deadline is still an exact multiple
  CHECK(*pool.next_timer_deadline() == 4500);
}

TEST_CASE("one-shot timers auto-release") {
  ResourcePool pool(tiny_pool());
  uint32_t id;
  REQUIRE(pool.set_timer(100, TimerMode::one_shot, 7, 0, &id) == Errc::ok);
  auto due = pool.pop_due_timers(100);
  REQUIRE(due.size() == 1);
  CHECK(pool.cancel_timer(id) == Errc::no_such_timer);
}

TEST_CASE("timers due at the same instant fire in timer_id order") {
  ResourcePool pool(tiny_pool());
  uint32_t a, b;
  pool.set_timer(100, TimerMode::one_shot, 1, 0, &a);
  pool.set_timer(100, TimerMode::one_shot, 2, 0, &b);
  auto due = pool.pop_due_timers(100);
  REQUIRE(due.size() == 2);
  CHECK(due[0].timer_id == a);
  CHECK(due[1].timer_id == b);
}

TEST_CASE("timer class is not directly allocatable") {
  ResourcePool pool(tiny_pool());
  uint32_t idx;
  CHECK(pool.alloc(ResClass::timer, {}, &idx) == Errc::invalid_argument);
}

TEST_CASE("two-rate meter colors") {
  MeterCell m;
  m.cir_bps = 1000;  // units per second
  m.cbs = 10;
  m.pir_bps = 2000;
  m.pbs = 20;
  m.tokens_c = 10;
  m.tokens_p = 20;
  // burst drains the committed bucket first
  CHECK(m.check(0, 10) == 0);   // green, consumes both buckets
  CHECK(m.check(0, 10) == 1);   // yellow: peak tokens remain
  CHECK(m.check(0, 5) == 2);    // red: everything drained
  // refill after one second restores the buckets
  CHECK(m.check(1000000000ull, 10) == 0);
}
