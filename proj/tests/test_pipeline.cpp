#include "doctest.h"
#include "dnp/pipeline.hpp"

using namespace dnp;

namespace {

FieldRef md(uint32_t off, uint32_t len) {
  return FieldRef{FieldSpace::metadata, off, len};
}
FieldRef pktf(uint32_t off, uint32_t len) {
  return FieldRef{FieldSpace::packet, off, len};
}

ActionBlock output_block(uint32_t port) {
  ActionBlock b;
  b.instructions.push_back(Instruction::output(Operand::of_imm(port)));
  return b.finalize();
}

MatchKey wildcard16() { return MatchKey{Bytes{0, 0}, Bytes{0, 0}}; }

Bytes make_packet(uint32_t flow, size_t size = 64) {
  Bytes b(size, 0);
  write_bits_u64(b, 0, 16, 0x0800);
  write_bits_u64(b, 16, 32, flow);
  write_bits_u64(b, 56, 8, 6);
  return b;
}

PacketBuffer pb(const Bytes& bytes, uint32_t port = 1, uint64_t ts = 0) {
  return PacketBuffer{bytes, port, ts};
}

// single table, key pkt[0:16], wildcard entry -> OUTPUT 2
struct IdentityDevice {
  Device dev;
  uint32_t fwd_slot = 0;
  uint64_t entry_id = 0;

  IdentityDevice() : dev(0, "d0") {
    dev.add_port(1);
    dev.add_port(2);
    dev.add_port(3);
    TableDef def;
    def.table_id = 1;
    def.key_spec = {pktf(0, 16)};
    REQUIRE(dev.create_table(def, TablePosition::end()) == Errc::ok);
    REQUIRE(dev.load_action(output_block(2), &fwd_slot) == Errc::ok);
    REQUIRE(dev.insert_entry(1, wildcard16(), 0, fwd_slot, {}, &entry_id) ==
            Errc::ok);
  }
};

// reference single-packet interpreter for lookup: scan every entry
const FlowEntry* brute_force_lookup(const std::vector<FlowEntry>& entries,
                                    ByteView key) {
  const FlowEntry* best = nullptr;
  for (const FlowEntry& e : entries) {
    if (!ternary_match(key, e.key.value, e.key.mask)) continue;
    if (!best || e.priority > best->priority ||
        (e.priority == best->priority && e.entry_id < best->entry_id)) {
      best = &e;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("identity forward") {
  IdentityDevice rig;
  Bytes pkt = make_packet(1);
  ForwardingOutcome out = rig.dev.process_packet(pb(pkt));
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 2);
  CHECK(out.emitted[0].second == pkt);
  CHECK(!out.dropped);
}

TEST_CASE("counter action counts three matching packets") {
  IdentityDevice rig;
  uint32_t c;
  REQUIRE(rig.dev.pool().alloc(ResClass::counter, {}, &c) == Errc::ok);
  ActionBlock b;
  b.instructions.push_back(
      Instruction::cntr_add(Handle{ResClass::counter, c}, Operand::of_imm(1)));
  b.instructions.push_back(Instruction::output(Operand::of_imm(2)));
  b.finalize();
  uint32_t slot;
  REQUIRE(rig.dev.load_action(b, &slot) == Errc::ok);
  REQUIRE(rig.dev.modify_entry(1, rig.entry_id, slot, std::nullopt) == Errc::ok);

  for (int i = 0; i < 3; ++i) rig.dev.process_packet(pb(make_packet(i)));
  uint64_t v;
  rig.dev.pool().counter_read(c, &v, nullptr);
  CHECK(v == 3);
}

TEST_CASE("higher priority entry wins when both match") {
  IdentityDevice rig;
  uint32_t s3;
  REQUIRE(rig.dev.load_action(output_block(3), &s3) == Errc::ok);
  // 0x08??: matches the test packet; priority 10 beats the priority-0 wildcard
  // and a priority-5 overlapping entry
  MatchKey k10{Bytes{0x08, 0x00}, Bytes{0xff, 0x00}};
  MatchKey k5{Bytes{0x00, 0x00}, Bytes{0x00, 0x00}};
  uint64_t e10, e5;
  REQUIRE(rig.dev.insert_entry(1, k10, 10, s3, {}, &e10) == Errc::ok);
  REQUIRE(rig.dev.insert_entry(1, k5, 5, rig.fwd_slot, {}, &e5) == Errc::ok);

  Bytes pkt = make_packet(1);
  ForwardingOutcome out = rig.dev.process_packet(pb(pkt));
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 3);

  // the reference interpreter agrees
  Bytes key = extract_bits(pkt, 0, 16);
  const FlowEntry* want = brute_force_lookup(rig.dev.table(1)->entries, key);
  REQUIRE(want != nullptr);
  CHECK(want->entry_id == e10);
}

TEST_CASE("lookup: empty, exact and ternary cases") {
  Device dev(0, "d0");
  dev.add_port(1);
  TableDef def;
  def.table_id = 1;
  def.key_spec = {pktf(0, 8)};
  REQUIRE(dev.create_table(def, TablePosition::end()) == Errc::ok);

  const FlowEntry* hit = nullptr;
  Bytes key{0xAB};
  REQUIRE(dev.lookup(1, key, 8, &hit) == Errc::ok);
  CHECK(hit == nullptr);  // empty table

  uint32_t slot;
  dev.load_action(output_block(1), &slot);
  uint64_t e1, e9;
  REQUIRE(dev.insert_entry(1, MatchKey{Bytes{0x80}, Bytes{0x80}}, 1, slot, {},
                           &e1) == Errc::ok);
  REQUIRE(dev.insert_entry(1, MatchKey{Bytes{0xAB}, Bytes{0xFF}}, 9, slot, {},
                           &e9) == Errc::ok);

  REQUIRE(dev.lookup(1, key, 8, &hit) == Errc::ok);
  REQUIRE(hit != nullptr);
  CHECK(hit->entry_id == e9);
  const FlowEntry* want = brute_force_lookup(dev.table(1)->entries, key);
  CHECK(want->entry_id == hit->entry_id);

  CHECK(dev.lookup(99, key, 8, &hit) == Errc::no_such_table);
  CHECK(dev.lookup(1, key, 16, &hit) == Errc::key_width_mismatch);
}

TEST_CASE("priority determinism: lookup equals brute force on random tables") {
  Rng rng(777);
  for (int trial = 0; trial < 30; ++trial) {
    Device dev(0, "d0");
    dev.add_port(1);
    TableDef def;
    def.table_id = 1;
    def.key_spec = {pktf(0, 16)};
    dev.create_table(def, TablePosition::end());
    uint32_t slot;
    dev.load_action(output_block(1), &slot);
    int n = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < n; ++i) {
      Bytes mask = {static_cast<uint8_t>(rng.below(256)),
                    static_cast<uint8_t>(rng.below(256))};
      Bytes value = {static_cast<uint8_t>(rng.below(256) & mask[0]),
                     static_cast<uint8_t>(rng.below(256) & mask[1])};
      dev.insert_entry(1, MatchKey{value, mask},
                       static_cast<int32_t>(rng.below(5)), slot, {}, nullptr);
    }
    for (int probe = 0; probe < 40; ++probe) {
      Bytes key = {static_cast<uint8_t>(rng.below(256)),
                   static_cast<uint8_t>(rng.below(256))};
      const FlowEntry* got = nullptr;
      REQUIRE(dev.lookup(1, key, 16, &got) == Errc::ok);
      const FlowEntry* want = brute_force_lookup(dev.table(1)->entries, key);
      if (want == nullptr) {
        CHECK(got == nullptr);
      } else {
        REQUIRE(got != nullptr);
        CHECK(got->entry_id == want->entry_id);
      }
    }
  }
}

TEST_CASE("entry mutation: insert, modify pointer, delete") {
  IdentityDevice rig;
  uint32_t s7;
  REQUIRE(rig.dev.load_action(output_block(3), &s7) == Errc::ok);
  uint32_t before = rig.dev.slot_refcount(rig.fwd_slot);

  // switching the action pointer redirects traffic and moves refcounts
  REQUIRE(rig.dev.modify_entry(1, rig.entry_id, s7, std::nullopt) == Errc::ok);
  CHECK(rig.dev.slot_refcount(rig.fwd_slot) == before - 1);
  CHECK(rig.dev.slot_refcount(s7) == 1);
  ForwardingOutcome out = rig.dev.process_packet(pb(make_packet(1)));
  CHECK(out.emitted[0].first == 3);

  CHECK(rig.dev.delete_entry(1, 0xdead) == Errc::no_such_entry);
  REQUIRE(rig.dev.delete_entry(1, rig.entry_id) == Errc::ok);
  CHECK(rig.dev.slot_refcount(s7) == 0);

  // duplicate (key, priority) is rejected
  uint64_t e;
  REQUIRE(rig.dev.insert_entry(1, wildcard16(), 0, s7, {}, &e) == Errc::ok);
  CHECK(rig.dev.insert_entry(1, wildcard16(), 0, s7, {}, nullptr) ==
        Errc::duplicate_entry);
  CHECK(rig.dev.insert_entry(1, wildcard16(), 1, 9999, {}, nullptr) ==
        Errc::dangling_action_ptr);
}

TEST_CASE("load/delete action lifecycle") {
  Device dev(0, "d0");
  dev.add_port(2);
  uint32_t slot;
  REQUIRE(dev.load_action(output_block(2), &slot) == Errc::ok);
  CHECK(slot >= 2);
  CHECK(dev.slot_refcount(slot) == 0);

  ActionBlock bad;
  bad.instructions.push_back(Instruction::branch(
      Opcode::BRANCH_EQ, md(0, 8), Operand::of_imm(0), -2));
  bad.finalize();
  uint32_t s2;
  CHECK(dev.load_action(bad, &s2) == Errc::backward_branch);

  TableDef def;
  def.table_id = 1;
  def.key_spec = {pktf(0, 8)};
  dev.create_table(def, TablePosition::end());
  uint64_t e1, e2;
  dev.insert_entry(1, MatchKey{Bytes{1}, Bytes{0xff}}, 0, slot, {}, &e1);
  dev.insert_entry(1, MatchKey{Bytes{2}, Bytes{0xff}}, 0, slot, {}, &e2);
  CHECK(dev.slot_refcount(slot) == 2);
  CHECK(dev.delete_action(slot) == Errc::slot_in_use);
  dev.delete_entry(1, e1);
  dev.delete_entry(1, e2);
  REQUIRE(dev.delete_action(slot) == Errc::ok);
  CHECK(dev.delete_action(slot) == Errc::no_such_slot);
}

TEST_CASE("switch_action_pointer is hitless under a continuous stream") {
  IdentityDevice rig;
  uint32_t s3;
  REQUIRE(rig.dev.load_action(output_block(3), &s3) == Errc::ok);

  std::vector<uint32_t> outputs;
  for (int i = 0; i < 10000; ++i) {
    if (i == 5000) {
      uint32_t prev;
      REQUIRE(rig.dev.switch_action_pointer(rig.fwd_slot, s3, &prev) == Errc::ok);
      CHECK(prev == rig.fwd_slot);
    }
    ForwardingOutcome out =
        rig.dev.process_packet(pb(make_packet(i), 1, static_cast<uint64_t>(i)));
    REQUIRE(out.emitted.size() == 1);  // no gap, no drop
    outputs.push_back(out.emitted[0].first);
  }
  // prefix under x, suffix under x', never a mix
  for (int i = 0; i < 5000; ++i) CHECK(outputs[i] == 2);
  for (int i = 5000; i < 10000; ++i) CHECK(outputs[i] == 3);
}

TEST_CASE("switching a slot to its own block is a no-op; switch back restores") {
  IdentityDevice rig;
  uint32_t prev;
  REQUIRE(rig.dev.switch_action_pointer(rig.fwd_slot, rig.fwd_slot, &prev) ==
          Errc::ok);
  ForwardingOutcome out = rig.dev.process_packet(pb(make_packet(1)));
  CHECK(out.emitted[0].first == 2);

  uint32_t s3;
  rig.dev.load_action(output_block(3), &s3);
  rig.dev.switch_action_pointer(rig.fwd_slot, s3, &prev);
  rig.dev.switch_action_pointer(rig.fwd_slot, prev, nullptr);
  out = rig.dev.process_packet(pb(make_packet(2), 1, 1));
  CHECK(out.emitted[0].first == 2);

  CHECK(rig.dev.switch_action_pointer(999, s3, nullptr) == Errc::no_such_slot);
  CHECK(rig.dev.switch_action_pointer(rig.fwd_slot, 999, nullptr) ==
        Errc::block_not_loaded);
}

TEST_CASE("hitless mutations leave the emission sequence unchanged") {
  // run the same trace with and without benign runtime mutations
  auto run = [](bool mutate) {
    IdentityDevice rig;
    std::vector<std::pair<uint32_t, Bytes>> emissions;
    for (int i = 0; i < 2000; ++i) {
      if (mutate && i == 500) {
        TableDef def;
        def.table_id = 9;
        def.key_spec = {pktf(0, 8)};
        REQUIRE(rig.dev.create_table(def, TablePosition::end()) == Errc::ok);
      }
      if (mutate && i == 1000) {
        uint32_t s;
        REQUIRE(rig.dev.load_action(output_block(3), &s) == Errc::ok);
      }
      if (mutate && i == 1500) {
        // behavior-equivalent block: NOP then OUTPUT 2
        ActionBlock b;
        b.instructions.push_back(Instruction::nop());
        b.instructions.push_back(Instruction::output(Operand::of_imm(2)));
        b.finalize();
        uint32_t s;
        REQUIRE(rig.dev.load_action(b, &s) == Errc::ok);
        REQUIRE(rig.dev.switch_action_pointer(rig.fwd_slot, s, nullptr) ==
                Errc::ok);
      }
      auto out =
          rig.dev.process_packet(pb(make_packet(i), 1, static_cast<uint64_t>(i)));
      for (auto& e : out.emitted) emissions.push_back(e);
      REQUIRE(!out.dropped);
    }
    return emissions;
  };
  CHECK(run(false) == run(true));
}

TEST_CASE("create_table positions and inverses") {
  IdentityDevice rig;
  std::vector<uint32_t> orig_chain = rig.dev.chain();

  TableDef def;
  def.table_id = 2;
  def.key_spec = {pktf(0, 8)};
  CHECK(rig.dev.create_table(def, TablePosition::after(42)) ==
        Errc::invalid_position);
  REQUIRE(rig.dev.create_table(def, TablePosition::after(1)) == Errc::ok);
  CHECK(rig.dev.chain() == std::vector<uint32_t>{1, 2});
  CHECK(rig.dev.create_table(def, TablePosition::end()) ==
        Errc::duplicate_table_id);

  // insert then immediately delete: the pipeline graph equals the original
  REQUIRE(rig.dev.delete_table(2) == Errc::ok);
  CHECK(rig.dev.chain() == orig_chain);
  CHECK(rig.dev.delete_table(2) == Errc::no_such_table);
}

TEST_CASE("appended empty table takes the miss action for forwarded traffic") {
  // a pipeline whose only entry falls through (continue) reaches the new
  // empty table at the chain end; its default miss drops + reports
  Device dev(0, "d0");
  dev.add_port(1);
  TableDef t1;
  t1.table_id = 1;
  t1.key_spec = {pktf(0, 16)};
  REQUIRE(dev.create_table(t1, TablePosition::end()) == Errc::ok);
  ActionBlock cont;
  cont.instructions.push_back(Instruction::halt());
  cont.finalize();
  uint32_t s;
  dev.load_action(cont, &s);
  dev.insert_entry(1, wildcard16(), 0, s, {}, nullptr);

  TableDef t2;
  t2.table_id = 2;
  t2.key_spec = {pktf(0, 16)};
  REQUIRE(dev.create_table(t2, TablePosition::end()) == Errc::ok);

  ForwardingOutcome out = dev.process_packet(pb(make_packet(1)));
  CHECK(out.dropped);
  REQUIRE(out.reports.size() == 1);
  CHECK(out.reports[0].template_id == kTplMiss);
}

TEST_CASE("mid-stream table insertion drops nothing") {
  IdentityDevice rig;
  uint64_t drops_before = rig.dev.drops().total();
  for (int i = 0; i < 1000; ++i) {
    if (i == 500) {
      TableDef def;
      def.table_id = 7;
      def.key_spec = {pktf(0, 8)};
      REQUIRE(rig.dev.create_table(def, TablePosition::after(1)) == Errc::ok);
    }
    auto out =
        rig.dev.process_packet(pb(make_packet(i), 1, static_cast<uint64_t>(i)));
    REQUIRE(out.emitted.size() == 1);
  }
  CHECK(rig.dev.drops().total() == drops_before);
}

TEST_CASE("stage limit bounds table loops") {
  Device dev(0, "d0");
  dev.add_port(1);
  ActionBlock loop;
  loop.instructions.push_back(Instruction::goto_table(1));
  loop.finalize();
  uint32_t s;
  dev.load_action(loop, &s);
  TableDef def;
  def.table_id = 1;
  def.key_spec = {pktf(0, 8)};
  dev.create_table(def, TablePosition::end());
  dev.insert_entry(1, MatchKey{Bytes{0}, Bytes{0}}, 0, s, {}, nullptr);

  ForwardingOutcome out = dev.process_packet(pb(make_packet(1)));
  CHECK(out.dropped);
  CHECK(out.drop_reason == Errc::stage_limit_exceeded);
  CHECK(dev.drops().stage_limit == 1);
  REQUIRE(!out.reports.empty());
  CHECK(out.reports.back().template_id == kTplStageLimit);
}

TEST_CASE("short packets are malformed at the entry table") {
  IdentityDevice rig;
  Bytes tiny = {0xab};  // key spec needs 16 bits
  ForwardingOutcome out = rig.dev.process_packet(pb(tiny));
  CHECK(out.dropped);
  CHECK(out.drop_reason == Errc::malformed_packet);
  CHECK(rig.dev.drops().malformed == 1);
}

TEST_CASE("metadata matches work across stages") {
  // stage 1 tags metadata, stage 2 matches on it
  Device dev(0, "d0");
  dev.add_port(1);
  dev.add_port(5);

  BlockBuilder bb;
  bb.add(Instruction::set_field(md(0, 8), 0x5a));
  bb.add(Instruction::goto_table(2));
  ActionBlock tag = bb.build();
  uint32_t tag_slot;
  REQUIRE(dev.load_action(tag, &tag_slot) == Errc::ok);

  uint32_t out5;
  ActionBlock o5;
  o5.instructions.push_back(Instruction::output(Operand::of_imm(5)));
  o5.finalize();
  dev.load_action(o5, &out5);

  TableDef t1;
  t1.table_id = 1;
  t1.key_spec = {pktf(0, 16)};
  dev.create_table(t1, TablePosition::end());
  TableDef t2;
  t2.table_id = 2;
  t2.key_spec = {FieldRef{FieldSpace::metadata, 0, 8}};
  dev.create_table(t2, TablePosition::end());

  dev.insert_entry(1, wildcard16(), 0, tag_slot, {}, nullptr);
  dev.insert_entry(2, MatchKey{Bytes{0x5a}, Bytes{0xff}}, 1, out5, {}, nullptr);

  ForwardingOutcome out = dev.process_packet(pb(make_packet(1)));
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 5);
}

TEST_CASE("entry params surface in the metadata window") {
  // the action reads its output port from the entry's parameter block
  Device dev(0, "d0");
  dev.add_port(1);
  dev.add_port(9);
  ActionBlock b;
  b.instructions.push_back(Instruction::output(
      Operand::of_field(md(kParamsMetaOffset * 8, 32))));
  b.finalize();
  uint32_t s;
  REQUIRE(dev.load_action(b, &s) == Errc::ok);
  TableDef def;
  def.table_id = 1;
  def.key_spec = {pktf(0, 16)};
  dev.create_table(def, TablePosition::end());
  Bytes params(4);
  write_bits_u64(params, 0, 32, 9);
  dev.insert_entry(1, wildcard16(), 0, s, params, nullptr);

  ForwardingOutcome out = dev.process_packet(pb(make_packet(1)));
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 9);
}

TEST_CASE("port-load timer: one report over ten seconds, reset each tick") {
  // oracle replay of the pull-free port monitor: every second the timer
  // action checks the byte counter against the threshold and resets it
  const uint64_t threshold = 100;
  std::vector<uint64_t> per_second_bytes = {50, 50, 50, 200, 50,
                                            50, 50, 50,  50, 50};
  int oracle_reports = 0;
  for (uint64_t b : per_second_bytes) {
    if (b >= threshold) oracle_reports++;
  }
  REQUIRE(oracle_reports == 1);

  Device dev(0, "d0");
  dev.add_port(1);
  dev.add_port(2);
  uint32_t c;
  ResourceParams cp;
  cp.unit = CounterUnit::bytes;
  REQUIRE(dev.pool().alloc(ResClass::counter, cp, &c) == Errc::ok);
  Handle ch{ResClass::counter, c};

  // ingress hook: count bytes
  ActionBlock count;
  count.instructions.push_back(Instruction::cntr_add(ch, Operand::of_pkt_len()));
  count.finalize();
  uint32_t count_slot;
  REQUIRE(dev.load_action(count, &count_slot) == Errc::ok);
  uint32_t prev;
  REQUIRE(dev.set_hook(1, HookPoint::port_ingress, count_slot, &prev) == Errc::ok);

  // timer action: report when the load crossed the threshold, reset always
  BlockBuilder bb;
  bb.add(Instruction::cntr_add(ch, Operand::of_imm(0), md(0, 64)));
  bb.branch_to(Opcode::BRANCH_LT, md(0, 64), Operand::of_imm(threshold), "reset");
  bb.add(Instruction::timestamp(md(64, 64)));
  bb.add(Instruction::gen_pkt(kControllerPort, 300,
                              {Operand::of_imm(1, 32), Operand::of_field(md(0, 64)),
                               Operand::of_field(md(64, 64))}));
  bb.mark("reset");
  bb.add(Instruction::cntr_set(ch, Operand::of_imm(0)));
  ActionBlock tick = bb.build();
  uint32_t tick_slot;
  REQUIRE(dev.load_action(tick, &tick_slot) == Errc::ok);

  // identity forwarding so packets flow
  uint32_t fwd;
  dev.load_action(output_block(2), &fwd);
  TableDef def;
  def.table_id = 1;
  def.key_spec = {pktf(0, 16)};
  dev.create_table(def, TablePosition::end());
  dev.insert_entry(1, wildcard16(), 0, fwd, {}, nullptr);

  int reports = 0;
  dev.set_report_sink([&](const Report& r) {
    if (r.template_id == 300) reports++;
  });

  uint32_t timer_id;
  REQUIRE(dev.set_timer(1000000000ull, TimerMode::periodic, tick_slot,
                        &timer_id) == Errc::ok);

  uint64_t t = 0;
  for (size_t sec = 0; sec < per_second_bytes.size(); ++sec) {
    // one packet of the scripted size per second
    Bytes pkt = make_packet(static_cast<uint32_t>(sec), per_second_bytes[sec]);
    dev.virtual_clock()->set_ns(t + 1000);
    dev.process_packet(PacketBuffer{pkt, 1, t + 1000});
    t += 1000000000ull;
    dev.advance_clock(t);
  }
  CHECK(reports == oracle_reports);
  uint64_t v;
  dev.pool().counter_read(c, &v, nullptr);
  CHECK(v == 0);  // reset on the final tick

  REQUIRE(dev.cancel_timer(timer_id) == Errc::ok);
  CHECK(dev.cancel_timer(timer_id) == Errc::no_such_timer);
}

TEST_CASE("timer actions must not need a packet") {
  Device dev(0, "d0");
  dev.add_port(2);
  uint32_t s;
  REQUIRE(dev.load_action(output_block(2), &s) == Errc::ok);
  uint32_t id;
  CHECK(dev.set_timer(1000, TimerMode::periodic, s, &id) ==
        Errc::action_needs_packet);
}

TEST_CASE("queue overflow drops and counts") {
  Device dev(0, "d0");
  dev.add_port(2);
  dev.set_queue_bounds(2, 2, 0, 2);
  dev.set_queue_sink([](uint32_t) {});  // keep packets queued
  CHECK(dev.queue_enqueue(2, Bytes{1}));
  CHECK(dev.queue_enqueue(2, Bytes{2}));
  CHECK(!dev.queue_enqueue(2, Bytes{3}));
  CHECK(dev.drops().queue_overflow == 1);
  CHECK(dev.queue_depth(2) == 2);
  Bytes out;
  CHECK(dev.queue_dequeue(2, &out));
  CHECK(out == Bytes{1});
  CHECK(dev.queue_depth(2) == 1);
}

TEST_CASE("refcounts stay consistent through random mutation storms") {
  Rng rng(4242);
  IdentityDevice rig;
  std::vector<uint32_t> slots{rig.fwd_slot};
  std::vector<std::pair<uint32_t, uint64_t>> entries{{1, rig.entry_id}};

  for (int step = 0; step < 300; ++step) {
    switch (rng.below(5)) {
      case 0: {
        uint32_t s;
        if (rig.dev.load_action(output_block(2), &s) == Errc::ok)
          slots.push_back(s);
        break;
      }
      case 1: {
        if (slots.empty()) break;
        uint32_t s = slots[rng.below(slots.size())];
        MatchKey k{Bytes{static_cast<uint8_t>(rng.below(256)), 0},
                   Bytes{0xff, 0}};
        uint64_t id;
        if (rig.dev.insert_entry(1, k, static_cast<int32_t>(rng.below(100)), s,
                                 {}, &id) == Errc::ok) {
          entries.push_back({1, id});
        }
        break;
      }
      case 2: {
        if (entries.size() <= 1) break;
        size_t i = 1 + rng.below(entries.size() - 1);
        rig.dev.delete_entry(entries[i].first, entries[i].second);
        entries.erase(entries.begin() + static_cast<ptrdiff_t>(i));
        break;
      }
      case 3: {
        if (slots.size() < 2 || entries.empty()) break;
        auto& e = entries[rng.below(entries.size())];
        rig.dev.modify_entry(e.first, e.second, slots[rng.below(slots.size())],
                             std::nullopt);
        break;
      }
      case 4: {
        if (slots.size() < 2) break;
        rig.dev.delete_action(slots[rng.below(slots.size())]);  // may refuse
        break;
      }
    }
    std::string what;
    bool ok = rig.dev.audit_refcounts(&what);
    if (!ok) FAIL(what);
  }
}

TEST_CASE("snapshots are stable across a load/delete cycle") {
  IdentityDevice rig;
  std::string before = rig.dev.snapshot_json();
  uint32_t s;
  REQUIRE(rig.dev.load_action(output_block(3), &s) == Errc::ok);
  CHECK(rig.dev.snapshot_json() != before);
  REQUIRE(rig.dev.delete_action(s) == Errc::ok);
  CHECK(rig.dev.snapshot_json() == before);
}
