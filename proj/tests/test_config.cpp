#include "doctest.h"
#include "dnp/config.hpp"

using namespace dnp;

namespace {

const char* kSmallConfig = R"({
  "mtu": 2048,
  "max_stages": 32,
  "ports": [1, 2],
  "pools": {"counters": 64, "registers": 16},
  "resources": [{"class": "counter", "unit": "packets"}],
  "blocks": {
    "count_fwd": "CNTR_ADD c0 1\nOUTPUT 2\n",
    "to_two": ["OUTPUT 2"]
  },
  "tables": [
    {"id": 1, "key": ["pkt[0:16]"], "miss": "drop_report",
     "entries": [
       {"key": "0800", "mask": "ffff", "priority": 10, "action": "count_fwd"},
       {"key": "0000", "mask": "0000", "priority": 0, "action": "to_two"}
     ]}
  ],
  "queues": [{"port": 2, "capacity": 128, "low": 8, "high": 64}]
})";

Bytes make_packet(uint16_t kind) {
  Bytes b(64, 0);
  write_bits_u64(b, 0, 16, kind);
  return b;
}

}  // namespace

TEST_CASE("device config loads and forwards") {
  std::unique_ptr<Device> dev;
  std::string err;
  REQUIRE(load_device_config(kSmallConfig, 0, "d0", &dev, &err) == Errc::ok);
  REQUIRE(dev);
  CHECK(dev->chain() == std::vector<uint32_t>{1});
  CHECK(dev->has_port(1));
  CHECK(dev->pool().sizes().counters == 64);

  ForwardingOutcome out = dev->process_packet({make_packet(0x0800), 1, 0});
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 2);
  uint64_t v;
  dev->pool().counter_read(0, &v, nullptr);
  CHECK(v == 1);

  // non-0x0800 traffic takes the low-priority wildcard, no counting
  out = dev->process_packet({make_packet(0x86dd), 1, 1});
  REQUIRE(out.emitted.size() == 1);
  dev->pool().counter_read(0, &v, nullptr);
  CHECK(v == 1);
}

TEST_CASE("config parse errors carry context") {
  std::unique_ptr<Device> dev;
  std::string err;
  CHECK(load_device_config("{nope", 0, "d0", &dev, &err) == Errc::parse_error);
  CHECK(!err.empty());

  const char* bad_block = R"({"blocks": {"b": "FROB x"}})";
  CHECK(load_device_config(bad_block, 0, "d0", &dev, &err) == Errc::parse_error);
  CHECK(err.find("b") != std::string::npos);

  const char* bad_ref = R"({"tables": [{"id":1, "key":["pkt[0:8]"], "miss":"nope"}]})";
  CHECK(load_device_config(bad_ref, 0, "d0", &dev, &err) == Errc::parse_error);
}

TEST_CASE("teardown then reapply restores forwarding") {
  std::unique_ptr<Device> dev;
  std::string err;
  REQUIRE(load_device_config(kSmallConfig, 0, "d0", &dev, &err) == Errc::ok);

  size_t down_ops = teardown_device(*dev);
  CHECK(down_ops > 0);
  ForwardingOutcome out = dev->process_packet({make_packet(0x0800), 1, 10});
  CHECK(out.dropped);  // nothing left to match

  size_t up_ops = 0;
  REQUIRE(apply_device_config(*dev, kSmallConfig, &err, &up_ops) == Errc::ok);
  CHECK(up_ops > 0);
  out = dev->process_packet({make_packet(0x0800), 1, 20});
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 2);
}

TEST_CASE("runtime dump is loadable") {
  std::unique_ptr<Device> dev;
  std::string err;
  REQUIRE(load_device_config(kSmallConfig, 0, "d0", &dev, &err) == Errc::ok);
  std::string dumped = dev->dump_config_json();

  std::unique_ptr<Device> clone;
  REQUIRE(load_device_config(dumped, 1, "d1", &clone, &err) == Errc::ok);
  ForwardingOutcome out = clone->process_packet({make_packet(0x0800), 1, 0});
  REQUIRE(out.emitted.size() == 1);
  CHECK(out.emitted[0].first == 2);
}
