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

#ifndef DNP_VM_HPP_
#define DNP_VM_HPP_

#include <array>
#include <functional>

#include "dnp/resources.hpp"

namespace dnp {

enum class Disposition : uint8_t {
  fallthrough = 0,  // HALT or end of block: continue to next table
  output,
  drop,
  goto_table,
};

struct Report {
  uint32_t dest_port = kControllerPort;  // controller or physical injection
  uint32_t template_id = 0;
  uint64_t ts = 0;
  Bytes payload;
  bool operator==(const Report&) const = default;
};

struct StbWrite {
  uint32_t stb_index = 0;
  bool insert = false;  // false = delete
  Bytes key;
  uint64_t value = 0;
  bool accepted = true;  // false when dropped at capacity
};

// Per-packet execution state shared across pipeline stages.
struct ExecContext {
  Bytes* packet = nullptr;  // null on timer-fired executions
  bool packet_present = false;
  uint32_t ingress_port = 0;
  std::array<uint8_t, kMetadataBytes> metadata{};
  ByteView params;  // matched entry's params; mirrored into md[192..255]

  // queue-hook context
  bool queue_ctx = false;
  uint64_t queue_depth = 0;
  uint8_t queue_event = 0;  // 0 enqueue, 1 dequeue

  void reset_metadata() { metadata.fill(0); }
  void load_params(ByteView p);
};

// Side effects of one block execution, applied atomically at completion.
struct ExecResult {
  Disposition disp = Disposition::fallthrough;
  uint32_t out_port = 0;
  uint32_t next_table = 0;
  std::vector<Report> reports;
  std::vector<StbWrite> stb_writes;
};

struct ExecEnv {
  ResourcePool* pool = nullptr;
  const Clock* clock = nullptr;
};

// Executes a validated block. On error (unallocated resource, packet access
// in a timer context, ...) no effect is applied and the caller is expected
// to drop the packet and emit a diagnostic.
Errc execute(const ActionBlock& block, ExecEnv& env, ExecContext& ctx,
             ExecResult* out);

}  // namespace dnp

#endif  // DNP_VM_HPP_
