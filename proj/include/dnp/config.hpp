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

#ifndef DNP_CONFIG_HPP_
#define DNP_CONFIG_HPP_

#include <memory>

#include "dnp/pipeline.hpp"

namespace dnp {

// Pipeline configuration files. The boot-time schema (JSON; see
// docs/formats.md) lists ports, pools, named action blocks in assembler
// form, tables with their key specs and entries, and optional
// pre-allocated resources. This is also the payload the static
// "teardown + reload" baseline re-applies.

// Builds a fresh device from a config document.
Errc load_device_config(const std::string& json_text, uint32_t device_id,
                        const std::string& name, std::unique_ptr<Device>* out,
                        std::string* err, std::shared_ptr<Clock> clock = nullptr);

// Applies blocks/tables/entries of a config onto an existing (naked)
// device; pool sizes and ports must already fit. Used by the reload path.
// Returns the number of control operations applied via `ops_applied`.
Errc apply_device_config(Device& dev, const std::string& json_text,
                         std::string* err, size_t* ops_applied = nullptr,
                         const std::function<void()>& per_op = nullptr);

// Removes every table and non-builtin action and releases all resources;
// the teardown half of the static reprogramming baseline.
size_t teardown_device(Device& dev, const std::function<void()>& per_op = nullptr);

}  // namespace dnp

#endif  // DNP_CONFIG_HPP_
