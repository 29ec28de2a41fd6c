/* Copyright 2026 The evchain Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef EVCHAIN_JSONL_H_
#define EVCHAIN_JSONL_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evchain {

// Line-delimited JSON helpers. Blank lines are skipped on read. Parse errors
// are reported as Error(kSchemaViolation) with a "line N" path.
std::vector<nlohmann::json> ReadJsonLines(const std::filesystem::path& path);

void WriteJsonLines(const std::filesystem::path& path,
                    const std::vector<nlohmann::ordered_json>& lines);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view content);

// A file-name-safe rendering of an id: characters outside [A-Za-z0-9._-]
// become '_' and a leading dot is guarded.
std::string SafeFileStem(std::string_view id);

// Current time as ISO-8601 UTC with second precision, e.g. 2026-01-31T08:00:00Z.
std::string UtcTimestamp();

}  // namespace evchain

#endif  // EVCHAIN_JSONL_H_
