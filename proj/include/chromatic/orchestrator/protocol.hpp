#pragma once

// Wire format of the coordinator/worker protocol: one JSON object per line,
// discriminated by "type".
//
//   worker -> coordinator  {"type":"hello","protocol":P,"build":B}
//   coordinator -> worker  {"type":"welcome"} | {"type":"reject","reason":...}
//   coordinator -> worker  {"type":"context", ...EvalContext...}
//   coordinator -> worker  {"type":"task","task_id",...}
//   worker -> coordinator  {"type":"result","task_id","reward","steps",...}
//                          {"type":"error","task_id","message"}
//   coordinator -> worker  {"type":"shutdown"}
//
// Doubles are written in shortest round-trip form, so parameters and
// normalizer statistics cross the wire bit-exactly.

#include <cstdint>
#include <string>

#include "chromatic/orchestrator/config.hpp"
#include "chromatic/orchestrator/pool.hpp"

namespace chromatic::orchestrator {

inline constexpr int kProtocolVersion = 1;

/// Identifies the binary; workers and coordinator must agree.
std::string build_id();

json task_to_json(const Task& task);
Task task_from_json(const json& j);

json result_to_json(const TaskResult& result);
TaskResult result_from_json(const json& j);

json context_to_json(const EvalContext& context);
EvalContext context_from_json(const json& j);

json normalizer_to_json(const es::Normalizer& normalizer);
es::Normalizer normalizer_from_json(const json& j);

/// Serializes without a trailing newline.
std::string encode_line(const json& j);
/// Throws ProtocolError on malformed JSON or a missing "type".
json decode_line(const std::string& line);

}  // namespace chromatic::orchestrator
