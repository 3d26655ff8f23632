#pragma once

#include <filesystem>

#include "chromatic/orchestrator/trainer.hpp"

namespace chromatic::orchestrator {

inline constexpr int kCheckpointSchemaVersion = 1;

json checkpoint_to_json(const TrainState& state);
/// Throws VersionMismatch on a schema mismatch and CorruptFile on anything
/// structurally wrong.
TrainState checkpoint_from_json(const json& j);

/// Writes `path` atomically (temporary file in the same directory, then rename).
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Atomic text write used for all run artifacts that are rewritten in place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace chromatic::orchestrator
