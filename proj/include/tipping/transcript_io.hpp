#ifndef TIPPING_TRANSCRIPT_IO_HPP
#define TIPPING_TRANSCRIPT_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tipping/engine_multi.hpp"
#include "tipping/engine_single.hpp"

namespace tipping {

// One JSON object per line, trailing newline included. A failed replication
// ends with {"replication": i, "failed": true, "error": ...}.
std::string to_jsonl(const Transcript& transcript, int replication);
std::string to_jsonl(const ToolTranscript& transcript, int replication);
std::string to_jsonl(const MultiTranscript& transcript, int replication);

std::vector<nlohmann::json> parse_jsonl(std::string_view text, const std::string& origin);

// Inverse of to_jsonl up to fields that are not persisted (outcome texts).
Transcript role_play_from_records(const std::vector<nlohmann::json>& records);
ToolTranscript tool_from_records(const std::vector<nlohmann::json>& records);
MultiTranscript multi_from_records(const std::vector<nlohmann::json>& records,
                                   const CoordinationGameSpec& game);

std::string transcript_file_name(int replication);

// Write to a sibling temporary, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace tipping

#endif
