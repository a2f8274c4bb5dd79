#ifndef TIPPING_SCENARIO_JSON_HPP
#define TIPPING_SCENARIO_JSON_HPP

#include <filesystem>

#include "json.hpp"
#include "tipping/policy.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

// Strict readers: unknown or mistyped fields raise ParseError naming the field.
// Optional fields take the defaults of the C++ types (penalty_reward defaults
// to aligned_reward / 2).
RolePlayScenario role_play_from_json(const nlohmann::json& doc);
CoordinationGameSpec coordination_from_json(const nlohmann::json& doc);
ToolTaskModel tool_model_from_json(const nlohmann::json& doc);
RewardTuple rewards_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const RolePlayScenario& spec);
nlohmann::json to_json(const CoordinationGameSpec& spec);
nlohmann::json to_json(const ToolTaskModel& spec);
nlohmann::json to_json(const RewardTuple& rewards);

nlohmann::json to_json(const PolicySpec& spec);

// Parses a JSON document, reporting line/column on syntax errors.
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);
nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace tipping

#endif
