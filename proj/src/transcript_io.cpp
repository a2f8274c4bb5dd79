#include "tipping/transcript_io.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "tipping/scenario_json.hpp"

namespace tipping {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void put_line(std::string& out, const ordered_json& record) {
  out += record.dump();
  out += '\n';
}

void put_failure(std::string& out, int replication, Seed seed, const std::string& error) {
  ordered_json rec;
  rec["replication"] = replication;
  rec["failed"] = true;
  rec["error"] = error;
  rec["seed"] = seed;
  put_line(out, rec);
}

template <class T>
T field(const json& rec, const char* key) {
  try {
    return rec.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError,
                fmt::format("transcript record {}: field \"{}\": {}", rec.dump(), key, e.what()));
  }
}

bool is_failure(const json& rec) { return rec.value("failed", false); }

}  // namespace

std::string transcript_file_name(int replication) {
  return fmt::format("replication_{:05d}.jsonl", replication);
}

std::string to_jsonl(const Transcript& t, int replication) {
  std::string out;
  for (std::size_t i = 0; i < t.history.size(); ++i) {
    const auto& e = t.history[i];
    ordered_json rec;
    rec["replication"] = replication;
    rec["round"] = e.round;
    rec["agent"] = "solo";
    rec["decision_label"] = e.decision.surface_label;
    rec["decision_role"] = std::string(to_string(e.decision.role));
    rec["reward"] = e.feedback.reward;
    if (e.feedback.detected) rec["detected"] = *e.feedback.detected;
    if (i < t.p_deviate.size() && t.p_deviate[i]) rec["p_deviate"] = *t.p_deviate[i];
    rec["policy"] = t.policy;
    rec["seed"] = t.seed;
    put_line(out, rec);
  }
  if (t.failure) put_failure(out, replication, t.seed, *t.failure);
  return out;
}

std::string to_jsonl(const ToolTranscript& t, int replication) {
  std::string out;
  auto emit = [&](const ToolRecord& r) {
    ordered_json rec;
    rec["replication"] = replication;
    rec["round"] = r.round;
    rec["agent"] = "solo";
    rec["task_kind"] = std::string(to_string(r.kind));
    rec["decision_label"] = r.decision.surface_label;
    rec["decision_role"] = std::string(to_string(r.decision.role));
    rec["reward"] = r.reward;
    rec["cost"] = r.cost;
    rec["correct"] = r.correct;
    if (r.p_deviate) rec["p_deviate"] = *r.p_deviate;
    rec["policy"] = t.policy;
    rec["seed"] = t.seed;
    put_line(out, rec);
  };
  for (const auto& round : t.rounds) {
    for (const auto& r : round.warmup_records) emit(r);
    for (const auto& r : round.eval_records) emit(r);
  }
  if (t.failure) put_failure(out, replication, t.seed, *t.failure);
  return out;
}

std::string to_jsonl(const MultiTranscript& t, int replication) {
  std::string out;
  for (const auto& round : t.history.rounds()) {
    for (std::size_t i = 0; i < round.joint.size(); ++i) {
      ordered_json rec;
      rec["replication"] = replication;
      rec["round"] = round.round;
      rec["agent_id"] = i;
      rec["decision_label"] = round.joint[i].surface_label;
      rec["decision_role"] = std::string(to_string(round.joint[i].role));
      rec["success"] = round.outcome.success;
      rec["multiplier"] = round.outcome.per_agent_multiplier[i];
      rec["delta"] = round.outcome.per_agent_delta[i];
      rec["capital_after"] = round.capital_after[i];
      rec["seed"] = t.seed;
      put_line(out, rec);
    }
    ordered_json summary;
    summary["replication"] = replication;
    summary["round"] = round.round;
    summary["colluder_count"] = round.outcome.colluder_count;
    summary["success"] = round.outcome.success;
    put_line(out, summary);
  }
  if (t.failure) put_failure(out, replication, t.seed, *t.failure);
  return out;
}

std::vector<json> parse_jsonl(std::string_view text, const std::string& origin) {
  std::vector<json> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    records.push_back(parse_json_text(std::string(line), fmt::format("{}:{}", origin, line_no)));
  }
  return records;
}

Transcript role_play_from_records(const std::vector<json>& records) {
  Transcript t;
  for (const auto& rec : records) {
    t.seed = field<Seed>(rec, "seed");
    if (is_failure(rec)) {
      t.failure = field<std::string>(rec, "error");
      continue;
    }
    t.policy = field<std::string>(rec, "policy");
    HistoryEntry e;
    e.round = field<int>(rec, "round");
    e.decision.surface_label = field<std::string>(rec, "decision_label");
    e.decision.role = role_from_string(field<std::string>(rec, "decision_role"));
    e.feedback.reward = field<double>(rec, "reward");
    if (rec.contains("detected")) e.feedback.detected = field<bool>(rec, "detected");
    t.p_deviate.push_back(rec.contains("p_deviate")
                              ? std::optional<double>(field<double>(rec, "p_deviate"))
                              : std::nullopt);
    t.deviated.push_back(e.decision.role == Role::Deviant);
    t.history.append(std::move(e));
  }
  return t;
}

ToolTranscript tool_from_records(const std::vector<json>& records) {
  ToolTranscript t;
  for (const auto& rec : records) {
    t.seed = field<Seed>(rec, "seed");
    if (is_failure(rec)) {
      t.failure = field<std::string>(rec, "error");
      continue;
    }
    t.policy = field<std::string>(rec, "policy");
    ToolRecord r;
    r.round = field<int>(rec, "round");
    r.kind = task_kind_from_string(field<std::string>(rec, "task_kind"));
    r.decision.surface_label = field<std::string>(rec, "decision_label");
    r.decision.role = role_from_string(field<std::string>(rec, "decision_role"));
    r.reward = field<double>(rec, "reward");
    r.cost = field<double>(rec, "cost");
    r.correct = field<bool>(rec, "correct");
    if (rec.contains("p_deviate")) r.p_deviate = field<double>(rec, "p_deviate");
    if (t.rounds.empty() || t.rounds.back().round != r.round) {
      t.rounds.push_back(ToolRoundResult{r.round, {}, {}});
    }
    auto& round = t.rounds.back();
    (r.kind == TaskKind::Simple ? round.warmup_records : round.eval_records).push_back(std::move(r));
  }
  return t;
}

MultiTranscript multi_from_records(const std::vector<json>& records,
                                   const CoordinationGameSpec& game) {
  MultiTranscript t;
  t.game = game;
  RoundRecord pending;
  auto reset = [&](int round) {
    pending = RoundRecord{};
    pending.round = round;
    pending.joint.resize(game.n);
    pending.outcome.per_agent_multiplier.resize(game.n);
    pending.outcome.per_agent_delta.resize(game.n);
    pending.capital_after.resize(game.n);
  };
  reset(1);
  for (const auto& rec : records) {
    if (is_failure(rec)) {
      t.seed = field<Seed>(rec, "seed");
      t.failure = field<std::string>(rec, "error");
      continue;
    }
    const int round = field<int>(rec, "round");
    if (round != pending.round) reset(round);
    if (rec.contains("agent_id")) {
      t.seed = field<Seed>(rec, "seed");
      const int i = field<int>(rec, "agent_id");
      if (i < 0 || i >= game.n) {
        throw Error(ErrorCode::ParseError, fmt::format("agent_id {} out of range", i));
      }
      pending.joint[i].surface_label = field<std::string>(rec, "decision_label");
      pending.joint[i].role = role_from_string(field<std::string>(rec, "decision_role"));
      pending.outcome.per_agent_multiplier[i] = field<double>(rec, "multiplier");
      pending.outcome.per_agent_delta[i] = field<double>(rec, "delta");
      pending.capital_after[i] = field<double>(rec, "capital_after");
    } else {
      pending.outcome.colluder_count = field<int>(rec, "colluder_count");
      pending.outcome.success = field<bool>(rec, "success");
      t.history.append(pending);
      reset(round + 1);
    }
  }
  return t;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, fmt::format("short write to {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorCode::IoError,
                fmt::format("cannot rename {} to {}: {}", tmp.string(), path.string(), ec.message()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace tipping
