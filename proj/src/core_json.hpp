#pragma once

// internal JSON helpers shared by the trace, corpus and checkpoint codecs

#include "agentask/core.hpp"
#include "json.hpp"

namespace agentask::detail {

nlohmann::json state_to_json(const EdgeState& s);
EdgeState state_from_json(const nlohmann::json& j, std::size_t lineno);

nlohmann::json question_to_json(const QuestionSpec& q);
QuestionSpec question_from_json(const nlohmann::json& j, std::size_t lineno);

void reject_unknown_fields(const nlohmann::json& j, std::initializer_list<const char*> known,
                           std::size_t lineno, const char* what);

}  // namespace agentask::detail
