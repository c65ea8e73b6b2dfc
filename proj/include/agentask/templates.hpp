#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentask/core.hpp"

namespace agentask {

// One schema-constrained question pattern with a single "{slot}" placeholder.
struct QuestionTemplate {
  std::string id;
  ErrorType type = ErrorType::NONE;
  std::string pattern;
};

// Sentinel template id for gateway-parsed free-text questions.
inline const std::string kFreeformTemplateId = "freeform";

// The built-in question library: four templates per ask type. Keeping the
// question head categorical over this set gives the policy exact gradients;
// free text only enters through the gateway.
class TemplateLibrary {
 public:
  static const TemplateLibrary& builtin();

  int count(ErrorType type) const;
  const QuestionTemplate& get(ErrorType type, int index) const;
  std::optional<std::pair<ErrorType, int>> find(const std::string& id) const;

  QuestionSpec render(ErrorType type, int index, const std::vector<std::string>& slots) const;

  // identifies the library in checkpoints
  std::string hash() const { return hash_; }

  // worst-case whitespace tokens of any rendered question, assuming slot
  // fillers of at most `slot_token_bound` tokens
  int max_question_tokens(int slot_token_bound = 2) const;

 private:
  explicit TemplateLibrary(std::vector<QuestionTemplate> templates);

  std::vector<QuestionTemplate> templates_;
  std::string hash_;
};

}  // namespace agentask
