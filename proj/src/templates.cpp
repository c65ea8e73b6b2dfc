#include "agentask/templates.hpp"

#include <stdexcept>

#include "agentask/errors.hpp"
#include "agentask/hashing.hpp"

namespace agentask {

namespace {

std::vector<QuestionTemplate> builtin_templates() {
  using ET = ErrorType;
  return {
      {"dg.supply", ET::DG, "The handoff omits {slot}; please supply it."},
      {"dg.value_of", ET::DG, "What should {slot} be for this step?"},
      {"dg.restate", ET::DG, "Please restate the payload including {slot}."},
      {"dg.range", ET::DG, "Field {slot} is absent; what value and range apply?"},

      {"rd.binding", ET::RD, "Does {slot} refer to the value produced by the previous step?"},
      {"rd.confirm", ET::RD, "Please confirm the binding of {slot} before we proceed."},
      {"rd.alias", ET::RD, "Is {slot} the same quantity the history names differently?"},
      {"rd.index", ET::RD, "Which step does {slot} refer to?"},

      {"sc.rederive", ET::SC, "Please re-derive {slot}; it conflicts with the upstream computation."},
      {"sc.source", ET::SC, "Can you verify the source of {slot} before it is reused?"},
      {"sc.scale", ET::SC, "Is {slot} on the intended scale, or was a factor applied?"},
      {"sc.magnitude", ET::SC, "The magnitude of {slot} looks off; should it be corrected?"},

      {"cg.reroute", ET::CG, "This step requests {slot} outside your role; accept a reroute to a capable peer?"},
      {"cg.peer", ET::CG, "Can a peer that handles {slot} take this step instead?"},
      {"cg.reissue", ET::CG, "Should the request be reissued to a role that can do {slot}?"},
      {"cg.support", ET::CG, "Do you need {slot} support to complete this step?"},
  };
}

}  // namespace

TemplateLibrary::TemplateLibrary(std::vector<QuestionTemplate> templates)
    : templates_(std::move(templates)) {
  std::uint64_t h = fnv1a64("agentask-templates-v1");
  for (const auto& t : templates_) {
    h = fnv1a64(t.id, h);
    h = fnv1a64(t.pattern, h);
  }
  hash_ = hex64(h);
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary lib(builtin_templates());
  return lib;
}

int TemplateLibrary::count(ErrorType type) const {
  int n = 0;
  for (const auto& t : templates_) n += (t.type == type) ? 1 : 0;
  return n;
}

const QuestionTemplate& TemplateLibrary::get(ErrorType type, int index) const {
  int n = 0;
  for (const auto& t : templates_) {
    if (t.type != type) continue;
    if (n == index) return t;
    ++n;
  }
  throw ContractError("template index " + std::to_string(index) + " out of range for type " +
                      error_type_tag(type));
}

std::optional<std::pair<ErrorType, int>> TemplateLibrary::find(const std::string& id) const {
  int per_type[kTypeCount] = {0, 0, 0, 0, 0};
  for (const auto& t : templates_) {
    const int ti = static_cast<int>(t.type);
    if (t.id == id) return std::make_pair(t.type, per_type[ti]);
    ++per_type[ti];
  }
  return std::nullopt;
}

QuestionSpec TemplateLibrary::render(ErrorType type, int index,
                                     const std::vector<std::string>& slots) const {
  const QuestionTemplate& t = get(type, index);
  if (slots.size() != 1) throw ContractError("templates take exactly one slot");
  QuestionSpec q;
  q.template_id = t.id;
  q.slots = slots;
  q.rendered = t.pattern;
  const auto pos = q.rendered.find("{slot}");
  if (pos != std::string::npos) q.rendered.replace(pos, 6, slots[0]);
  q.token_count = whitespace_tokens(q.rendered);
  return q;
}

int TemplateLibrary::max_question_tokens(int slot_token_bound) const {
  int worst = 0;
  for (const auto& t : templates_) {
    const int base = whitespace_tokens(t.pattern);
    // "{slot}" counts as one token in the pattern and expands to at most
    // slot_token_bound tokens
    worst = std::max(worst, base - 1 + slot_token_bound);
  }
  return worst;
}

}  // namespace agentask
