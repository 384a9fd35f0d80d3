#pragma once

// Deterministic evaluators that turn a trace's output into named scores in
// [0,1]. This is the seam where model-based judges would attach.

#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "aide/model.hpp"

namespace aide {

enum class EvaluatorKind { regex_match, regex_absent, length_range, keyword_coverage, numeric_range };

std::string_view to_string(EvaluatorKind kind);

struct EvaluatorSpec {
  std::string name;
  EvaluatorKind kind = EvaluatorKind::regex_match;
  bool enabled = true;

  // regex_match / regex_absent
  std::string pattern;
  bool ignore_case = false;
  // length_range, in code points
  std::int64_t min_chars = 0;
  std::int64_t max_chars = 0;
  // keyword_coverage; `invert` yields 1 - coverage
  std::vector<std::string> keywords;
  bool invert = false;
  // numeric_range
  std::string field;
  double min_value = 0.0;
  double max_value = 0.0;
};

Json to_json(const EvaluatorSpec& spec);
EvaluatorSpec evaluator_from_json(const Json& j);

// Throws ValidationError if the spec is unusable (bad name, pattern that
// does not compile, empty range or keyword list, unknown field path).
void validate_spec(const EvaluatorSpec& spec);
// Also rejects duplicate names.
void validate_specs(const std::vector<EvaluatorSpec>& specs);

// Linear falloff outside [min, max]: 0 at 2*max above, 0 at min/2 below.
double length_range_score(std::int64_t length, std::int64_t min_chars, std::int64_t max_chars);

// Pure: identical inputs give bit-identical scores. Throws Error with kind
// EvaluatorError when the trace cannot be scored.
double evaluate(const EvaluatorSpec& spec, const Trace& trace);

struct EvalOutcome {
  std::map<std::string, double> scores;
  std::map<std::string, std::string> errors;  // evaluator name -> reason

  // Tag recorded on the trace for each failed evaluator.
  static std::string error_tag(const std::string& evaluator) { return "evaluator_error:" + evaluator; }
};

// A validated set of specs with patterns compiled once.
class EvaluatorSet {
 public:
  EvaluatorSet() = default;
  explicit EvaluatorSet(std::vector<EvaluatorSpec> specs);

  const std::vector<EvaluatorSpec>& specs() const { return specs_; }
  bool empty() const { return specs_.empty(); }

  // Applies every enabled spec; evaluator failures never propagate.
  EvalOutcome run_all(const Trace& trace) const;

 private:
  std::vector<EvaluatorSpec> specs_;
  std::vector<std::shared_ptr<const std::regex>> compiled_;
};

EvalOutcome run_all(const std::vector<EvaluatorSpec>& specs, const Trace& trace);

}  // namespace aide
