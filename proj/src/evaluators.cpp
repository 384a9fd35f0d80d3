#include "aide/evaluators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "aide/codec.hpp"

namespace aide {

std::string_view to_string(EvaluatorKind kind) {
  switch (kind) {
    case EvaluatorKind::regex_match: return "regex_match";
    case EvaluatorKind::regex_absent: return "regex_absent";
    case EvaluatorKind::length_range: return "length_range";
    case EvaluatorKind::keyword_coverage: return "keyword_coverage";
    case EvaluatorKind::numeric_range: return "numeric_range";
  }
  return "regex_match";
}

namespace {

EvaluatorKind kind_from_string(std::string_view name) {
  for (auto k : {EvaluatorKind::regex_match, EvaluatorKind::regex_absent, EvaluatorKind::length_range,
                 EvaluatorKind::keyword_coverage, EvaluatorKind::numeric_range}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("kind", "unknown evaluator kind '" + std::string(name) + "'");
}

std::regex compile(const EvaluatorSpec& spec) {
  auto flags = std::regex::ECMAScript;
  if (spec.ignore_case) flags |= std::regex::icase;
  return std::regex(spec.pattern, flags);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double score_with(const EvaluatorSpec& spec, const Trace& trace, const std::regex* re) {
  switch (spec.kind) {
    case EvaluatorKind::regex_match:
    case EvaluatorKind::regex_absent: {
      bool found;
      try {
        found = std::regex_search(trace.output, *re);
      } catch (const std::regex_error& e) {
        throw Error(ErrorKind::EvaluatorError, spec.name + ": regex evaluation failed: " + e.what());
      }
      const bool pass = spec.kind == EvaluatorKind::regex_match ? found : !found;
      return pass ? 1.0 : 0.0;
    }
    case EvaluatorKind::length_range:
      return length_range_score(static_cast<std::int64_t>(utf8_length(trace.output)),
                                spec.min_chars, spec.max_chars);
    case EvaluatorKind::keyword_coverage: {
      const auto text = ascii_lower(trace.output);
      std::size_t hits = 0;
      for (const auto& kw : spec.keywords) {
        if (text.find(ascii_lower(kw)) != std::string::npos) ++hits;
      }
      const double coverage = static_cast<double>(hits) / static_cast<double>(spec.keywords.size());
      return clamp01(spec.invert ? 1.0 - coverage : coverage);
    }
    case EvaluatorKind::numeric_range: {
      const auto value = numeric_field(trace, spec.field);
      if (!value) throw Error(ErrorKind::EvaluatorError, spec.name + ": field " + spec.field + " is absent");
      return *value >= spec.min_value && *value <= spec.max_value ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

}  // namespace

double length_range_score(std::int64_t length, std::int64_t min_chars, std::int64_t max_chars) {
  if (length >= min_chars && length <= max_chars) return 1.0;
  if (length > max_chars) {
    if (max_chars == 0) return 0.0;
    return clamp01(1.0 - static_cast<double>(length - max_chars) / static_cast<double>(max_chars));
  }
  return clamp01(1.0 - 2.0 * static_cast<double>(min_chars - length) / static_cast<double>(min_chars));
}

Json to_json(const EvaluatorSpec& spec) {
  Json params = Json::object();
  switch (spec.kind) {
    case EvaluatorKind::regex_match:
    case EvaluatorKind::regex_absent:
      params = {{"pattern", spec.pattern}, {"ignore_case", spec.ignore_case}};
      break;
    case EvaluatorKind::length_range:
      params = {{"min", spec.min_chars}, {"max", spec.max_chars}};
      break;
    case EvaluatorKind::keyword_coverage:
      params = {{"keywords", spec.keywords}, {"invert", spec.invert}};
      break;
    case EvaluatorKind::numeric_range:
      params = {{"field", spec.field}, {"min", spec.min_value}, {"max", spec.max_value}};
      break;
  }
  return Json{{"name", spec.name}, {"kind", to_string(spec.kind)}, {"enabled", spec.enabled},
              {"params", std::move(params)}};
}

EvaluatorSpec evaluator_from_json(const Json& j) {
  using namespace wire;
  expect_object(j, "");
  reject_unknown(j, {"name", "kind", "enabled", "params"}, "");
  EvaluatorSpec spec;
  spec.name = get_string(j, "name", "");
  spec.kind = kind_from_string(get_string(j, "kind", ""));
  spec.enabled = opt_bool(j, "enabled", "").value_or(true);
  Json params = j.value("params", Json::object());
  expect_object(params, "params");
  switch (spec.kind) {
    case EvaluatorKind::regex_match:
    case EvaluatorKind::regex_absent:
      reject_unknown(params, {"pattern", "ignore_case"}, "params");
      spec.pattern = get_string(params, "pattern", "params");
      spec.ignore_case = opt_bool(params, "ignore_case", "params").value_or(false);
      break;
    case EvaluatorKind::length_range:
      reject_unknown(params, {"min", "max"}, "params");
      spec.min_chars = get_int(params, "min", "params");
      spec.max_chars = get_int(params, "max", "params");
      break;
    case EvaluatorKind::keyword_coverage: {
      reject_unknown(params, {"keywords", "invert"}, "params");
      const auto& kws = require(params, "keywords", "params");
      if (!kws.is_array()) throw ValidationError("params.keywords", "expected an array of strings");
      for (const auto& kw : kws) {
        if (!kw.is_string()) throw ValidationError("params.keywords", "expected an array of strings");
        spec.keywords.push_back(kw.get<std::string>());
      }
      spec.invert = opt_bool(params, "invert", "params").value_or(false);
      break;
    }
    case EvaluatorKind::numeric_range:
      reject_unknown(params, {"field", "min", "max"}, "params");
      spec.field = get_string(params, "field", "params");
      spec.min_value = get_number(params, "min", "params");
      spec.max_value = get_number(params, "max", "params");
      break;
  }
  return spec;
}

void validate_spec(const EvaluatorSpec& spec) {
  if (spec.name.empty() || !is_valid_utf8(spec.name)) {
    throw ValidationError("name", "metric name must be nonempty");
  }
  switch (spec.kind) {
    case EvaluatorKind::regex_match:
    case EvaluatorKind::regex_absent:
      try {
        (void)compile(spec);
      } catch (const std::regex_error& e) {
        throw ValidationError("params.pattern", std::string("pattern does not compile: ") + e.what());
      }
      break;
    case EvaluatorKind::length_range:
      if (spec.min_chars < 0 || spec.max_chars < spec.min_chars) {
        throw ValidationError("params", "length range must satisfy 0 <= min <= max");
      }
      break;
    case EvaluatorKind::keyword_coverage:
      if (spec.keywords.empty()) throw ValidationError("params.keywords", "keyword list is empty");
      for (const auto& kw : spec.keywords) {
        if (kw.empty()) throw ValidationError("params.keywords", "keywords must be nonempty");
      }
      break;
    case EvaluatorKind::numeric_range:
      if (!is_numeric_path(spec.field)) {
        throw ValidationError("params.field", "not a numeric trace field: " + spec.field);
      }
      if (!std::isfinite(spec.min_value) || !std::isfinite(spec.max_value) ||
          spec.max_value < spec.min_value) {
        throw ValidationError("params", "numeric range must satisfy min <= max");
      }
      break;
  }
}

void validate_specs(const std::vector<EvaluatorSpec>& specs) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      validate_spec(specs[i]);
    } catch (const ValidationError& e) {
      throw ValidationError("evaluators[" + std::to_string(i) + "]." + e.field(), e.reason());
    }
    if (!names.insert(specs[i].name).second) {
      throw ValidationError("evaluators[" + std::to_string(i) + "].name",
                            "duplicate evaluator name " + specs[i].name);
    }
  }
}

double evaluate(const EvaluatorSpec& spec, const Trace& trace) {
  if (spec.kind == EvaluatorKind::regex_match || spec.kind == EvaluatorKind::regex_absent) {
    std::regex re;
    try {
      re = compile(spec);
    } catch (const std::regex_error& e) {
      throw Error(ErrorKind::EvaluatorError, spec.name + ": pattern does not compile");
    }
    return score_with(spec, trace, &re);
  }
  return score_with(spec, trace, nullptr);
}

EvaluatorSet::EvaluatorSet(std::vector<EvaluatorSpec> specs) : specs_(std::move(specs)) {
  validate_specs(specs_);
  for (const auto& spec : specs_) {
    if (spec.kind == EvaluatorKind::regex_match || spec.kind == EvaluatorKind::regex_absent) {
      compiled_.push_back(std::make_shared<const std::regex>(compile(spec)));
    } else {
      compiled_.push_back(nullptr);
    }
  }
}

EvalOutcome EvaluatorSet::run_all(const Trace& trace) const {
  EvalOutcome outcome;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& spec = specs_[i];
    if (!spec.enabled) continue;
    try {
      outcome.scores[spec.name] = score_with(spec, trace, compiled_[i].get());
    } catch (const std::exception& e) {
      outcome.errors[spec.name] = e.what();
    }
  }
  return outcome;
}

EvalOutcome run_all(const std::vector<EvaluatorSpec>& specs, const Trace& trace) {
  return EvaluatorSet(specs).run_all(trace);
}

}  // namespace aide
