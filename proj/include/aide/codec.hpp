#pragma once

// Canonical wire encoding: UTF-8 JSON, field names as in the domain types,
// keys sorted, no insignificant whitespace, integer millisecond timestamps,
// shortest round-trip float formatting. Optional fields are omitted when
// absent. Decoders throw ValidationError naming the offending field.

#include <string>
#include <string_view>

#include "aide/model.hpp"

namespace aide {

std::string canonical(const Json& value);

std::string_view to_string(SpanKind kind);
SpanKind span_kind_from_string(std::string_view name);
std::string_view to_string(FilterOp op);
FilterOp filter_op_from_string(std::string_view name);

Json to_json(const TokenUsage& usage);
Json to_json(const Span& span);
Json to_json(const Trace& trace);
Json to_json(const PromptVersion& prompt);
Json to_json(const ActiveBinding& binding);
Json to_json(const Predicate& predicate);
Json to_json(const FilterQuery& query);
Json to_json(const BucketStats& bucket);
Json to_json(const AggregateReport& report);

// An absent trace_id/project_id decodes as empty; callers assign them.
Trace trace_from_json(const Json& j);
Span span_from_json(const Json& j, const std::string& prefix);
PromptVersion prompt_version_from_json(const Json& j);
ActiveBinding binding_from_json(const Json& j);
Predicate predicate_from_json(const Json& j, const std::string& prefix);
std::vector<Predicate> predicates_from_json(const Json& j, const std::string& field);
FilterQuery filter_query_from_json(const Json& j);

// Field readers shared by the other decoders.
namespace wire {

const Json& require(const Json& obj, const char* key, const std::string& prefix);
std::string get_string(const Json& obj, const char* key, const std::string& prefix);
std::optional<std::string> opt_string(const Json& obj, const char* key, const std::string& prefix);
std::int64_t get_int(const Json& obj, const char* key, const std::string& prefix);
std::optional<std::int64_t> opt_int(const Json& obj, const char* key, const std::string& prefix);
double get_number(const Json& obj, const char* key, const std::string& prefix);
std::optional<double> opt_number(const Json& obj, const char* key, const std::string& prefix);
std::optional<bool> opt_bool(const Json& obj, const char* key, const std::string& prefix);
void expect_object(const Json& value, const std::string& field);
void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& prefix);

}  // namespace wire

}  // namespace aide
