#pragma once

// A small JSON-Schema subset, enough to describe tool inputs and outputs:
// type (name or list of names), properties, required,
// additionalProperties (false only), items, enum, minimum, maximum,
// exclusiveMinimum, minLength, minItems.

#include <optional>
#include <string>

#include "aide/model.hpp"

namespace aide {

// nullopt when `value` conforms; otherwise "<path>: <reason>" for the first
// violation found.
std::optional<std::string> validate_schema(const Json& schema, const Json& value);

}  // namespace aide
