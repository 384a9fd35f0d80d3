#include "aide/schema.hpp"

namespace aide {

namespace {

bool has_type(const Json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

std::optional<std::string> check(const Json& s, const Json& v, const std::string& path) {
  const std::string where = path.empty() ? "$" : path;
  if (auto t = s.find("type"); t != s.end()) {
    bool ok = false;
    if (t->is_string()) {
      ok = has_type(v, t->get<std::string>());
    } else {
      for (const auto& name : *t) ok = ok || has_type(v, name.get<std::string>());
    }
    if (!ok) return where + ": expected type " + t->dump();
  }
  if (auto e = s.find("enum"); e != s.end()) {
    bool found = false;
    for (const auto& option : *e) found = found || option == v;
    if (!found) return where + ": not one of " + e->dump();
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (auto m = s.find("minimum"); m != s.end() && x < m->get<double>()) {
      return where + ": below minimum " + m->dump();
    }
    if (auto m = s.find("maximum"); m != s.end() && x > m->get<double>()) {
      return where + ": above maximum " + m->dump();
    }
    if (auto m = s.find("exclusiveMinimum"); m != s.end() && x <= m->get<double>()) {
      return where + ": must exceed " + m->dump();
    }
  }
  if (v.is_string()) {
    if (auto m = s.find("minLength"); m != s.end() && utf8_length(v.get_ref<const std::string&>()) < m->get<std::size_t>()) {
      return where + ": shorter than " + m->dump();
    }
  }
  if (v.is_array()) {
    if (auto m = s.find("minItems"); m != s.end() && v.size() < m->get<std::size_t>()) {
      return where + ": fewer than " + m->dump() + " items";
    }
    if (auto items = s.find("items"); items != s.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto err = check(*items, v[i], where + "[" + std::to_string(i) + "]")) return err;
      }
    }
  }
  if (v.is_object()) {
    if (auto req = s.find("required"); req != s.end()) {
      for (const auto& name : *req) {
        if (!v.contains(name.get<std::string>())) return where + ": missing " + name.get<std::string>();
      }
    }
    const auto props = s.find("properties");
    const bool closed = s.value("additionalProperties", true) == false;
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string child = path.empty() ? it.key() : path + "." + it.key();
      if (props != s.end() && props->contains(it.key())) {
        if (auto err = check((*props)[it.key()], *it, child)) return err;
      } else if (closed) {
        return child + ": unknown field";
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_schema(const Json& schema, const Json& value) {
  return check(schema, value, "");
}

}  // namespace aide
