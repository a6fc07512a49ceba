#include <cmath>
#include <string>

#include "cli.hpp"
#include "schema_text.hpp"

namespace spft::cli {

using nlohmann::json;

const json& schema() {
    static const json s = json::parse(kSchemaText);
    return s;
}

namespace {

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    return false;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check(const json& v, const json& rule, const std::string& path, std::vector<std::string>& out) {
    if (rule.contains("$ref")) {
        check(v, schema().at("definitions").at(rule["$ref"].get<std::string>()), path, out);
        return;
    }
    const std::string where = path.empty() ? "(root)" : path;
    const std::string type = rule.value("type", "");
    if (!type.empty() && !has_type(v, type)) {
        out.push_back(where + ": expected " + type);
        return;
    }
    if (rule.contains("enum")) {
        bool found = false;
        for (const json& e : rule["enum"]) found = found || e == v;
        if (!found) out.push_back(where + ": value " + v.dump() + " not in " + rule["enum"].dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (rule.contains("minimum") && x < rule["minimum"].get<double>())
            out.push_back(where + ": must be >= " + rule["minimum"].dump());
        if (rule.contains("maximum") && x > rule["maximum"].get<double>())
            out.push_back(where + ": must be <= " + rule["maximum"].dump());
        if (rule.contains("exclusiveMinimum") && !(x > rule["exclusiveMinimum"].get<double>()))
            out.push_back(where + ": must be > " + rule["exclusiveMinimum"].dump());
        if (rule.contains("exclusiveMaximum") && !(x < rule["exclusiveMaximum"].get<double>()))
            out.push_back(where + ": must be < " + rule["exclusiveMaximum"].dump());
    }
    if (v.is_array() && rule.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], rule["items"], path + "[" + std::to_string(i) + "]", out);
    }
    if (v.is_object()) {
        const json props = rule.value("properties", json::object());
        for (const json& req : rule.value("required", json::array()))
            if (!v.contains(req.get<std::string>())) out.push_back(join(path, req.get<std::string>()) + ": required");
        for (const auto& [key, value] : v.items()) {
            if (!props.contains(key)) {
                out.push_back(join(path, key) + ": unknown key");
                continue;
            }
            check(value, props[key], join(path, key), out);
        }
    }
}

}  // namespace

std::vector<std::string> schema_violations(const json& doc) {
    std::vector<std::string> out;
    check(doc, schema(), "", out);
    return out;
}

}  // namespace spft::cli
