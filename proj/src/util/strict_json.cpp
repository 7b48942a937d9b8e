#include "ssmdg/util/strict_json.hpp"

namespace ssmdg::util {

namespace {

std::string summarize(const std::vector<std::string>& errors) {
    std::string out = "schema validation failed";
    for (const auto& e : errors) out += "\n  " + e;
    return out;
}

}  // namespace

const nlohmann::json JsonReader::kEmpty = nlohmann::json::object();

SchemaError::SchemaError(std::vector<std::string> errors)
    : std::runtime_error(summarize(errors)), errors_(std::move(errors)) {}

JsonReader::JsonReader(const nlohmann::json& node, std::string path, std::vector<std::string>& errors)
    : node_(&node), path_(std::move(path)), errors_(&errors) {
    if (!node.is_object()) {
        errors.push_back(path_ + ": expected object");
        node_ = &kEmpty;
        valid_ = false;
    }
}

bool JsonReader::has(const std::string& key) const { return node_->contains(key); }

JsonReader JsonReader::child(const std::string& key) {
    seen_.insert(key);
    if (!node_->contains(key)) return JsonReader(kEmpty, join(key), *errors_);
    return JsonReader(node_->at(key), join(key), *errors_);
}

void JsonReader::finish() {
    if (!valid_) return;
    for (const auto& [key, value] : node_->items()) {
        if (!seen_.count(key)) errors_->push_back(join(key) + ": unknown key");
    }
}

}  // namespace ssmdg::util
