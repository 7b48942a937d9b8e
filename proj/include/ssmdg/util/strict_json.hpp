#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ssmdg::util {

/// Validation failures, each formatted as "<json path>: <message>".
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    std::vector<std::string> errors_;
};

/// Reads an object field by field, recording type errors, missing required
/// keys and unknown keys against their JSON paths instead of throwing.
class JsonReader {
public:
    JsonReader(const nlohmann::json& node, std::string path, std::vector<std::string>& errors);

    bool has(const std::string& key) const;

    template <typename T>
    void field(const std::string& key, T& out, bool required = false) {
        seen_.insert(key);
        if (!valid_) return;
        if (!node_->contains(key)) {
            if (required) errors_->push_back(join(key) + ": missing required key");
            return;
        }
        try {
            out = node_->at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            errors_->push_back(join(key) + ": " + type_message<T>() + " (" + std::string(e.what()) + ")");
        }
    }

    /// Reader for a nested object; an absent key yields a reader over `{}`.
    JsonReader child(const std::string& key);

    void error(const std::string& key, const std::string& message) { errors_->push_back(join(key) + ": " + message); }
    std::string join(const std::string& key) const { return path_ + "." + key; }

    /// Records every key that was never requested as unknown.
    void finish();

private:
    template <typename T>
    static std::string type_message() {
        if constexpr (std::is_same_v<T, bool>) return "expected boolean";
        else if constexpr (std::is_arithmetic_v<T>) return "expected number";
        else if constexpr (std::is_same_v<T, std::string>) return "expected string";
        else return "unexpected type";
    }

    const nlohmann::json* node_;
    std::string path_;
    std::vector<std::string>* errors_;
    std::set<std::string> seen_;
    bool valid_ = true;
    static const nlohmann::json kEmpty;
};

}  // namespace ssmdg::util
