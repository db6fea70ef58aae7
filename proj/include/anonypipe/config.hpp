#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "anonypipe/error.hpp"
#include "anonypipe/pipeline.hpp"

namespace anonypipe {

inline constexpr const char* kEnvPrefix = "ANONYPIPE_";

/// Values captured from the command line; unset means "not given".
struct FlagValues {
    std::optional<std::string> input;
    std::optional<std::string> output;
    std::optional<std::string> config_file;
    std::optional<std::string> backend;  // --backend, maps to inpaint_backend
    std::optional<std::string> prompt_template;
    std::optional<int> min_face_side;
    std::optional<std::uint32_t> seed;
    std::optional<int> workers;
    std::optional<bool> emit_masks;
    // evaluate-only flags
    std::optional<std::string> manifest;
    std::optional<std::string> report;
    std::optional<int> age_tolerance;
};

/// Environment accessor, injectable for tests.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline EnvLookup system_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    };
}

/// Fully resolved run settings for both commands.
struct RunConfig {
    PipelineConfig pipeline;
    std::string detector = "stub";             // stub | external
    std::string extractor = "stub";            // stub | external
    std::string embedder = "stub";             // stub | external
    std::string inpaint_backend = "identity";  // identity | noise | external
    std::string external_endpoint;
    std::filesystem::path input;
    std::filesystem::path output;
    std::filesystem::path extractor_table;  // defaults to <input>/attributes.txt
    std::filesystem::path manifest_path;    // defaults to <output>/manifest.jsonl
    std::filesystem::path report_path;      // defaults to <output>/eval_report.json
    int workers = 1;
    bool emit_masks = false;
    int age_tolerance = 5;  // years, for attribute agreement
};

namespace detail {

inline const std::vector<std::string>& valid_config_keys() {
    static const std::vector<std::string> keys = {
        "input",           "output",
        "min_face_side",   "detection_confidence_threshold",
        "mask_padding_ratio", "extract_margin_ratio",
        "seed",            "seed_policy",
        "prompt_template", "emotion_nouns",
        "blend_mode",      "feather_radius",
        "inpaint_backend", "inpaint_steps",
        "guidance_scale",  "inpaint_extra",
        "external_endpoint",
        "detector",        "extractor",
        "extractor_table", "embedder",
        "workers",         "emit_masks",
        "age_tolerance",   "manifest",
        "report",
    };
    return keys;
}

inline std::string env_name_for(const std::string& key) {
    std::string name = kEnvPrefix;
    for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return name;
}

inline std::string joined_valid_keys() {
    std::string out;
    for (const auto& k : valid_config_keys()) {
        if (!out.empty()) out += ", ";
        out += k;
    }
    return out;
}

// Applies the precedence flag > environment > config file for one key;
// defaults are applied by the caller when the result is empty.
class ConfigResolver {
public:
    ConfigResolver(const EnvLookup& env, const std::optional<std::filesystem::path>& file_path)
        : env_(env) {
        if (!file_path) return;
        file_name_ = file_path->string();
        std::ifstream in(*file_path);
        if (!in)
            throw ConfigError("config file " + file_name_ + ": cannot open");
        try {
            in >> file_;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + file_name_ + ": invalid JSON: " + e.what());
        }
        if (!file_.is_object())
            throw ConfigError("config file " + file_name_ + ": top level must be a JSON object");
        for (const auto& item : file_.items()) {
            const auto& keys = valid_config_keys();
            if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
                throw ConfigError("config file " + file_name_ + ": unknown key '" + item.key() +
                                  "'; valid keys are: " + joined_valid_keys());
        }
    }

    std::optional<std::string> get_string(const std::string& key,
                                          const std::optional<std::string>& flag) const {
        if (flag) return flag;
        if (auto env = env_(env_name_for(key))) return env;
        if (const auto* j = file_value(key)) {
            if (!j->is_string())
                throw ConfigError(file_key_error(key, "must be a string"));
            return j->get<std::string>();
        }
        return std::nullopt;
    }

    std::optional<int> get_int(const std::string& key, const std::optional<int>& flag) const {
        if (flag) return flag;
        if (auto env = env_(env_name_for(key))) return parse_env_int(key, *env);
        if (const auto* j = file_value(key)) {
            if (!j->is_number_integer())
                throw ConfigError(file_key_error(key, "must be an integer"));
            return j->get<int>();
        }
        return std::nullopt;
    }

    std::optional<std::uint32_t> get_uint32(const std::string& key,
                                            const std::optional<std::uint32_t>& flag) const {
        if (flag) return flag;
        if (auto env = env_(env_name_for(key))) {
            const long long v = parse_env_ll(key, *env);
            if (v < 0 || v > 0xFFFFFFFFll)
                throw ConfigError("environment variable " + env_name_for(key) +
                                  ": must fit an unsigned 32-bit integer");
            return static_cast<std::uint32_t>(v);
        }
        if (const auto* j = file_value(key)) {
            if (!j->is_number_integer() || j->get<long long>() < 0 ||
                j->get<long long>() > 0xFFFFFFFFll)
                throw ConfigError(file_key_error(key, "must be an unsigned 32-bit integer"));
            return j->get<std::uint32_t>();
        }
        return std::nullopt;
    }

    std::optional<double> get_double(const std::string& key) const {
        if (auto env = env_(env_name_for(key))) {
            try {
                std::size_t used = 0;
                const double v = std::stod(*env, &used);
                if (used != env->size()) throw std::invalid_argument("trailing characters");
                return v;
            } catch (const std::exception&) {
                throw ConfigError("environment variable " + env_name_for(key) +
                                  ": '" + *env + "' is not a number");
            }
        }
        if (const auto* j = file_value(key)) {
            if (!j->is_number())
                throw ConfigError(file_key_error(key, "must be a number"));
            return j->get<double>();
        }
        return std::nullopt;
    }

    std::optional<bool> get_bool(const std::string& key, const std::optional<bool>& flag) const {
        if (flag) return flag;
        if (auto env = env_(env_name_for(key))) {
            std::string v = *env;
            std::transform(v.begin(), v.end(), v.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
            if (v == "0" || v == "false" || v == "no" || v == "off") return false;
            throw ConfigError("environment variable " + env_name_for(key) + ": '" + *env +
                              "' is not a boolean");
        }
        if (const auto* j = file_value(key)) {
            if (!j->is_boolean())
                throw ConfigError(file_key_error(key, "must be a boolean"));
            return j->get<bool>();
        }
        return std::nullopt;
    }

    // Object-valued keys are file-only (no natural flag/env encoding).
    const nlohmann::json* get_object(const std::string& key) const {
        const auto* j = file_value(key);
        if (j == nullptr) return nullptr;
        if (!j->is_object())
            throw ConfigError(file_key_error(key, "must be a JSON object"));
        return j;
    }

private:
    const nlohmann::json* file_value(const std::string& key) const {
        const auto it = file_.find(key);
        return it == file_.end() ? nullptr : &*it;
    }

    std::string file_key_error(const std::string& key, const std::string& constraint) const {
        return "config file " + file_name_ + ": key '" + key + "' " + constraint;
    }

    long long parse_env_ll(const std::string& key, const std::string& value) const {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("environment variable " + env_name_for(key) + ": '" + value +
                              "' is not an integer");
        }
    }

    int parse_env_int(const std::string& key, const std::string& value) const {
        const long long v = parse_env_ll(key, value);
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            throw ConfigError("environment variable " + env_name_for(key) + ": out of range");
        return static_cast<int>(v);
    }

    const EnvLookup& env_;
    nlohmann::json file_ = nlohmann::json::object();
    std::string file_name_;
};

}  // namespace detail

/// Config file path resolution follows the same precedence as everything
/// else: --config flag, then ANONYPIPE_CONFIG.
inline std::optional<std::filesystem::path> resolve_config_path(const FlagValues& flags,
                                                                const EnvLookup& env) {
    if (flags.config_file) return std::filesystem::path(*flags.config_file);
    if (auto v = env(std::string(kEnvPrefix) + "CONFIG")) return std::filesystem::path(*v);
    return std::nullopt;
}

/**
 * Resolves the full run configuration with precedence
 * flags > environment (ANONYPIPE_*) > config file (JSON object) > defaults,
 * then validates every invariant. Violations throw ConfigError naming the
 * offending field and its constraint; unknown config-file keys are rejected
 * with the list of valid keys.
 */
inline RunConfig load_config(const FlagValues& flags, const EnvLookup& env,
                             const std::optional<std::filesystem::path>& config_file) {
    const detail::ConfigResolver r(env, config_file);
    RunConfig cfg;

    const auto input = r.get_string("input", flags.input);
    const auto output = r.get_string("output", flags.output);
    if (!input || input->empty())
        throw ConfigError("input: required (set --input, ANONYPIPE_INPUT, or the config file)");
    if (!output || output->empty())
        throw ConfigError("output: required (set --output, ANONYPIPE_OUTPUT, or the config file)");
    cfg.input = *input;
    cfg.output = *output;
    if (!std::filesystem::exists(cfg.input))
        throw ConfigError("input: path does not exist: " + cfg.input.string());
    std::error_code ec;
    std::filesystem::create_directories(cfg.output, ec);
    if (ec || !std::filesystem::is_directory(cfg.output))
        throw ConfigError("output: not a writable directory: " + cfg.output.string());

    if (auto v = r.get_int("min_face_side", flags.min_face_side)) cfg.pipeline.min_face_side = *v;
    if (auto v = r.get_double("detection_confidence_threshold"))
        cfg.pipeline.detection_confidence_threshold = *v;
    if (auto v = r.get_double("mask_padding_ratio")) cfg.pipeline.mask_padding_ratio = *v;
    if (auto v = r.get_double("extract_margin_ratio")) cfg.pipeline.extract_margin_ratio = *v;

    const auto seed = r.get_uint32("seed", flags.seed);
    const auto seed_policy = r.get_string("seed_policy", std::nullopt);
    if (seed_policy) {
        if (*seed_policy == "fixed") {
            if (!seed)
                throw ConfigError("seed_policy: 'fixed' requires a seed value");
            cfg.pipeline.seed_policy = SeedPolicy::fixed(*seed);
        } else if (*seed_policy == "per_face_derived") {
            if (seed)
                throw ConfigError("seed: conflicts with seed_policy 'per_face_derived'");
            cfg.pipeline.seed_policy = SeedPolicy::per_face_derived();
        } else {
            throw ConfigError("seed_policy: must be 'fixed' or 'per_face_derived', got '" +
                              *seed_policy + "'");
        }
    } else if (seed) {
        cfg.pipeline.seed_policy = SeedPolicy::fixed(*seed);
    }

    if (auto v = r.get_string("prompt_template", flags.prompt_template))
        cfg.pipeline.prompt_template = *v;

    if (const auto* nouns = r.get_object("emotion_nouns")) {
        for (const auto& item : nouns->items()) {
            Emotion emotion;
            try {
                emotion = parse_emotion(item.key());
            } catch (const ValidationError& e) {
                throw ConfigError(std::string("emotion_nouns: ") + e.what());
            }
            if (!item.value().is_string() || item.value().get<std::string>().empty())
                throw ConfigError("emotion_nouns: noun for '" + item.key() +
                                  "' must be a non-empty string");
            cfg.pipeline.emotion_nouns[emotion] = item.value().get<std::string>();
        }
    }

    const auto blend = r.get_string("blend_mode", std::nullopt);
    const auto radius = r.get_int("feather_radius", std::nullopt);
    if (blend) {
        if (*blend == "hard") {
            if (radius)
                throw ConfigError("feather_radius: only valid with blend_mode 'feathered'");
            cfg.pipeline.blend_mode = BlendMode::hard();
        } else if (*blend == "feathered") {
            cfg.pipeline.blend_mode = BlendMode::feathered(radius.value_or(0));
        } else {
            throw ConfigError("blend_mode: must be 'hard' or 'feathered', got '" + *blend + "'");
        }
    } else if (radius) {
        throw ConfigError("feather_radius: only valid with blend_mode 'feathered'");
    }

    if (auto v = r.get_int("inpaint_steps", std::nullopt)) cfg.pipeline.inpaint.steps = *v;
    if (auto v = r.get_double("guidance_scale")) cfg.pipeline.inpaint.guidance_scale = *v;
    if (const auto* extra = r.get_object("inpaint_extra")) {
        for (const auto& item : extra->items()) {
            if (!item.value().is_string())
                throw ConfigError("inpaint_extra: value for '" + item.key() +
                                  "' must be a string");
            cfg.pipeline.inpaint.extra[item.key()] = item.value().get<std::string>();
        }
    }

    if (auto v = r.get_string("inpaint_backend", flags.backend)) cfg.inpaint_backend = *v;
    if (auto v = r.get_string("external_endpoint", std::nullopt)) cfg.external_endpoint = *v;
    if (auto v = r.get_string("detector", std::nullopt)) cfg.detector = *v;
    if (auto v = r.get_string("extractor", std::nullopt)) cfg.extractor = *v;
    if (auto v = r.get_string("embedder", std::nullopt)) cfg.embedder = *v;
    if (auto v = r.get_string("extractor_table", std::nullopt)) cfg.extractor_table = *v;
    if (cfg.extractor_table.empty()) {
        const auto table_root = std::filesystem::is_directory(cfg.input)
                                    ? cfg.input
                                    : cfg.input.parent_path();
        cfg.extractor_table = table_root / "attributes.txt";
    }

    if (auto v = r.get_int("workers", flags.workers)) cfg.workers = *v;
    if (auto v = r.get_bool("emit_masks", flags.emit_masks)) cfg.emit_masks = *v;
    if (auto v = r.get_int("age_tolerance", flags.age_tolerance)) cfg.age_tolerance = *v;

    if (auto v = r.get_string("manifest", flags.manifest)) cfg.manifest_path = *v;
    if (cfg.manifest_path.empty()) cfg.manifest_path = cfg.output / "manifest.jsonl";
    if (auto v = r.get_string("report", flags.report)) cfg.report_path = *v;
    if (cfg.report_path.empty()) cfg.report_path = cfg.output / "eval_report.json";

    if (cfg.workers < 1)
        throw ConfigError("workers: must be >= 1, got " + std::to_string(cfg.workers));
    if (cfg.age_tolerance < 0)
        throw ConfigError("age_tolerance: must be >= 0, got " + std::to_string(cfg.age_tolerance));
    const std::set<std::string> backend_kinds = {"identity", "noise", "external"};
    if (backend_kinds.find(cfg.inpaint_backend) == backend_kinds.end())
        throw ConfigError("inpaint_backend: must be one of identity, noise, external; got '" +
                          cfg.inpaint_backend + "'");
    for (const auto& [key, value] :
         std::vector<std::pair<std::string, std::string>>{{"detector", cfg.detector},
                                                          {"extractor", cfg.extractor},
                                                          {"embedder", cfg.embedder}}) {
        if (value != "stub" && value != "external")
            throw ConfigError(key + ": must be 'stub' or 'external', got '" + value + "'");
    }
    const bool needs_endpoint = cfg.inpaint_backend == "external" || cfg.detector == "external" ||
                                cfg.extractor == "external" || cfg.embedder == "external";
    if (needs_endpoint && cfg.external_endpoint.empty())
        throw ConfigError("external_endpoint: required when any backend is 'external'");

    try {
        cfg.pipeline.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

}  // namespace anonypipe
