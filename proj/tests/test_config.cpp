#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <string>

#include "anonypipe/config.hpp"
#include "test_support.hpp"

using namespace anonypipe;
namespace fs = std::filesystem;

namespace {

EnvLookup env_from(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        const auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

struct ConfigFixture {
    testsupport::TempDir dir{"config"};
    fs::path input;
    FlagValues flags;

    ConfigFixture() {
        input = dir.path / "in";
        fs::create_directories(input);
        flags.input = input.string();
        flags.output = (dir.path / "out").string();
    }

    fs::path write_config(const std::string& json) {
        const fs::path p = dir.path / "config.json";
        testsupport::write_text(p, json);
        return p;
    }
};

}  // namespace

TEST_CASE("defaults apply when only paths are given") {
    ConfigFixture fx;
    const RunConfig cfg = load_config(fx.flags, env_from({}), std::nullopt);
    CHECK(cfg.pipeline.min_face_side == 100);
    CHECK(cfg.pipeline.detection_confidence_threshold == 0.5);
    CHECK(cfg.pipeline.mask_padding_ratio == 0.0);
    CHECK(cfg.pipeline.extract_margin_ratio == 0.0);
    CHECK(cfg.pipeline.seed_policy == SeedPolicy::per_face_derived());
    CHECK(cfg.pipeline.prompt_template == kDefaultPromptTemplate);
    CHECK(cfg.pipeline.blend_mode == BlendMode::hard());
    CHECK(cfg.pipeline.inpaint.steps == 50);
    CHECK(cfg.pipeline.inpaint.guidance_scale == 7.5);
    CHECK(cfg.detector == "stub");
    CHECK(cfg.extractor == "stub");
    CHECK(cfg.embedder == "stub");
    CHECK(cfg.inpaint_backend == "identity");
    CHECK(cfg.workers == 1);
    CHECK_FALSE(cfg.emit_masks);
    CHECK(cfg.age_tolerance == 5);
    CHECK(cfg.extractor_table == fx.input / "attributes.txt");
    CHECK(cfg.manifest_path == fs::path(*fx.flags.output) / "manifest.jsonl");
    CHECK(cfg.report_path == fs::path(*fx.flags.output) / "eval_report.json");
}

TEST_CASE("flags override environment which overrides the config file") {
    ConfigFixture fx;
    const fs::path file = fx.write_config("{\"min_face_side\": 32}");

    SECTION("file alone") {
        const RunConfig cfg = load_config(fx.flags, env_from({}), file);
        CHECK(cfg.pipeline.min_face_side == 32);
    }
    SECTION("environment beats file") {
        const RunConfig cfg =
            load_config(fx.flags, env_from({{"ANONYPIPE_MIN_FACE_SIDE", "64"}}), file);
        CHECK(cfg.pipeline.min_face_side == 64);
    }
    SECTION("flag beats environment") {
        fx.flags.min_face_side = 80;
        const RunConfig cfg =
            load_config(fx.flags, env_from({{"ANONYPIPE_MIN_FACE_SIDE", "64"}}), file);
        CHECK(cfg.pipeline.min_face_side == 80);
    }
}

TEST_CASE("unknown config keys are rejected with the valid key list") {
    ConfigFixture fx;
    const fs::path file = fx.write_config("{\"min_face_sides\": 32}");
    try {
        load_config(fx.flags, env_from({}), file);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("min_face_sides") != std::string::npos);
        CHECK(msg.find("mask_padding_ratio") != std::string::npos);  // lists valid keys
    }
}

TEST_CASE("invariant violations name the field and constraint") {
    ConfigFixture fx;
    SECTION("negative padding from file") {
        const fs::path file = fx.write_config("{\"mask_padding_ratio\": -1}");
        try {
            load_config(fx.flags, env_from({}), file);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("mask_padding_ratio") != std::string::npos);
        }
    }
    SECTION("zero workers") {
        fx.flags.workers = 0;
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
    SECTION("bad threshold") {
        const fs::path file = fx.write_config("{\"detection_confidence_threshold\": 1.5}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
    SECTION("bad template") {
        fx.flags.prompt_template = "{age} nothing else";
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
    SECTION("negative age tolerance") {
        fx.flags.age_tolerance = -1;
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
}

TEST_CASE("missing or nonexistent paths are configuration errors") {
    ConfigFixture fx;
    SECTION("missing input") {
        fx.flags.input.reset();
        try {
            load_config(fx.flags, env_from({}), std::nullopt);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("input") != std::string::npos);
        }
    }
    SECTION("nonexistent input") {
        fx.flags.input = (fx.dir.path / "nowhere").string();
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
    SECTION("missing output") {
        fx.flags.output.reset();
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
    SECTION("missing config file") {
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), fx.dir.path / "absent.json"),
                        ConfigError);
    }
    SECTION("output that collides with an existing file") {
        const fs::path blocker = fx.dir.path / "blocked";
        testsupport::write_text(blocker, "a file, not a directory");
        fx.flags.output = blocker.string();
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
}

TEST_CASE("environment values must parse") {
    ConfigFixture fx;
    CHECK_THROWS_AS(load_config(fx.flags, env_from({{"ANONYPIPE_MIN_FACE_SIDE", "tiny"}}),
                                std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_config(fx.flags, env_from({{"ANONYPIPE_EMIT_MASKS", "maybe"}}),
                                std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(
        load_config(fx.flags, env_from({{"ANONYPIPE_MASK_PADDING_RATIO", "0.1x"}}), std::nullopt),
        ConfigError);
    const RunConfig cfg = load_config(
        fx.flags, env_from({{"ANONYPIPE_EMIT_MASKS", "true"}, {"ANONYPIPE_WORKERS", "3"}}),
        std::nullopt);
    CHECK(cfg.emit_masks);
    CHECK(cfg.workers == 3);
}

TEST_CASE("seed handling selects the policy") {
    ConfigFixture fx;
    SECTION("a seed implies the fixed policy") {
        fx.flags.seed = 1234;
        const RunConfig cfg = load_config(fx.flags, env_from({}), std::nullopt);
        CHECK(cfg.pipeline.seed_policy == SeedPolicy::fixed(1234));
    }
    SECTION("explicit per_face_derived conflicts with a seed") {
        fx.flags.seed = 1;
        const fs::path file = fx.write_config("{\"seed_policy\": \"per_face_derived\"}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
    SECTION("fixed policy without a seed is an error") {
        const fs::path file = fx.write_config("{\"seed_policy\": \"fixed\"}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
    SECTION("unknown policy") {
        const fs::path file = fx.write_config("{\"seed_policy\": \"diceroll\"}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
}

TEST_CASE("blend mode configuration") {
    ConfigFixture fx;
    SECTION("feathered with radius") {
        const fs::path file = fx.write_config("{\"blend_mode\": \"feathered\", \"feather_radius\": 3}");
        const RunConfig cfg = load_config(fx.flags, env_from({}), file);
        CHECK(cfg.pipeline.blend_mode == BlendMode::feathered(3));
    }
    SECTION("radius without feathered mode is rejected") {
        const fs::path file = fx.write_config("{\"feather_radius\": 3}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
    SECTION("negative radius is rejected") {
        const fs::path file =
            fx.write_config("{\"blend_mode\": \"feathered\", \"feather_radius\": -2}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
    SECTION("unknown mode is rejected") {
        const fs::path file = fx.write_config("{\"blend_mode\": \"soft\"}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
}

TEST_CASE("backend selection and endpoint requirements") {
    ConfigFixture fx;
    SECTION("--backend flag maps to the inpaint backend") {
        fx.flags.backend = "noise";
        const RunConfig cfg = load_config(fx.flags, env_from({}), std::nullopt);
        CHECK(cfg.inpaint_backend == "noise");
    }
    SECTION("unknown inpaint backend") {
        fx.flags.backend = "brushnet";
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
    }
    SECTION("external backend needs an endpoint") {
        fx.flags.backend = "external";
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), std::nullopt), ConfigError);
        const RunConfig cfg = load_config(
            fx.flags, env_from({{"ANONYPIPE_EXTERNAL_ENDPOINT", "http://localhost:9000"}}),
            std::nullopt);
        CHECK(cfg.external_endpoint == "http://localhost:9000");
    }
    SECTION("unknown detector kind") {
        const fs::path file = fx.write_config("{\"detector\": \"retina\"}");
        CHECK_THROWS_AS(load_config(fx.flags, env_from({}), file), ConfigError);
    }
}

TEST_CASE("emotion noun overrides merge over the defaults") {
    ConfigFixture fx;
    const fs::path file = fx.write_config("{\"emotion_nouns\": {\"sad\": \"sorrow\"}}");
    const RunConfig cfg = load_config(fx.flags, env_from({}), file);
    CHECK(cfg.pipeline.emotion_nouns.at(Emotion::sad) == "sorrow");
    CHECK(cfg.pipeline.emotion_nouns.at(Emotion::happy) == "happiness");

    const fs::path bad = fx.write_config("{\"emotion_nouns\": {\"melancholy\": \"x\"}}");
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), bad), ConfigError);
    const fs::path empty_noun = fx.write_config("{\"emotion_nouns\": {\"sad\": \"\"}}");
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), empty_noun), ConfigError);
}

TEST_CASE("inpaint parameters come from the config") {
    ConfigFixture fx;
    const fs::path file = fx.write_config(
        "{\"inpaint_steps\": 20, \"guidance_scale\": 3.5, \"inpaint_extra\": {\"model\": \"x\"}}");
    const RunConfig cfg = load_config(fx.flags, env_from({}), file);
    CHECK(cfg.pipeline.inpaint.steps == 20);
    CHECK(cfg.pipeline.inpaint.guidance_scale == 3.5);
    CHECK(cfg.pipeline.inpaint.extra.at("model") == "x");

    const fs::path bad = fx.write_config("{\"inpaint_extra\": {\"n\": 4}}");
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), bad), ConfigError);
    const fs::path bad_steps = fx.write_config("{\"inpaint_steps\": 0}");
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), bad_steps), ConfigError);
}

TEST_CASE("config file type mismatches are rejected") {
    ConfigFixture fx;
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), fx.write_config("{\"workers\": \"two\"}")),
                    ConfigError);
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), fx.write_config("{\"emit_masks\": 1}")),
                    ConfigError);
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), fx.write_config("[1,2]")), ConfigError);
    CHECK_THROWS_AS(load_config(fx.flags, env_from({}), fx.write_config("not json")), ConfigError);
}

TEST_CASE("config path resolution prefers the flag over the environment") {
    FlagValues flags;
    flags.config_file = "/tmp/from_flag.json";
    const auto from_flag = resolve_config_path(flags, env_from({{"ANONYPIPE_CONFIG", "/tmp/env.json"}}));
    REQUIRE(from_flag.has_value());
    CHECK(*from_flag == fs::path("/tmp/from_flag.json"));

    const auto from_env = resolve_config_path(FlagValues{}, env_from({{"ANONYPIPE_CONFIG", "/tmp/env.json"}}));
    REQUIRE(from_env.has_value());
    CHECK(*from_env == fs::path("/tmp/env.json"));

    CHECK_FALSE(resolve_config_path(FlagValues{}, env_from({})).has_value());
}

TEST_CASE("prompt template can come from any layer") {
    ConfigFixture fx;
    const std::string custom = "{gender} {ethnicity} {age} {emotion_noun}";
    SECTION("flag") {
        fx.flags.prompt_template = custom;
        CHECK(load_config(fx.flags, env_from({}), std::nullopt).pipeline.prompt_template == custom);
    }
    SECTION("environment") {
        const RunConfig cfg =
            load_config(fx.flags, env_from({{"ANONYPIPE_PROMPT_TEMPLATE", custom}}), std::nullopt);
        CHECK(cfg.pipeline.prompt_template == custom);
    }
    SECTION("file") {
        const fs::path file = fx.write_config("{\"prompt_template\": \"" + custom + "\"}");
        CHECK(load_config(fx.flags, env_from({}), file).pipeline.prompt_template == custom);
    }
}
