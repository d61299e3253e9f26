#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "actevo/config.hpp"
#include "json.hpp"

using namespace actevo;
using json = nlohmann::ordered_json;

TEST_CASE("toml subset covers scalars, strings, and booleans") {
    const auto doc = json::parse(toml_to_json(R"(
mode = "cafe"            # trailing comment
seed = 42
threshold = 0.25
big = 1_000_000
neg = -3
sci = 1.5e-3
flag = true
off = false
label = "a # not a comment \"quoted\" \t tab"
)"));
    CHECK(doc["mode"] == "cafe");
    CHECK(doc["seed"] == 42);
    CHECK(doc["seed"].is_number_integer());
    CHECK(doc["threshold"] == 0.25);
    CHECK(doc["threshold"].is_number_float());
    CHECK(doc["big"] == 1000000);
    CHECK(doc["neg"] == -3);
    CHECK(doc["sci"] == 0.0015);
    CHECK(doc["flag"] == true);
    CHECK(doc["off"] == false);
    CHECK(doc["label"] == "a # not a comment \"quoted\" \t tab");
}

TEST_CASE("toml subset nests tables and dotted keys") {
    const auto doc = json::parse(toml_to_json(R"(
top = 1

[search]
population = 50
inner.depth = 2

[task]
dataset = "two_moons"

[task.extra]
noise = 0.1
)"));
    CHECK(doc["top"] == 1);
    CHECK(doc["search"]["population"] == 50);
    CHECK(doc["search"]["inner"]["depth"] == 2);
    CHECK(doc["task"]["dataset"] == "two_moons");
    CHECK(doc["task"]["extra"]["noise"] == 0.1);
}

TEST_CASE("toml subset reads flat and multi-line arrays") {
    const auto doc = json::parse(toml_to_json(R"(
widths = [2, 8, 1]
empty = []
names = ["a", "b"]
trailing = [1, 2,]
spread = [
  10,
  20,   # values may carry comments
  30,
]
)"));
    CHECK(doc["widths"] == json::array({2, 8, 1}));
    CHECK(doc["empty"] == json::array());
    CHECK(doc["names"] == json::array({"a", "b"}));
    CHECK(doc["trailing"] == json::array({1, 2}));
    CHECK(doc["spread"] == json::array({10, 20, 30}));
}

TEST_CASE("toml subset reports the offending line") {
    auto field_of = [](const std::string& text) {
        try {
            toml_to_json(text);
        } catch (const ConfigError& e) {
            return e.field;
        }
        return std::string("no error");
    };
    CHECK(field_of("a = ") == "line 1");
    CHECK(field_of("x = 1\ny = oops") == "line 2");
    CHECK(field_of("s = \"unterminated") == "line 1");
    CHECK(field_of("a = 1\na = 2") == "line 2");
    CHECK(field_of("k!ey = 1") == "line 1");
    CHECK(field_of("[a\n]") == "no error");  // header may not span lines...
    CHECK(field_of("arr = [1, 2") == "line 1");
    CHECK(field_of("[[table]]") == "line 1");
    CHECK(field_of("a = 1 2") == "line 1");
    CHECK(field_of("a = 99999999999999999999999999") == "line 1");
}

TEST_CASE("toml duplicate and shadowed keys are rejected") {
    CHECK_THROWS_AS(toml_to_json("a = 1\n[a]\nb = 2"), ConfigError);
    CHECK_THROWS_AS(toml_to_json("a.b = 1\na.b.c = 2"), ConfigError);
}

TEST_CASE("config loader dispatches on extension and canonicalizes") {
    const std::string toml_path = "cfg_probe.toml";
    const std::string json_path = "cfg_probe.json";
    {
        std::ofstream t(toml_path);
        t << "mode = \"random\"\n[search]\nbudget = 500\n";
        std::ofstream j(json_path);
        j << "{\n  \"mode\": \"random\",\n  \"search\": {\"budget\": 500}\n}\n";
    }
    const std::string from_toml = load_config_json(toml_path);
    const std::string from_json = load_config_json(json_path);
    CHECK(json::parse(from_toml) == json::parse(from_json));
    // Canonical form: whitespace differences in the source do not survive.
    CHECK(from_json.find('\n') == std::string::npos);

    CHECK_THROWS_AS(load_config_json("does_not_exist.toml"), ConfigError);
    {
        std::ofstream j("cfg_bad.json");
        j << "{ not json";
    }
    CHECK_THROWS_AS(load_config_json("cfg_bad.json"), ConfigError);
    std::remove(toml_path.c_str());
    std::remove(json_path.c_str());
    std::remove("cfg_bad.json");
}

TEST_CASE("config error carries the field path") {
    const ConfigError e("search.population", "must be positive");
    CHECK(e.field == "search.population");
    CHECK(std::string(e.what()).find("search.population") != std::string::npos);
    CHECK(std::string(e.what()).find("must be positive") != std::string::npos);
}
