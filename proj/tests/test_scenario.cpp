#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smlab/scenario.hpp"

using namespace smlab;
namespace fs = std::filesystem;

namespace {

std::string field_of(const std::string& text) {
    try {
        (void)make_scenario(Config::parse(text));
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("smlab_test_" + name);
    fs::remove_all(dir);
    return dir;
}

const std::string small_verdict =
    "name = small\nkind = verdict\nmodel.preset = bm\ntransform.preset = abs\n"
    "run.n_list = 2, 4, 8, 16\nrun.steps = 256\nrun.paths = 8\nrun.seed = 3\n";

}  // namespace

TEST_CASE("config parsing") {
    const auto c = Config::parse("# comment\nname = x  # trailing\n\nrun.n_list = 1, 2,3\nrun.steps=12\n");
    CHECK(c.text("name") == "x");
    CHECK(c.numbers("run.n_list") == std::vector<double>{1, 2, 3});
    CHECK(c.integer("run.steps", 0) == 12);
    CHECK(c.number("run.eps", 0.5) == 0.5);
    CHECK_FALSE(c.has("kind"));

    auto field = [](const std::string& text) {
        try {
            (void)Config::parse(text);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("<no error>");
    };
    CHECK(field("run.colour = red\n") == "run.colour");
    CHECK(field("name = a\nname = b\n") == "name");
    CHECK(field("just words\n") == "line 1");
    CHECK(field("name = a\n = 3\n") == "line 2");
    CHECK_THROWS_AS(Config::load("/nonexistent/smlab.cfg"), ConfigError);
}

TEST_CASE("scenario validation names the offending field") {
    CHECK(field_of("kind = verdict\ntransform.preset = abs\nrun.n_list = 1,2,3,4\n") == "model.preset");
    CHECK(field_of("model.preset = bm\n") == "kind");
    CHECK(field_of("kind = teleport\nmodel.preset = bm\n") == "kind");
    CHECK(field_of("kind = verdict\nmodel.preset = bm\nrun.n_list = 1,2,3,4\n") == "transform.preset");
    CHECK(field_of("kind = verdict\nmodel.preset = bm\ntransform.preset = abs\nrun.n_list = 1,2,3\n") == "run.n_list");
    CHECK(field_of("kind = verdict\nmodel.preset = bm\ntransform.preset = abs\nrun.n_list = 1,4,2,8\n") == "run.n_list");
    CHECK(field_of("kind = tanaka\nmodel.preset = zebra\n") == "model.preset");
    CHECK(field_of("kind = decompose\nmodel.preset = bm\ntransform.preset = pow:2\n") == "transform.preset");
    CHECK(field_of("kind = tanaka\nmodel.preset = bm\nrun.steps = 1\n") == "run.steps");
    CHECK(field_of("kind = tanaka\nmodel.preset = bm\nrun.steps = 12.5\n") == "run.steps");
    CHECK(field_of("kind = tanaka\nmodel.preset = bm\nrun.eps = -1\n") == "run.eps");
    CHECK(field_of("kind = tanaka\nmodel.preset = bm\nrun.horizon = abc\n") == "run.horizon");
    CHECK(field_of("kind = tanaka\nmodel.preset = bm\nrun.t = 2\n") == "run.t");
    CHECK(field_of("kind = duality\nmodel.preset = bm\nrun.clock = sideways\n") == "run.clock");
    CHECK(field_of("kind = duality\nmodel.preset = bm\nrun.clock = affine:-1\n") == "run.clock");
    CHECK(field_of("kind = decompose\nmodel.preset = bm\ntransform.preset = abs\nrun.source = magic\n") == "run.source");
    CHECK(field_of("kind = cantor\n") == "<no error>");
}

TEST_CASE("built-in listing is sorted and complete") {
    const auto& b = builtin_scenarios();
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i - 1].name < b[i].name);
    const auto text = list_scenarios();
    for (const char* name : {"cantor_example", "tanaka_abs", "verdict_pow_0_5", "duality_cantor", "bounded_elliptic",
                             "pow:<alpha>", "cantor_plus_t"})
        CHECK(text.find(name) != std::string::npos);
    CHECK(text.find("scenarios:") < text.find("models:"));
    for (const auto& s : b) CHECK_NOTHROW(make_scenario(Config::parse(s.config)));
    CHECK(find_builtin("nope") == nullptr);
}

TEST_CASE("shipped scenario files match the built-in configs") {
    const fs::path dir = SMLAB_SCENARIO_DIR;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".cfg") continue;
        ++files;
        const auto* b = find_builtin(entry.path().stem().string());
        REQUIRE(b != nullptr);
        const auto from_file = make_scenario(Config::load(entry.path()));
        const auto builtin = make_scenario(Config::parse(b->config));
        CHECK(from_file.name == builtin.name);
        CHECK(from_file.kind == builtin.kind);
        CHECK(from_file.steps == builtin.steps);
        CHECK(from_file.paths == builtin.paths);
        CHECK(from_file.seed == builtin.seed);
        CHECK(from_file.n_list == builtin.n_list);
        CHECK(from_file.horizon == builtin.horizon);
    }
    CHECK(files == builtin_scenarios().size());
}

TEST_CASE("runs are byte-identical for the same seed, regardless of workers") {
    const auto s = make_scenario(Config::parse(small_verdict));
    const auto a = run_scenario(s, scratch("det_a"));
    ::setenv("SMLAB_WORKERS", "1", 1);
    const auto b = run_scenario(s, scratch("det_b"));
    ::unsetenv("SMLAB_WORKERS");
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a.parent_path() / "ladder.csv") == slurp(b.parent_path() / "ladder.csv"));

    auto cfg = Config::parse(small_verdict);
    cfg.set("run.seed", "4");
    const auto c = run_scenario(make_scenario(cfg), scratch("det_c"));
    CHECK(slurp(a) != slurp(c));

    const auto report = Json::parse(slurp(a));
    CHECK(report["scenario"] == "small");
    CHECK(report["n_levels"].size() == 4);
    CHECK(report.contains("classification"));
}

TEST_CASE("plot data for verdict, Tanaka and empty ladders") {
    const auto dir = scratch("plot");
    const auto report = run_scenario(make_scenario(Config::parse(small_verdict)), dir);
    const auto csv = emit_plot_data(report);
    CHECK(csv.filename() == "ladder_plot.csv");
    const auto text = slurp(csv);
    CHECK(text.rfind("n,var,stderr\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);

    const auto tan = run_scenario(make_scenario(Config::parse(
                                      "name = t\nkind = tanaka\nmodel.preset = bm\nrun.steps = 512\nrun.paths = 4\n")),
                                  scratch("plot_tanaka"));
    const auto tcsv = emit_plot_data(tan, scratch("plot_tanaka_out"));
    CHECK(slurp(tcsv).rfind("t,A_t,local_time\n", 0) == 0);

    const auto empty = dir / "empty.json";
    write_text(empty, R"({"kind": "verdict"})");
    CHECK(slurp(emit_plot_data(empty, scratch("plot_empty"))) == "n,var,stderr\n");

    write_text(dir / "odd.json", R"({"kind": "duality"})");
    CHECK_THROWS_AS(emit_plot_data(dir / "odd.json"), UnsupportedError);
    write_text(dir / "broken.json", "{not json");
    CHECK_THROWS_AS(emit_plot_data(dir / "broken.json"), Error);
}

TEST_CASE("error records") {
    const auto j = error_record(ConfigError("run.steps", "bad"));
    CHECK(j["error"] == "config");
    CHECK(j["field"] == "run.steps");
    CHECK(error_record(BlowUpError(12, "boom"))["step"] == 12);
    CHECK(error_record(std::runtime_error("x"))["error"] == "internal");
}

TEST_CASE("CLI reports config errors as JSON on stderr with a nonzero exit") {
    const auto dir = scratch("cli");
    fs::create_directories(dir);
    const auto cfg = dir / "bad.cfg";
    write_text(cfg, "kind = verdict\ntransform.preset = abs\nrun.n_list = 1,2,3,4\n");
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + SMLAB_CLI_PATH + "\" run \"" + cfg.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CHECK(status != 0);
    CHECK(WEXITSTATUS(status) == 2);
    const auto record = Json::parse(slurp(err));
    CHECK(record["error"] == "config");
    CHECK(record["field"] == "model.preset");

    const std::string ok = std::string("\"") + SMLAB_CLI_PATH + "\" run smoothing_abs --out \"" + (dir / "run").string() +
                           "\" > /dev/null";
    CHECK(std::system(ok.c_str()) == 0);
    CHECK(fs::exists(dir / "run" / "report.json"));
    CHECK(fs::exists(dir / "run" / "smoothing.csv"));
}
