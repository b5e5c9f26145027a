#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vanishlab/harness.hpp"

using namespace vanishlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path tmpfile(const std::string& name) {
    return fs::temp_directory_path() / ("vanishlab_harness_" + name);
}

}  // namespace

TEST_CASE("spec validation lists every problem at once") {
    ExperimentSpec spec;
    spec.kind = ExperimentKind::ChainScan;
    spec.trials = 0;
    spec.params = nlohmann::json::object();  // tau and depths both missing
    try {
        spec.validate();
        FAIL("expected validation to throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("tau") != std::string::npos);
        CHECK(msg.find("depths") != std::string::npos);
        CHECK(msg.find("trials") != std::string::npos);
    }
}

TEST_CASE("kind names round trip") {
    for (const char* name : {"predict", "chain_scan", "chain_train", "mlp_scan",
                             "mlp_hessian", "conv_scan", "verify"}) {
        CHECK(std::string(kind_name(parse_kind(name))) == name);
    }
    CHECK_THROWS(parse_kind("bogus"));
}

TEST_CASE("csv round trip preserves every binary value") {
    std::vector<Row> rows = {
        {"chain_scan", "loss", 4, 1, "uniform:range=1.5", "linear", 0, 12345678901234567ull,
         1.0 / 3.0},
        {"chain_scan", "loss", 4, 1, "uniform:range=1.5", "linear", 1, 2, 1e-300},
        {"mlp_scan", "grad_fro_total", 16, 4, "gaussian:he", "relu", -1, 0,
         -9876.54321098765432},
        {"conv_scan", "x", 1, 1, "uniform:lecun", "linear", 2, 3, 5e307},
    };
    const fs::path p = tmpfile("roundtrip.csv");
    emit_csv(rows, p.string());
    const auto back = parse_csv(p.string());
    CHECK(back == rows);
    fs::remove(p);
}

TEST_CASE("empty rows are an error and create no file") {
    const fs::path p = tmpfile("empty.csv");
    fs::remove(p);
    CHECK_THROWS(emit_csv({}, p.string()));
    CHECK(!fs::exists(p));
    CHECK_THROWS(emit_json({}, p.string()));
}

TEST_CASE("json emission") {
    std::vector<Row> rows = {
        {"chain_scan", "loss", 4, 1, "uniform:he", "linear", 0, 7, 0.25}};
    const fs::path p = tmpfile("rows.json");
    emit_json(rows, p.string());
    std::ifstream f(p);
    nlohmann::json doc;
    f >> doc;
    CHECK(doc.is_array());
    CHECK(doc[0]["observable"] == "loss");
    CHECK(doc[0]["value"] == 0.25);
    fs::remove(p);
}

TEST_CASE("summaries degenerate correctly for one trial") {
    std::vector<Row> rows = {
        {"chain_scan", "loss", 4, 1, "u", "linear", 0, 9, 2.5}};
    append_summaries(rows, 1);
    double mean = -1, med = -1, sd = -1, lo = -1, hi = -1, n = -1;
    for (const auto& r : rows) {
        if (r.observable == "loss:mean") mean = r.value;
        if (r.observable == "loss:median") med = r.value;
        if (r.observable == "loss:std") sd = r.value;
        if (r.observable == "loss:ci95_low") lo = r.value;
        if (r.observable == "loss:ci95_high") hi = r.value;
        if (r.observable == "loss:n") n = r.value;
    }
    CHECK(mean == 2.5);
    CHECK(med == 2.5);
    CHECK(sd == 0.0);
    CHECK(lo == 2.5);
    CHECK(hi == 2.5);
    CHECK(n == 1.0);
}

TEST_CASE("chain_train experiment produces attributable deterministic rows") {
    nlohmann::json doc = {
        {"kind", "chain_train"},
        {"params",
         {{"method", "rmsprop"}, {"depth", 6}, {"lr", 1e-3}, {"steps", 50},
          {"init_range", 0.2}}},
        {"master_seed", 5},
        {"trials", 4},
    };
    const auto spec = ExperimentSpec::from_json(doc);
    const auto r1 = run(spec);
    const auto r2 = run(spec);
    CHECK(r1.rows == r2.rows);
    // Every data row carries a nonzero sub-seed and the kind.
    long data_rows = 0;
    for (const auto& r : r1.rows) {
        if (r.trial < 0) continue;
        ++data_rows;
        CHECK(r.kind == "chain_train");
        CHECK(r.sub_seed != 0);
    }
    CHECK(data_rows == 4 * 5);  // five observables per trial
}

TEST_CASE("scan output is byte-identical across repeats and thread counts") {
    nlohmann::json doc = {
        {"kind", "chain_scan"},
        {"params", {{"tau", 2.0}, {"depths", {3, 5}}}},
        {"master_seed", 11},
        {"trials", 6},
    };
    const fs::path pa = tmpfile("det_a.csv"), pb = tmpfile("det_b.csv");
    {
        nlohmann::json d = doc;
        d["output"] = pa.string();
        d["threads"] = 1;
        run(ExperimentSpec::from_json(d));
    }
    {
        nlohmann::json d = doc;
        d["output"] = pb.string();
        d["threads"] = 3;
        run(ExperimentSpec::from_json(d));
    }
    const std::string a = slurp(pa), b = slurp(pb);
    CHECK(!a.empty());
    CHECK(a == b);
    // The sidecar records the spec for attribution.
    nlohmann::json meta;
    std::ifstream mf(pa.string() + ".meta.json");
    mf >> meta;
    CHECK(meta["spec"]["kind"] == "chain_scan");
    CHECK(meta["spec"]["master_seed"] == 11);
    fs::remove(pa);
    fs::remove(pb);
    fs::remove(pa.string() + ".meta.json");
    fs::remove(pb.string() + ".meta.json");
}

TEST_CASE("mlp_hessian experiment reports spectrum observables") {
    nlohmann::json doc = {
        {"kind", "mlp_hessian"},
        {"params",
         {{"init", "uniform:lecun"}, {"activation", "linear"}, {"depth", 4}, {"width", 4},
          {"samples", 6}}},
        {"master_seed", 3},
        {"trials", 2},
    };
    const auto result = run(ExperimentSpec::from_json(doc));
    bool saw_eig = false, saw_gersh = false;
    for (const auto& r : result.rows) {
        if (r.observable == "eig_max") saw_eig = true;
        if (r.observable == "gershgorin_ok") {
            saw_gersh = true;
            CHECK(r.value == 1.0);
        }
    }
    CHECK(saw_eig);
    CHECK(saw_gersh);
}

TEST_CASE("predict evaluates oracle quantities") {
    const auto moment = predict_json(
        {{"quantity", "chain_moment"}, {"tau", 2.0}, {"depth", 7}, {"order", 1}});
    CHECK(testutil::close(moment.at("value").get<double>(), 1.0));

    const auto bounds = predict_json(
        {{"quantity", "chain_median_bounds"}, {"tau", 2.0}, {"depth", 7}});
    CHECK(bounds.at("lower").get<double>() <= bounds.at("bisected_median").get<double>());
    CHECK(bounds.at("bisected_median").get<double>() <= bounds.at("upper").get<double>() * (1 + 1e-9));

    const auto q = predict_json(
        {{"quantity", "q_matrix"}, {"width", 3}, {"kappa", 1.8}, {"p", 1.0}});
    CHECK(q.at("value")[0][0].get<double>() == 5.0);

    CHECK_THROWS(predict_json({{"quantity", "nope"}}));
}
