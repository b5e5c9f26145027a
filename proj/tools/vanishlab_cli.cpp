// vanishlab command-line front end.
//
// Subcommands:
//   predict  : closed-form theory evaluation, prints JSON to stdout
//   chain    : neural-chain scans and optimizer runs, writes CSV
//   mlp      : random-MLP norm/Hessian scans, writes CSV
//   conv     : fully convolutional scans, writes CSV
//   verify   : full theory-vs-Monte-Carlo agreement suite, exit code 0/1

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vanishlab/harness.hpp"
#include "vanishlab/parallel.hpp"
#include "vanishlab/verify.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    nlohmann::json doc;
    f >> doc;
    return doc;
}

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    long trials = 0;
    int threads = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "experiment config JSON");
        cmd->add_option("--out", out, "output CSV path");
        cmd->add_option("--seed", seed, "master seed")->each([this](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--trials", trials, "number of trials");
        cmd->add_option("--threads", threads, "worker threads (overrides VANISHLAB_THREADS)");
    }

    // CLI flags override the top-level config keys.
    vanishlab::ExperimentSpec build(const std::set<std::string>& allowed_kinds) const {
        nlohmann::json doc = config.empty() ? nlohmann::json::object() : load_config(config);
        if (seed_set) doc["master_seed"] = seed;
        if (trials > 0) doc["trials"] = trials;
        if (!out.empty()) doc["output"] = out;
        if (threads > 0) doc["threads"] = threads;
        if (!doc.contains("kind") && allowed_kinds.size() == 1)
            doc["kind"] = *allowed_kinds.begin();
        auto spec = vanishlab::ExperimentSpec::from_json(doc);
        if (!allowed_kinds.count(vanishlab::kind_name(spec.kind)))
            throw std::invalid_argument(std::string("config kind '") +
                                        vanishlab::kind_name(spec.kind) +
                                        "' does not belong to this subcommand");
        return spec;
    }
};

int run_spec_command(const CommonFlags& flags, const std::set<std::string>& kinds) {
    auto spec = flags.build(kinds);
    if (spec.output.empty())
        throw std::invalid_argument("an output CSV path is required (--out or config 'output')");
    const auto result = vanishlab::run(spec);
    std::printf("wrote %zu rows to %s\n", result.rows.size(), spec.output.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vanishlab: closed-form statistics of random deep networks and the "
                 "Monte-Carlo engine that checks them"};
    app.require_subcommand(1);

    // predict
    auto* predict = app.add_subcommand("predict", "evaluate a closed-form quantity (JSON out)");
    std::string predict_config;
    std::string quantity;
    std::vector<std::string> kv;
    predict->add_option("--config", predict_config, "JSON with {quantity, ...params}");
    predict->add_option("--quantity", quantity, "quantity name (alternative to --config)");
    predict->add_option("--param", kv, "extra key=value parameter (repeatable)");

    CommonFlags chain_flags, mlp_flags, conv_flags, verify_flags;
    auto* chain = app.add_subcommand("chain", "neural-chain scans and optimizer runs");
    chain_flags.attach(chain);
    auto* mlp = app.add_subcommand("mlp", "random MLP scans");
    mlp_flags.attach(mlp);
    auto* conv = app.add_subcommand("conv", "fully convolutional scans");
    conv_flags.attach(conv);
    auto* verify = app.add_subcommand("verify", "full agreement suite (exit 0 iff all pass)");
    verify_flags.attach(verify);

    CLI11_PARSE(app, argc, argv);

    try {
        if (predict->parsed()) {
            nlohmann::json params =
                predict_config.empty() ? nlohmann::json::object() : load_config(predict_config);
            if (!quantity.empty()) params["quantity"] = quantity;
            for (const auto& pair : kv) {
                const auto eq = pair.find('=');
                if (eq == std::string::npos)
                    throw std::invalid_argument("--param expects key=value, got " + pair);
                const std::string key = pair.substr(0, eq);
                const std::string val = pair.substr(eq + 1);
                try {
                    params[key] = std::stod(val);
                } catch (...) {
                    params[key] = val;
                }
            }
            std::cout << vanishlab::predict_json(params).dump(2) << '\n';
            return 0;
        }
        if (chain->parsed())
            return run_spec_command(chain_flags, {"chain_scan", "chain_train"});
        if (mlp->parsed()) return run_spec_command(mlp_flags, {"mlp_scan", "mlp_hessian"});
        if (conv->parsed()) return run_spec_command(conv_flags, {"conv_scan"});
        if (verify->parsed()) {
            nlohmann::json doc = verify_flags.config.empty()
                                     ? nlohmann::json::object()
                                     : load_config(verify_flags.config);
            doc["kind"] = "verify";
            if (verify_flags.seed_set) doc["master_seed"] = verify_flags.seed;
            if (!doc.contains("master_seed")) doc["master_seed"] = 42;  // suite default
            if (verify_flags.threads > 0) doc["threads"] = verify_flags.threads;
            auto spec = vanishlab::ExperimentSpec::from_json(doc);
            const auto criteria = vanishlab::run_all_criteria(
                spec.master_seed, vanishlab::resolve_threads(spec.threads));
            bool all = true;
            for (const auto& c : criteria) {
                all = all && c.pass;
                std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                            c.detail.c_str());
            }
            if (!verify_flags.out.empty()) {
                std::vector<vanishlab::Row> rows;
                for (const auto& c : criteria)
                    rows.push_back({"verify", c.name, 0, 0, "", "", 0, spec.master_seed,
                                    c.pass ? 1.0 : 0.0});
                vanishlab::emit_csv(rows, verify_flags.out);
            }
            std::printf("%s\n", all ? "verify: all criteria passed" : "verify: FAILURES present");
            return all ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
