#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace vanishlab {

enum class ExperimentKind {
    Predict,
    ChainScan,
    ChainTrain,
    MlpScan,
    MlpHessian,
    ConvScan,
    Verify,
};

const char* kind_name(ExperimentKind k);
ExperimentKind parse_kind(const std::string& name);

// One experiment = one JSON document; CLI flags override the top-level keys.
struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Verify;
    nlohmann::json params;  // kind-specific keys
    std::uint64_t master_seed = 0;
    long trials = 1;
    std::string output;
    int threads = 0;  // 0: VANISHLAB_THREADS or hardware concurrency

    static ExperimentSpec from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    // Throws std::invalid_argument listing every missing or invalid key.
    void validate() const;
};

// One CSV data row.  `trial` is -1 for cross-trial summary rows.
struct Row {
    std::string kind;
    std::string observable;
    int depth = 0;
    int width = 0;
    std::string init;
    std::string activation;
    long trial = 0;
    std::uint64_t sub_seed = 0;
    double value = 0.0;
    bool operator==(const Row&) const = default;
};

inline constexpr const char* kCsvHeader =
    "kind,observable,depth,width,init,activation,trial,sub_seed,value";

// CSV with the fixed header; floats carry 17 significant digits so parsing
// recovers the identical binary value.  Empty input is an error and creates
// no file.
void emit_csv(const std::vector<Row>& rows, const std::string& path);
void emit_json(const std::vector<Row>& rows, const std::string& path);
std::vector<Row> parse_csv(const std::string& path);

// Appends :mean/:median/:std/:ci95_low/:ci95_high/:n and :log_abs_median
// summary rows (trial = -1) per (observable, depth, width) group, in first-
// appearance order.
void append_summaries(std::vector<Row>& rows, std::uint64_t master_seed);

struct RunResult {
    std::vector<Row> rows;
    bool ok = true;  // Verify: all criteria passed
};

// Executes the experiment; writes CSV plus a <output>.meta.json sidecar when
// an output path is set.
RunResult run(const ExperimentSpec& spec);

// Pure theory-oracle evaluation for the `predict` subcommand.
nlohmann::json predict_json(const nlohmann::json& params);

}  // namespace vanishlab
