#include "vanishlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "vanishlab/chain.hpp"
#include "vanishlab/conv.hpp"
#include "vanishlab/mlp.hpp"
#include "vanishlab/oracle.hpp"
#include "vanishlab/parallel.hpp"
#include "vanishlab/stats.hpp"
#include "vanishlab/verify.hpp"

namespace vanishlab {

const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Predict: return "predict";
        case ExperimentKind::ChainScan: return "chain_scan";
        case ExperimentKind::ChainTrain: return "chain_train";
        case ExperimentKind::MlpScan: return "mlp_scan";
        case ExperimentKind::MlpHessian: return "mlp_hessian";
        case ExperimentKind::ConvScan: return "conv_scan";
        case ExperimentKind::Verify: return "verify";
    }
    return "?";
}

ExperimentKind parse_kind(const std::string& name) {
    for (ExperimentKind k : {ExperimentKind::Predict, ExperimentKind::ChainScan,
                             ExperimentKind::ChainTrain, ExperimentKind::MlpScan,
                             ExperimentKind::MlpHessian, ExperimentKind::ConvScan,
                             ExperimentKind::Verify})
        if (name == kind_name(k)) return k;
    throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& doc) {
    ExperimentSpec s;
    if (!doc.contains("kind")) throw std::invalid_argument("experiment spec: missing 'kind'");
    s.kind = parse_kind(doc.at("kind").get<std::string>());
    s.params = doc.value("params", nlohmann::json::object());
    s.master_seed = doc.value("master_seed", 0ull);
    s.trials = doc.value("trials", 1l);
    s.output = doc.value("output", std::string());
    s.threads = doc.value("threads", 0);
    return s;
}

nlohmann::json ExperimentSpec::to_json() const {
    return {{"kind", kind_name(kind)}, {"params", params}, {"master_seed", master_seed},
            {"trials", trials},        {"output", output}, {"threads", threads}};
}

namespace {

struct SpecCheck {
    const nlohmann::json& p;
    std::vector<std::string> problems;

    void require_number(const char* key, double lo, double hi) {
        if (!p.contains(key)) {
            problems.push_back(std::string("missing key '") + key + "'");
        } else if (!p.at(key).is_number()) {
            problems.push_back(std::string("key '") + key + "' must be a number");
        } else {
            const double v = p.at(key).get<double>();
            if (v < lo || v > hi)
                problems.push_back(std::string("key '") + key + "' out of range");
        }
    }
    void require_int_array(const char* key) {
        if (!p.contains(key) || !p.at(key).is_array() || p.at(key).empty())
            problems.push_back(std::string("missing or empty array '") + key + "'");
    }
    void require_string(const char* key) {
        if (!p.contains(key) || !p.at(key).is_string())
            problems.push_back(std::string("missing key '") + key + "'");
    }
};

}  // namespace

void ExperimentSpec::validate() const {
    SpecCheck check{params, {}};
    if (trials < 1) check.problems.push_back("trials must be >= 1");

    switch (kind) {
        case ExperimentKind::Predict:
            check.require_string("quantity");
            break;
        case ExperimentKind::ChainScan:
            check.require_number("tau", 1e-12, 1e12);
            check.require_int_array("depths");
            break;
        case ExperimentKind::ChainTrain:
            check.require_string("method");
            check.require_number("depth", 1, 1e6);
            check.require_number("lr", 1e-300, 1e6);
            check.require_number("steps", 1, 1e9);
            break;
        case ExperimentKind::MlpScan:
            check.require_string("init");
            check.require_string("activation");
            check.require_int_array("depths");
            break;
        case ExperimentKind::MlpHessian:
            check.require_string("init");
            check.require_string("activation");
            check.require_number("depth", 1, 1e4);
            check.require_number("width", 1, 1e4);
            break;
        case ExperimentKind::ConvScan:
            check.require_string("init");
            check.require_string("spatial");
            check.require_int_array("depths");
            break;
        case ExperimentKind::Verify:
            break;
    }

    if (!check.problems.empty()) {
        std::string msg = "invalid experiment spec:";
        for (const auto& p : check.problems) msg += "\n  - " + p;
        throw std::invalid_argument(msg);
    }
}

// ---------------------------------------------------------------------------
// CSV / JSON emission
// ---------------------------------------------------------------------------

namespace {

std::uint64_t hash_text(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string row_to_csv(const Row& r) {
    std::ostringstream os;
    os << r.kind << ',' << r.observable << ',' << r.depth << ',' << r.width << ',' << r.init
       << ',' << r.activation << ',' << r.trial << ',' << r.sub_seed << ','
       << format_value(r.value);
    return os.str();
}

}  // namespace

void emit_csv(const std::vector<Row>& rows, const std::string& path) {
    if (rows.empty()) throw std::invalid_argument("emit_csv: no rows to write (" + path + ")");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("emit_csv: cannot open " + path);
    f << kCsvHeader << '\n';
    for (const auto& r : rows) f << row_to_csv(r) << '\n';
    if (!f) throw std::runtime_error("emit_csv: write failed for " + path);
}

void emit_json(const std::vector<Row>& rows, const std::string& path) {
    if (rows.empty()) throw std::invalid_argument("emit_json: no rows to write (" + path + ")");
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"kind", r.kind},
                       {"observable", r.observable},
                       {"depth", r.depth},
                       {"width", r.width},
                       {"init", r.init},
                       {"activation", r.activation},
                       {"trial", r.trial},
                       {"sub_seed", r.sub_seed},
                       {"value", r.value}});
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("emit_json: cannot open " + path);
    f << arr.dump(2) << '\n';
    if (!f) throw std::runtime_error("emit_json: write failed for " + path);
}

std::vector<Row> parse_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("parse_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != kCsvHeader)
        throw std::runtime_error("parse_csv: unexpected header in " + path);
    std::vector<Row> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw std::runtime_error("parse_csv: malformed row in " + path);
        Row r;
        r.kind = cells[0];
        r.observable = cells[1];
        r.depth = std::stoi(cells[2]);
        r.width = std::stoi(cells[3]);
        r.init = cells[4];
        r.activation = cells[5];
        r.trial = std::stol(cells[6]);
        r.sub_seed = std::stoull(cells[7]);
        r.value = std::strtod(cells[8].c_str(), nullptr);
        rows.push_back(std::move(r));
    }
    return rows;
}

void append_summaries(std::vector<Row>& rows, std::uint64_t master_seed) {
    struct Key {
        std::string observable;
        int depth, width;
        bool operator<(const Key& o) const {
            return std::tie(observable, depth, width) < std::tie(o.observable, o.depth, o.width);
        }
    };
    std::vector<Key> order;
    std::map<Key, std::vector<double>> groups;
    std::map<Key, Row> proto;
    for (const auto& r : rows) {
        if (r.trial < 0) continue;
        const Key k{r.observable, r.depth, r.width};
        auto [it, inserted] = groups.try_emplace(k);
        if (inserted) {
            order.push_back(k);
            proto[k] = r;
        }
        it->second.push_back(r.value);
    }
    for (const auto& k : order) {
        const auto& vals = groups[k];
        const StatSummary s = summarize(
            vals, Rng::derive_seed(master_seed, hash_text(k.observable) + k.depth));
        Row base = proto[k];
        base.trial = -1;
        base.sub_seed = 0;
        const auto push = [&](const char* suffix, double v) {
            Row r = base;
            r.observable = k.observable + suffix;
            r.value = v;
            rows.push_back(std::move(r));
        };
        push(":mean", s.mean);
        push(":median", s.median);
        push(":std", s.stddev);
        push(":ci95_low", s.ci95_low);
        push(":ci95_high", s.ci95_high);
        push(":n", static_cast<double>(s.n));
        push(":log_abs_median", median_log_abs(vals));
    }
}

// ---------------------------------------------------------------------------
// Experiment dispatch
// ---------------------------------------------------------------------------

namespace {

std::vector<Row> rows_from_observations(const std::vector<ScanObservation>& obs,
                                        const std::string& kind, const std::string& init,
                                        const std::string& activation) {
    std::vector<Row> rows;
    rows.reserve(obs.size());
    for (const auto& o : obs)
        rows.push_back({kind, o.observable, o.depth, o.width, init, activation, o.trial,
                        o.sub_seed, o.value});
    return rows;
}

std::vector<Row> run_chain_scan(const ExperimentSpec& spec) {
    const auto& p = spec.params;
    const double tau = p.at("tau").get<double>();
    const std::vector<int> depths = p.at("depths").get<std::vector<int>>();
    const bool with_hessian = p.value("with_hessian", true);
    const std::string init_text = "uniform:range=" + format_value(tau);

    struct Slot {
        std::vector<Row> rows;
    };
    std::vector<Slot> slots(depths.size() * static_cast<std::size_t>(spec.trials));
    parallel_for(static_cast<long>(slots.size()), resolve_threads(spec.threads), [&](long idx) {
        const int depth = depths[idx / spec.trials];
        const long trial = idx % spec.trials;
        const std::uint64_t sub = Rng::derive_seed(
            spec.master_seed,
            (static_cast<std::uint64_t>(depth) << 32) | static_cast<std::uint64_t>(trial));
        Rng rng(sub);

        ChainParams params;
        params.data = {{1.0, 1.0}};
        params.weights.resize(depth);
        for (auto& w : params.weights) w = rng.uniform_symmetric(tau);

        auto& rows = slots[idx].rows;
        const auto push = [&](const std::string& name, double v) {
            rows.push_back({"chain_scan", name, depth, 1, init_text, "linear", trial, sub, v});
        };

        push("forward_log_v", sample_forward(tau, depth, rng).log_value);
        push("loss", chain_loss(params));

        const auto g = chain_gradient(params);
        std::vector<double> abs_g(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) abs_g[i] = std::abs(g[i]);
        push("grad_abs_median", median_of(abs_g));
        push("grad_inf_norm", *std::max_element(abs_g.begin(), abs_g.end()));

        if (with_hessian) {
            const Eigen::MatrixXd h = chain_hessian(params);
            std::vector<double> diag, off;
            for (int i = 0; i < h.rows(); ++i)
                for (int j = 0; j < h.cols(); ++j)
                    (i == j ? diag : off).push_back(std::abs(h(i, j)));
            push("hess_diag_abs_median", median_of(diag));
            if (!off.empty()) push("hess_offdiag_abs_median", median_of(off));
        }
    });

    std::vector<Row> rows;
    for (auto& s : slots)
        for (auto& r : s.rows) rows.push_back(std::move(r));
    return rows;
}

std::vector<Row> run_chain_train(const ExperimentSpec& spec) {
    const auto& p = spec.params;
    OptimizerSpec opt;
    const std::string method = p.at("method").get<std::string>();
    if (method == "gd") opt.method = OptMethod::GD;
    else if (method == "perturbed_gd") opt.method = OptMethod::PerturbedGD;
    else if (method == "sgd") opt.method = OptMethod::SGD;
    else if (method == "rmsprop") opt.method = OptMethod::RMSprop;
    else if (method == "adam") opt.method = OptMethod::Adam;
    else throw std::invalid_argument("chain_train: unknown method '" + method + "'");
    opt.lr = p.at("lr").get<double>();
    opt.noise_std = p.value("noise_std", 0.0);
    opt.beta1 = p.value("beta1", 0.9);
    opt.beta2 = p.value("beta2", opt.method == OptMethod::Adam ? 0.999 : 0.9);
    opt.eps = p.value("eps", 1e-8);
    opt.decay = p.value("decay", std::string("none")) == "inv_sqrt" ? LrDecay::InvSqrt
                                                                    : LrDecay::None;

    const int depth = p.at("depth").get<int>();
    const int steps = p.at("steps").get<int>();
    const double init_range = p.value("init_range", 0.2);
    const double w0_constant = p.value("w0_constant", 0.0);  // 0: random init
    const double threshold = p.value("loss_threshold", 0.1);
    // Escape thresholds are relative to the initial loss unless requested
    // absolute; the initial plateau height varies with the initialization.
    const bool relative_threshold = p.value("threshold_mode", std::string("relative")) ==
                                    "relative";
    const std::string init_text =
        w0_constant != 0.0 ? "constant=" + format_value(w0_constant)
                           : "uniform:range=" + format_value(init_range);

    std::vector<std::array<double, 2>> data = {{1.0, 1.0}};
    if (p.contains("data")) {
        data.clear();
        for (const auto& pair : p.at("data"))
            data.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    }

    std::vector<std::vector<Row>> slots(spec.trials);
    parallel_for(spec.trials, resolve_threads(spec.threads), [&](long trial) {
        const std::uint64_t sub = Rng::derive_seed(spec.master_seed, trial);
        Rng rng(sub);
        ChainParams start;
        start.data = data;
        start.weights.resize(depth);
        for (auto& w : start.weights)
            w = w0_constant != 0.0 ? w0_constant : rng.uniform_symmetric(init_range);

        auto& rows = slots[trial];
        const auto push = [&](const std::string& name, double v) {
            rows.push_back({"chain_train", name, depth, 1, init_text, "linear", trial, sub, v});
        };

        try {
            const Trajectory traj = run_optimizer(start, opt, steps, rng);
            push("initial_loss", traj.points.front().loss);
            push("initial_grad_inf", traj.points.front().grad_inf_norm);
            push("final_loss", traj.points.back().loss);
            push("diverged", traj.diverged ? 1.0 : 0.0);
            const double cut =
                relative_threshold ? threshold * traj.points.front().loss : threshold;
            const auto esc = escape_time(traj, cut);
            push("escape_steps", esc ? static_cast<double>(*esc) : -1.0);
        } catch (const std::exception&) {
            // Partial failure: keep the run going, mark the row.
            push("error", std::numeric_limits<double>::quiet_NaN());
        }
    });

    std::vector<Row> rows;
    for (auto& s : slots)
        for (auto& r : s) rows.push_back(std::move(r));
    return rows;
}

std::vector<Row> run_mlp_scan(const ExperimentSpec& spec) {
    const auto& p = spec.params;
    NormScanConfig sc;
    sc.init = InitScheme::parse(p.at("init").get<std::string>());
    sc.activation = p.at("activation").get<std::string>() == "relu" ? Activation::ReLU
                                                                    : Activation::Linear;
    sc.depths = p.at("depths").get<std::vector<int>>();
    const auto rule = p.value("width_rule", nlohmann::json{{"kind", "linear"}, {"param", 1.0}});
    sc.width_rule = WidthRule::parse(rule.at("kind").get<std::string>(), rule.value("param", 1.0));
    sc.trials = static_cast<int>(spec.trials);
    sc.samples = p.value("samples", 16);
    sc.d_in = p.value("d_in", 0);
    sc.d_out = p.value("d_out", 0);
    sc.with_hessian = p.value("with_hessian", false);
    sc.dense_cap = p.value("dense_cap", 4096);
    sc.master_seed = spec.master_seed;
    sc.threads = spec.threads;
    return rows_from_observations(norm_scan(sc), "mlp_scan", sc.init.text(),
                                  activation_name(sc.activation));
}

std::vector<Row> run_mlp_hessian(const ExperimentSpec& spec) {
    const auto& p = spec.params;
    MlpConfig mc;
    mc.depth = p.at("depth").get<int>();
    mc.width = p.at("width").get<int>();
    mc.d_in = p.value("d_in", mc.width);
    mc.d_out = p.value("d_out", mc.width);
    mc.activation = p.at("activation").get<std::string>() == "relu" ? Activation::ReLU
                                                                    : Activation::Linear;
    mc.init = InitScheme::parse(p.at("init").get<std::string>());
    const int samples = p.value("samples", 16);
    const int cap = p.value("dense_cap", 4096);

    std::vector<std::vector<Row>> slots(spec.trials);
    parallel_for(spec.trials, resolve_threads(spec.threads), [&](long trial) {
        const std::uint64_t sub = Rng::derive_seed(spec.master_seed, trial);
        Rng rng(sub);
        auto& rows = slots[trial];
        const auto push = [&](const std::string& name, double v) {
            rows.push_back({"mlp_hessian", name, mc.depth, mc.width, mc.init.text(),
                            activation_name(mc.activation), trial, sub, v});
        };
        try {
            MlpState state = make_mlp(mc, rng);
            const Dataset ds = make_teacher_dataset(mc, samples, rng);
            const Eigen::MatrixXd h = mlp_hessian(state, ds.X, ds.Y, HessianMethod::Analytic, cap);
            const Eigen::VectorXd evals = eigenspectrum(h);
            push("eig_max", evals(0));
            push("eig_min", evals(evals.size() - 1));
            push("trace", h.trace());
            push("trace_abs_over_eig_max",
                 std::abs(h.trace()) / std::max(std::abs(evals(0)), 1e-300));
            push("hollowness", hollowness(h, mc.width * mc.width));
            push("gershgorin_ok", gershgorin_contains(h, evals) ? 1.0 : 0.0);
            const int d2 = mc.width * mc.width;
            double diag_fro = 0, off_fro = 0;
            for (int k = 0; k < mc.depth; ++k)
                for (int l = 0; l < mc.depth; ++l) {
                    const double f = h.block(k * d2, l * d2, d2, d2).norm();
                    if (k == l) diag_fro += f;
                    else off_fro += f;
                }
            push("hess_diag_block_fro_mean", diag_fro / mc.depth);
            if (mc.depth > 1)
                push("hess_offdiag_block_fro_mean",
                     off_fro / static_cast<double>(mc.depth * (mc.depth - 1)));
        } catch (const std::exception&) {
            push("error", std::numeric_limits<double>::quiet_NaN());
        }
    });

    std::vector<Row> rows;
    for (auto& s : slots)
        for (auto& r : s) rows.push_back(std::move(r));
    return rows;
}

std::vector<Row> run_conv_scan(const ExperimentSpec& spec) {
    const auto& p = spec.params;
    ConvScanConfig sc;
    sc.base.grid = p.at("spatial").get<std::string>() == "grid";
    sc.base.extent = p.value("extent", sc.base.grid ? 7 : 3);
    sc.base.channels = p.value("channels", 1);
    sc.base.kernel = p.value("kernel", 3);
    sc.base.padding = p.value("padding", std::string("circular")) == "zero" ? Padding::Zero
                                                                            : Padding::Circular;
    sc.base.activation = p.value("activation", std::string("linear")) == "relu"
                             ? Activation::ReLU
                             : Activation::Linear;
    sc.base.init = InitScheme::parse(p.at("init").get<std::string>());
    sc.depths = p.at("depths").get<std::vector<int>>();
    sc.channel_slope = p.value("channel_slope", 0.0);
    sc.trials = static_cast<int>(spec.trials);
    sc.samples = p.value("samples", 4);
    sc.fd_probe_entries = p.value("fd_probe_entries", 64);
    sc.input_file = p.value("input_file", std::string());
    sc.master_seed = spec.master_seed;
    sc.threads = spec.threads;
    return rows_from_observations(conv_depth_scan(sc), "conv_scan", sc.base.init.text(),
                                  activation_name(sc.base.activation));
}

void write_sidecar(const ExperimentSpec& spec, std::size_t row_count) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json meta = {
        {"spec", spec.to_json()},
        {"artifact_version", "0.1.0"},
        {"ci_method", "percentile bootstrap (1000 resamples) on the mean"},
        {"row_count", row_count},
        {"created_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
    };
    std::ofstream f(spec.output + ".meta.json");
    if (!f) throw std::runtime_error("cannot write sidecar for " + spec.output);
    f << meta.dump(2) << '\n';
}

}  // namespace

RunResult run(const ExperimentSpec& spec) {
    spec.validate();
    RunResult result;
    switch (spec.kind) {
        case ExperimentKind::Predict:
            throw std::invalid_argument("predict does not produce CSV; use predict_json()");
        case ExperimentKind::ChainScan: result.rows = run_chain_scan(spec); break;
        case ExperimentKind::ChainTrain: result.rows = run_chain_train(spec); break;
        case ExperimentKind::MlpScan: result.rows = run_mlp_scan(spec); break;
        case ExperimentKind::MlpHessian: result.rows = run_mlp_hessian(spec); break;
        case ExperimentKind::ConvScan: result.rows = run_conv_scan(spec); break;
        case ExperimentKind::Verify: {
            const auto criteria = run_all_criteria(spec.master_seed, resolve_threads(spec.threads));
            result.ok = true;
            for (const auto& c : criteria) {
                result.ok = result.ok && c.pass;
                result.rows.push_back({"verify", c.name, 0, 0, "", "", 0, spec.master_seed,
                                       c.pass ? 1.0 : 0.0});
            }
            break;
        }
    }
    if (spec.kind != ExperimentKind::Verify) append_summaries(result.rows, spec.master_seed);
    if (!spec.output.empty()) {
        emit_csv(result.rows, spec.output);
        write_sidecar(spec, result.rows.size());
    }
    return result;
}

nlohmann::json predict_json(const nlohmann::json& params) {
    const std::string quantity = params.at("quantity").get<std::string>();
    nlohmann::json out = {{"quantity", quantity}};

    if (quantity == "chain_moment") {
        out["value"] = chain_moment(params.at("tau"), params.at("depth"), params.at("order"));
    } else if (quantity == "chain_log_cdf") {
        out["value"] = chain_log_cdf(params.at("tau"), params.at("depth"), params.at("zeta"));
    } else if (quantity == "chain_median_bounds") {
        const auto [lo, hi] = chain_median_bounds(params.at("tau"), params.at("depth"));
        out["lower"] = lo;
        out["upper"] = hi;
        out["bisected_median"] = chain_median(params.at("tau"), params.at("depth"));
    } else if (quantity == "chain_derivative_rate") {
        const std::string kind = params.at("derivative").get<std::string>();
        DerivativeKind dk = kind == "hessian_diag"      ? DerivativeKind::HessianDiag
                            : kind == "hessian_offdiag" ? DerivativeKind::HessianOffdiag
                                                        : DerivativeKind::Gradient;
        out["value"] = chain_derivative_rate(params.at("tau"), params.at("depth"), dk);
    } else if (quantity == "q_matrix") {
        const Eigen::Matrix2d q =
            q_matrix(params.at("width"), params.at("kappa"), params.at("p"));
        out["value"] = {{q(0, 0), q(0, 1)}, {q(1, 0), q(1, 1)}};
    } else if (quantity == "forward_moments") {
        MomentState in;
        if (params.contains("input")) {
            in.m2 = params.at("input").at(0);
            in.m4_2 = params.at("input").at(1);
            in.m4_4 = params.at("input").at(2);
        }
        const auto log_state = forward_moments_log(
            params.at("width"), params.at("sigma2"), params.at("kappa"), params.at("p"),
            params.at("layers"), LogMomentState::from(in));
        const MomentState s = log_state.exp();
        out["m2"] = s.m2;
        out["m4_2"] = s.m4_2;
        out["m4_4"] = s.m4_4;
        out["log"] = {{"m2", log_state.m2.log_abs},
                      {"m4_2", log_state.m4_2.log_abs},
                      {"m4_4", log_state.m4_4.log_abs}};
    } else if (quantity == "min_width") {
        out["value"] = min_width_for_median(params.at("alpha"), params.at("depth"));
    } else if (quantity == "scaling") {
        const ScalingReport r =
            grad_hessian_scaling(params.at("width"), params.at("sigma2"), params.at("p"),
                                 params.at("depth"), params.value("prefactor", 1.0));
        out["grad_exponent"] = r.grad_exponent;
        out["offdiag_exponent"] = r.offdiag_exponent;
        out["diag_exponent"] = r.diag_exponent;
        out["eig_bound"] = r.eig_bound;
    } else if (quantity == "flow_bound") {
        const FlowBound f = blowup(params.at("w0"), params.at("depth"), params.at("y"));
        out["t_e"] = f.t_e;
        out["t_star"] = f.t_star;
        if (params.contains("t")) out["value"] = f(params.at("t"));
    } else {
        throw std::invalid_argument("predict: unknown quantity '" + quantity + "'");
    }
    return out;
}

}  // namespace vanishlab
