// gapsandwich: command-line front end.
//
//   gapsandwich analytic --dist gamma:a=2,theta=1 --k 1,4 --n 100000
//   gapsandwich verify [--quick]
//   gapsandwich vae train|train-cnet|eval ...
//
// Exit codes: 0 ok, 1 verify failure, 2 bad flags or specs, 3 numeric or I/O
// failure, 4 missing or corrupt checkpoint, 5 training divergence.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gapsandwich/analytic_dists.hpp"
#include "gapsandwich/csv.hpp"
#include "gapsandwich/error.hpp"
#include "gapsandwich/mc_harness.hpp"
#include "gapsandwich/vae_toy.hpp"
#include "gapsandwich/verify.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace gapsandwich;
using nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kNumeric = 3, kCheckpoint = 4, kDivergence = 5 };

int exit_code(const Error& e) {
    switch (e.code()) {
    case ErrorCode::ParseError: return kUsage;
    case ErrorCode::CheckpointError: return kCheckpoint;
    case ErrorCode::DivergenceDetected: return kDivergence;
    default: return kNumeric;
    }
}

/// --threads 0 means all hardware threads; GAPSANDWICH_THREADS, when set to a
/// positive number, caps whatever was asked for.
unsigned effective_threads(unsigned requested) {
    unsigned threads = resolve_threads(requested);
    if (const char* env = std::getenv("GAPSANDWICH_THREADS")) {
        unsigned cap = 0;
        const std::string_view text(env);
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw Error(ErrorCode::ParseError, "GAPSANDWICH_THREADS='" + std::string(text) + "' is not an integer");
        }
        if (cap > 0) threads = std::min(threads, cap);
    }
    return threads;
}

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string join(const std::vector<std::size_t>& ks) {
    std::string out;
    for (std::size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + std::to_string(ks[i]);
    return out;
}

fs::path sibling(const fs::path& csv, std::string_view suffix) {
    return csv.parent_path() / (csv.stem().string() + std::string(suffix));
}

void write_gnuplot(const fs::path& script, const fs::path& csv, std::string_view title) {
    std::ostringstream gp;
    gp << "# Plots lower_mean and upper_mean against k from " << csv.filename().string() << "\n"
       << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set logscale x 2\n"
       << "set xlabel 'k'\n"
       << "set ylabel 'log evidence bound'\n"
       << "set title '" << title << "'\n"
       << "plot '" << csv.string() << "' using 3:7 with points title 'lower', \\\n"
       << "     '' using 3:9 with points title 'upper'\n";
    cli::write_bytes(script, gp.str());
}

struct Common {
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

void add_config(CLI::App& cmd) {
    cmd.set_config("--config", "", "key=value file; flags given on the command line win");
}

// CLI11 only reads the top-level app's config file, so each subcommand loads
// its own here. Keys fill options not already given on the command line.
void apply_config(CLI::App& cmd) {
    const CLI::Option* cfg = cmd.get_config_ptr();
    if (cfg == nullptr || cfg->count() == 0) return;
    const auto path = cfg->as<std::string>();
    for (const auto& item : CLI::ConfigTOML().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        CLI::Option* op = item.parents.empty() ? cmd.get_option_no_throw("--" + item.name) : nullptr;
        if (op == nullptr || op == cfg || !op->get_configurable()) {
            throw CLI::ConfigError("unknown key '" + item.fullname() + "' in " + path);
        }
        if (op->count() > 0) continue;
        op->add_result(item.inputs);
        op->run_callback();
    }
}

// ---------------------------------------------------------------------------
// analytic

struct AnalyticArgs {
    std::string dist;
    std::vector<std::size_t> k{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
    std::size_t n = 10000;
    std::size_t replications = 10;
    std::string c_policy = "zero";
    Common common;
    fs::path out = "analytic.csv";
    std::optional<fs::path> gnuplot;
};

int run_analytic(const AnalyticArgs& a, const std::vector<std::string>& argv) {
    const Stopwatch clock;
    const AnalyticDist d = parse_dist(a.dist);
    SweepConfig cfg;
    cfg.k_values = a.k;
    cfg.n_pairs = a.n;
    cfg.replications = a.replications;
    cfg.base_seed = a.common.seed;
    cfg.c_policy = parse_c_policy(a.c_policy);
    const unsigned threads = effective_threads(a.common.threads);

    const SweepResult res = run_sweep(analytic_source(d), cfg, threads);
    std::ostringstream body;
    write_sweep_csv(body, res, to_string(d), "analytic");
    cli::write_bytes(a.out, body.str());

    cli::Manifest m{"analytic", argv};
    m.config = {{"dist", to_string(d)},        {"k", cfg.k_values},           {"n_pairs", cfg.n_pairs},
                {"replications", cfg.replications}, {"c_policy", to_string(cfg.c_policy)}, {"threads", threads}};
    m.seed = cfg.base_seed;
    m.outputs = {a.out};
    if (a.gnuplot) {
        write_gnuplot(*a.gnuplot, a.out, to_string(d));
        m.outputs.push_back(*a.gnuplot);
    }
    m.wall_time_seconds = clock.seconds();
    cli::write_manifests(m);

    const auto& last = res.aggregates.back();
    std::cout << "analytic " << to_string(d) << ": " << res.rows.size() << " rows, k=" << join(cfg.k_values)
              << ", mean width at k=" << last.k << " " << csv::number(last.width_mean) << " -> " << a.out.string()
              << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
    Common common;
    bool quick = false;
    fs::path out = "verify.csv";
    std::string inject_fault;
};

int run_verify(const VerifyArgs& a, const std::vector<std::string>& argv) {
    const Stopwatch clock;
    if (!a.inject_fault.empty() && a.inject_fault != "c0-identity") {
        throw Error(ErrorCode::ParseError, "unknown fault '" + a.inject_fault + "'");
    }
    verify::Options opt;
    opt.seed = a.common.seed;
    opt.quick = a.quick;
    opt.threads = effective_threads(a.common.threads);
    opt.inject_fault = a.inject_fault;

    const auto results = verify::run(opt);
    std::size_t passed = 0;
    std::vector<std::string> failed;
    for (const auto& r : results) {
        std::cerr << (r.passed ? "PASS " : "FAIL ") << r.name << " measured=" << csv::number(r.measured)
                  << " tolerance=" << csv::number(r.tolerance) << " slack=" << csv::number(r.slack()) << '\n';
        if (r.passed) {
            ++passed;
        } else {
            failed.push_back(r.name);
        }
    }
    std::ostringstream body;
    verify::write_csv(body, results);
    cli::write_bytes(a.out, body.str());

    cli::Manifest m{"verify", argv};
    m.config = {{"quick", a.quick}, {"threads", opt.threads}};
    if (!a.inject_fault.empty()) m.config["inject_fault"] = a.inject_fault;
    m.seed = opt.seed;
    m.outputs = {a.out};
    m.wall_time_seconds = clock.seconds();
    cli::write_manifests(m);

    std::cout << "verify: " << passed << "/" << results.size() << " properties passed";
    if (!failed.empty()) {
        std::cout << ", failed:";
        for (const auto& f : failed) std::cout << ' ' << f;
    }
    std::cout << " -> " << a.out.string() << '\n';
    return failed.empty() ? kOk : kVerifyFailed;
}

// ---------------------------------------------------------------------------
// vae

// Streams derived from --seed, so train, train-cnet and eval with the same
// seed see the same training data while eval draws held-out points. Eval at
// a given k uses noise stream derive_seed(derive_seed(seed, kEvalNoise), k).
enum Stream : std::uint64_t { kTrainData = 1, kInit = 2, kSgd = 3, kEvalData = 4, kEvalNoise = 5, kCNetInit = 6 };

struct DataArgs {
    std::string spec = "laplace:loc=0,b=0.2";
    std::size_t n = 10000;
};

std::vector<double> draw_data(const DataArgs& d, std::uint64_t seed, Stream stream) {
    if (d.n == 0) throw Error(ErrorCode::ParseError, "'n-data' must be at least 1");
    return sample(parse_dist(d.spec), d.n, derive_seed(seed, stream));
}

vae::Objective parse_objective(std::string_view text) {
    if (text == "elbo") return vae::Objective::elbo_objective();
    if (text.starts_with("iwae:")) {
        const auto digits = text.substr(5);
        std::size_t k = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && k > 0) return vae::Objective::iwae(k);
    }
    throw Error(ErrorCode::ParseError, "'objective' must be elbo or iwae:<k>, got '" + std::string(text) + "'");
}

std::string objective_name(const vae::Objective& o) {
    return o.kind == vae::Objective::Kind::Elbo ? "elbo" : "iwae:" + std::to_string(o.k);
}

std::string loss_csv(const std::vector<double>& history) {
    std::ostringstream out;
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        csv::write_row(out, {csv::number(std::uint64_t{e}), csv::number(history[e])});
    }
    return out.str();
}

struct TrainArgs {
    DataArgs data;
    std::string objective = "elbo";
    std::size_t epochs = 2000;
    std::size_t batch = 1000;
    double lr = 1e-2;
    double decoder_var = vae::kDefaultDecoderVar;
    Common common;
    fs::path model = "vae.bin";
    fs::path out = "train_loss.csv";
};

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    const Stopwatch clock;
    const auto data = draw_data(a.data, a.common.seed, kTrainData);
    vae::TrainConfig cfg;
    cfg.objective = parse_objective(a.objective);
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lr = a.lr;
    cfg.seed = derive_seed(a.common.seed, kSgd);
    const auto init = vae::ToyVae::init(derive_seed(a.common.seed, kInit), a.decoder_var);

    const auto res = vae::train(init, data, cfg);
    vae::save(res.model, a.model);
    cli::write_bytes(a.out, loss_csv(res.loss_history));

    cli::Manifest m{"vae train", argv};
    m.config = {{"data", to_string(parse_dist(a.data.spec))}, {"n_data", a.data.n}, {"objective", objective_name(cfg.objective)},
                {"epochs", cfg.epochs}, {"batch", cfg.batch}, {"lr", cfg.lr}, {"decoder_var", a.decoder_var}};
    m.seed = a.common.seed;
    m.outputs = {a.out, a.model};
    m.wall_time_seconds = clock.seconds();
    cli::write_manifests(m);

    const double final_loss = res.loss_history.empty() ? kInf : res.loss_history.back();
    std::cout << "vae train: " << cfg.epochs << " epochs, " << objective_name(cfg.objective) << ", final loss "
              << csv::number(final_loss) << " -> " << a.model.string() << '\n';
    return kOk;
}

struct TrainCNetArgs {
    DataArgs data;
    std::size_t k = 64;
    std::size_t epochs = 100;
    std::size_t batch = 1000;
    double lr = 0.05;
    Common common;
    fs::path model = "vae.bin";
    fs::path cnet = "cnet.bin";
    fs::path out = "cnet_loss.csv";
};

int run_train_cnet(const TrainCNetArgs& a, const std::vector<std::string>& argv) {
    const Stopwatch clock;
    const auto model = vae::load_vae(a.model);
    const auto data = draw_data(a.data, a.common.seed, kTrainData);
    vae::CNetConfig cfg;
    cfg.k = a.k;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lr = a.lr;
    cfg.seed = derive_seed(a.common.seed, kSgd);
    cfg.threads = effective_threads(a.common.threads);

    const auto res = vae::train_cnet(vae::CNet::init(derive_seed(a.common.seed, kCNetInit)), model, data, cfg);
    vae::save(res.cnet, a.cnet);
    cli::write_bytes(a.out, loss_csv(res.loss_history));

    cli::Manifest m{"vae train-cnet", argv};
    m.config = {{"model", a.model.string()}, {"data", to_string(parse_dist(a.data.spec))}, {"n_data", a.data.n},
                {"k", cfg.k}, {"epochs", cfg.epochs}, {"batch", cfg.batch}, {"lr", cfg.lr}, {"threads", cfg.threads}};
    m.seed = a.common.seed;
    m.outputs = {a.out, a.cnet};
    m.wall_time_seconds = clock.seconds();
    cli::write_manifests(m);

    const double final_loss = res.loss_history.empty() ? kInf : res.loss_history.back();
    std::cout << "vae train-cnet: " << cfg.epochs << " epochs at k=" << cfg.k << ", final gap " << csv::number(final_loss)
              << " -> " << a.cnet.string() << '\n';
    return kOk;
}

struct EvalArgs {
    DataArgs data;
    std::size_t k = 64;
    std::vector<std::size_t> k_sweep;
    std::optional<fs::path> cnet;
    std::string c = "fixed:0";
    Common common;
    fs::path model = "vae.bin";
    fs::path out = "eval.csv";
    std::optional<fs::path> gnuplot;
};

vae::CSource c_source(const EvalArgs& a, std::string& label) {
    if (a.cnet) {
        label = "cnet:" + a.cnet->string();
        return vae::load_cnet(*a.cnet);
    }
    if (a.c == "zero") {
        label = "fixed:0";
        return vae::FixedC{0.0};
    }
    if (a.c.starts_with("fixed:")) {
        const double v = detail::parse_decimal("c", std::string_view(a.c).substr(6));
        label = "fixed:" + csv::number(v);
        return vae::FixedC{v};
    }
    throw Error(ErrorCode::ParseError, "'c' must be zero or fixed:<value>, got '" + a.c + "'");
}

std::vector<std::string> sweep_fields(const std::string& dataset, const vae::EvalResult& r, std::size_t k,
                                      std::uint64_t seed) {
    RunningStats ratio, c, mid;
    for (const auto& rec : r.records) {
        std::size_t sat = 0;
        ratio.push(clamped_exp(rec.log_ratio, sat));
        c.push(rec.c);
        mid.push(rec.s + 0.5 * rec.log_ratio);
    }
    return {dataset,
            "vae",
            csv::number(std::uint64_t{k}),
            "0",
            csv::number(std::uint64_t{r.records.size()}),
            csv::number(seed),
            csv::number(r.lower.mean),
            csv::number(r.lower.std_error),
            csv::number(r.upper.mean),
            csv::number(r.upper.std_error),
            csv::number(ratio.mean()),
            csv::number(c.mean()),
            csv::number(mid.mean()),
            csv::number(std::uint64_t{r.saturated})};
}

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    const Stopwatch clock;
    const auto model = vae::load_vae(a.model);
    std::string c_label;
    const auto cs = c_source(a, c_label);
    const auto data = draw_data(a.data, a.common.seed, kEvalData);
    const std::string dataset = to_string(parse_dist(a.data.spec));
    const unsigned threads = effective_threads(a.common.threads);
    const std::uint64_t noise = derive_seed(a.common.seed, kEvalNoise);

    const auto res = vae::evaluate(model, cs, data, a.k, derive_seed(noise, a.k), threads);
    std::ostringstream body;
    body << "x,s,S,c,k\n";
    RunningStats c_mean;
    for (const auto& r : res.records) {
        csv::write_row(body, {csv::number(r.x), csv::number(r.s), csv::number(r.S), csv::number(r.c),
                              csv::number(std::uint64_t{r.k})});
        c_mean.push(r.c);
    }
    csv::write_row(body, {"mean", csv::number(res.lower.mean), csv::number(res.upper.mean), csv::number(c_mean.mean()),
                          csv::number(std::uint64_t{a.k})});
    cli::write_bytes(a.out, body.str());

    cli::Manifest m{"vae eval", argv};
    m.config = {{"model", a.model.string()}, {"c", c_label},          {"data", dataset},
                {"n_data", a.data.n},       {"k", a.k},               {"k_sweep", a.k_sweep},
                {"threads", threads}};
    m.seed = a.common.seed;
    m.outputs = {a.out};

    if (!a.k_sweep.empty()) {
        SweepConfig check;
        check.k_values = a.k_sweep;
        check.validate();
        std::ostringstream sweep;
        sweep << kSweepCsvHeader << '\n';
        for (std::size_t k : a.k_sweep) {
            const auto r = vae::evaluate(model, cs, data, k, derive_seed(noise, k), threads);
            csv::write_row(sweep, sweep_fields(dataset, r, k, derive_seed(noise, k)));
        }
        const fs::path sweep_path = sibling(a.out, "_ksweep.csv");
        cli::write_bytes(sweep_path, sweep.str());
        m.outputs.push_back(sweep_path);
        if (a.gnuplot) {
            write_gnuplot(*a.gnuplot, sweep_path, dataset);
            m.outputs.push_back(*a.gnuplot);
        }
    }
    m.wall_time_seconds = clock.seconds();
    cli::write_manifests(m);

    std::cout << "vae eval k=" << a.k << ": [" << csv::number(res.lower.mean) << ", " << csv::number(res.upper.mean)
              << "] width " << csv::number(res.upper.mean - res.lower.mean) << ", C " << c_label << ", "
              << res.records.size() << " points -> " << a.out.string() << '\n';
    return kOk;
}

void add_common(CLI::App& cmd, Common& c) {
    cmd.add_option("--seed", c.seed, "base seed")->capture_default_str();
    cmd.add_option("--threads", c.threads, "worker threads, 0 = all (capped by GAPSANDWICH_THREADS)")
        ->capture_default_str();
}

void add_data(CLI::App& cmd, DataArgs& d) {
    cmd.add_option("--data", d.spec, "data distribution spec")->capture_default_str();
    cmd.add_option("--n-data", d.n, "number of data points")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Evidence sandwich bounds: analytic sweeps, self-checks and a toy VAE pipeline", "gapsandwich"};
    app.set_version_flag("--version", std::string(GAPSANDWICH_VERSION));
    app.require_subcommand(1);

    AnalyticArgs an;
    auto* analytic = app.add_subcommand("analytic", "bound curves over k for an analytic distribution");
    add_config(*analytic);
    analytic->add_option("--dist", an.dist, "e.g. gamma:a=2,theta=1 (required)");
    analytic->add_option("--k", an.k, "comma-separated k values")->delimiter(',')->capture_default_str();
    analytic->add_option("--n", an.n, "pairs per estimate")->capture_default_str();
    analytic->add_option("--replications", an.replications, "independent seeds per k")->capture_default_str();
    analytic->add_option("--c-policy", an.c_policy, "zero | pilot-optimal | fixed:<c>")->capture_default_str();
    analytic->add_option("--out", an.out, "sweep CSV path")->capture_default_str();
    analytic->add_option("--emit-gnuplot", an.gnuplot, "also write a gnuplot script here");
    add_common(*analytic, an.common);

    VerifyArgs ve;
    auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
    add_config(*verify_cmd);
    verify_cmd->add_flag("--quick", ve.quick, "10x fewer samples");
    verify_cmd->add_option("--out", ve.out, "results CSV path")->capture_default_str();
    verify_cmd->add_option("--inject-fault", ve.inject_fault)->group("");
    add_common(*verify_cmd, ve.common);

    auto* vae_cmd = app.add_subcommand("vae", "toy VAE pipeline");
    vae_cmd->require_subcommand(1);

    TrainArgs tr;
    auto* train = vae_cmd->add_subcommand("train", "fit the VAE by SGD");
    add_config(*train);
    add_data(*train, tr.data);
    train->add_option("--objective", tr.objective, "elbo | iwae:<k>")->capture_default_str();
    train->add_option("--epochs", tr.epochs)->capture_default_str();
    train->add_option("--batch", tr.batch)->capture_default_str();
    train->add_option("--lr", tr.lr)->capture_default_str();
    train->add_option("--decoder-var", tr.decoder_var, "fixed decoder variance")->capture_default_str();
    train->add_option("--model", tr.model, "checkpoint to write")->capture_default_str();
    train->add_option("--out", tr.out, "loss CSV path")->capture_default_str();
    add_common(*train, tr.common);

    TrainCNetArgs tc;
    auto* train_cnet = vae_cmd->add_subcommand("train-cnet", "fit the C_x network for a trained VAE");
    add_config(*train_cnet);
    add_data(*train_cnet, tc.data);
    train_cnet->add_option("--k", tc.k, "draws per ratio estimate")->capture_default_str();
    train_cnet->add_option("--epochs", tc.epochs)->capture_default_str();
    train_cnet->add_option("--batch", tc.batch)->capture_default_str();
    train_cnet->add_option("--lr", tc.lr)->capture_default_str();
    train_cnet->add_option("--model", tc.model, "trained VAE checkpoint")->capture_default_str();
    train_cnet->add_option("--cnet", tc.cnet, "checkpoint to write")->capture_default_str();
    train_cnet->add_option("--out", tc.out, "loss CSV path")->capture_default_str();
    add_common(*train_cnet, tc.common);

    EvalArgs ev;
    auto* eval = vae_cmd->add_subcommand("eval", "evidence bounds s_i, S_i on held-out data");
    add_config(*eval);
    add_data(*eval, ev.data);
    eval->add_option("--k", ev.k, "draws per bound")->capture_default_str();
    eval->add_option("--k-sweep", ev.k_sweep, "also write a sweep CSV over these k")->delimiter(',');
    auto* cnet_opt = eval->add_option("--cnet", ev.cnet, "C_x network checkpoint");
    eval->add_option("--c", ev.c, "zero | fixed:<c>, used without --cnet")->capture_default_str()->excludes(cnet_opt);
    eval->add_option("--model", ev.model, "trained VAE checkpoint")->capture_default_str();
    eval->add_option("--out", ev.out, "records CSV path")->capture_default_str();
    eval->add_option("--emit-gnuplot", ev.gnuplot, "gnuplot script for the k-sweep");
    add_common(*eval, ev.common);

    try {
        app.parse(argc, argv);
        for (auto* cmd : {analytic, verify_cmd, train, train_cnet, eval}) {
            if (cmd->parsed()) apply_config(*cmd);
        }
        if (analytic->parsed() && an.dist.empty()) throw CLI::RequiredError("--dist");
        if (eval->parsed() && cnet_opt->count() > 0 && eval->get_option("--c")->count() > 0) {
            throw CLI::ExcludesError("--cnet", "--c");
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (analytic->parsed()) return run_analytic(an, args);
        if (verify_cmd->parsed()) return run_verify(ve, args);
        if (train->parsed()) return run_train(tr, args);
        if (train_cnet->parsed()) return run_train_cnet(tc, args);
        if (eval->parsed()) return run_eval(ev, args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
    return kUsage;
}
