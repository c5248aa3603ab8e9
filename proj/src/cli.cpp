#include "recat/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "recat/binary_io.hpp"
#include "recat/checkpoint.hpp"
#include "recat/config.hpp"
#include "recat/error.hpp"
#include "recat/evalmetrics.hpp"
#include "recat/png.hpp"

namespace recat::cli {

namespace {

namespace fs = std::filesystem;

enum class LogLevel { error, info, debug };

LogLevel log_level() {
    const char* env = std::getenv("RECAT_LOG");
    const std::string v = env ? env : "info";
    if (v == "error") return LogLevel::error;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
}

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int threads = 1;
    std::string data_path;
    std::string checkpoint_path;
    std::string resume_path;
    std::string mode = "paired";
    std::size_t count = 4;
    std::string omegas = "1.0,1.5,2.5,5.0,7.5";
    std::string variants;
};

class Runner {
public:
    Runner(Options o, std::ostream& out, std::ostream& err) : o_(std::move(o)), out_(out), err_(err), level_(log_level()) {}

    void gen_data() {
        const RunConfig cfg = resolve_config(nullptr);
        prepare_out(cfg);
        const DatasetSplit split = gen_dataset(cfg.data_seed, cfg.n_train, cfg.n_test, cfg.data_params());
        save_dataset(split, cfg.n_patterns, path("dataset.rcds"));
        info("wrote " + path("dataset.rcds") + " (" + std::to_string(split.train.size()) + " train, " +
             std::to_string(split.test_paired.size()) + " paired, " + std::to_string(split.test_unpaired.size()) +
             " unpaired)");
    }

    void train_cmd() {
        std::optional<Checkpoint> resume;
        if (!o_.resume_path.empty()) resume = load_checkpoint(o_.resume_path);
        const RunConfig cfg = resolve_config(resume ? &resume->config : nullptr);
        prepare_out(cfg);
        const DatasetSplit split = dataset(cfg);
        const NoiseSchedule s = cfg.schedule();

        TinyUNet model(resume ? resume->params : TinyUNetParams::init(cfg.model, cfg.train.seed));
        AdamWState state = resume ? resume->optimizer : AdamWState::zeros_like(model.params().tensors);
        std::ofstream log(path("metrics.jsonl"), resume ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("cannot open " + path("metrics.jsonl"));

        train(model, state, split.train, cfg.train, s, cfg.train.steps, o_.threads, [&](const StepReport& r) {
            nlohmann::json j = {{"step", r.step},
                                {"loss", r.loss},
                                {"person_mse", r.person_mse},
                                {"omega_t_mean", r.omega_t_mean},
                                {"grad_norm", r.grad_norm}};
            log << j.dump() << '\n';
            if (level_ == LogLevel::debug || (level_ == LogLevel::info && r.step % 100 == 0))
                err_ << "step " << r.step << " loss " << r.loss << '\n';
            if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0)
                save_checkpoint(model.params(), state, cfg, path("checkpoint_step" + std::to_string(r.step) + ".rcvt"));
        });
        save_checkpoint(model.params(), state, cfg, path("checkpoint.rcvt"));
        info("wrote " + path("checkpoint.rcvt") + " at step " + std::to_string(state.step));
    }

    void sample_cmd() {
        const Checkpoint ck = require_checkpoint();
        const RunConfig cfg = resolve_config(&ck.config);
        prepare_out(cfg);
        const DatasetSplit split = dataset(cfg);
        const TinyUNet model(ck.params);
        const EvalMode mode = parse_eval_mode(o_.mode);
        const auto outputs = generate(model, split, mode, cfg.sampler, cfg.schedule(), o_.threads);
        const std::size_t n = std::min(o_.count, outputs.size());

        std::ostringstream grids;
        bin::put_u64(grids, n);
        std::vector<std::vector<LatentGrid>> rows;
        for (std::size_t i = 0; i < n; ++i) {
            write_grid(grids, outputs[i]);
            const ToyScene& person = mode == EvalMode::paired ? split.test_paired[i] : split.test_unpaired[i].person;
            const LatentGrid& garment = mode == EvalMode::paired ? person.garment : split.test_unpaired[i].garment;
            rows.push_back({person.person_masked, garment, outputs[i], person.person_full});
        }
        bin::write_file(path("samples.lgrd"), grids.str());
        write_png(path("samples.png"), tile_grids(rows));
        info("wrote " + path("samples.lgrd") + " and " + path("samples.png"));
    }

    void eval_cmd() {
        const Checkpoint ck = require_checkpoint();
        const RunConfig cfg = resolve_config(&ck.config);
        prepare_out(cfg);
        const DatasetSplit split = dataset(cfg);
        const TinyUNet model(ck.params);
        std::vector<SweepRow> rows;
        for (EvalMode m : {EvalMode::paired, EvalMode::unpaired})
            rows.push_back({cfg.sampler.guidance.variant, cfg.sampler.guidance.omega,
                            evaluate(model, split, m, cfg.sampler, cfg.schedule(), cfg.embedding(), o_.threads)});
        std::ostringstream csv;
        write_metrics_csv(csv, rows);
        bin::write_file(path("metrics.csv"), csv.str());
        out_ << csv.str();
    }

    void sweep_cmd() {
        const Checkpoint ck = require_checkpoint();
        const RunConfig cfg = resolve_config(&ck.config);
        prepare_out(cfg);
        const DatasetSplit split = dataset(cfg);
        const TinyUNet model(ck.params);
        std::vector<double> omegas;
        for (const auto& tok : split_list(o_.omegas)) {
            try {
                omegas.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ValidationError("--omegas", "not a number: '" + tok + "'");
            }
        }
        std::vector<ConditioningVariant> variants;
        if (o_.variants.empty())
            variants.push_back(cfg.sampler.guidance.variant);
        else
            for (const auto& tok : split_list(o_.variants)) variants.push_back(parse_variant(tok));
        std::vector<EvalMode> modes;
        if (o_.mode == "both")
            modes = {EvalMode::paired, EvalMode::unpaired};
        else
            modes = {parse_eval_mode(o_.mode)};
        const auto rows =
            sweep_guidance(model, split, omegas, variants, modes, cfg.sampler, cfg.schedule(), cfg.embedding(), o_.threads);
        std::ostringstream csv;
        write_metrics_csv(csv, rows);
        bin::write_file(path("sweep.csv"), csv.str());
        std::vector<LineSeries> series;
        for (auto v : variants)
            for (auto m : modes) {
                LineSeries ls{to_string(v) + (modes.size() > 1 ? " " + to_string(m) : std::string()), {}, {}};
                for (const auto& r : rows)
                    if (r.variant == v && r.report.mode == m) {
                        ls.x.push_back(r.omega);
                        ls.y.push_back(r.report.fid_g);
                    }
                series.push_back(ls);
            }
        write_png(path("sweep.png"), line_chart(series, "omega", "FID_g"));
        out_ << csv.str();
    }

    void complexity_cmd() {
        const RunConfig cfg = resolve_config(nullptr);
        const Complexity c = count_params_flops(TinyUNetParams::zeros(cfg.model), cfg.input_spec());
        char line[128];
        out_ << "model: TinyUNet F=" << cfg.model.features << " C=" << cfg.model.latent_channels << " input "
             << cfg.input_spec().in_channels() << "x" << 2 * cfg.height << "x" << cfg.width << '\n';
        out_ << "params: " << c.param_count << '\n';
        out_ << "flops_per_image: " << c.flops_per_image << '\n';
        std::snprintf(line, sizeof line, "Params (M): %.6f\nGFLOPs: %.6f\n", static_cast<double>(c.param_count) / 1e6,
                      static_cast<double>(c.flops_per_image) / 1e9);
        out_ << line;
    }

private:
    RunConfig resolve_config(const RunConfig* fallback) {
        RunConfig cfg = !o_.config_path.empty() ? load_config(o_.config_path) : fallback ? *fallback : parse_config("{}");
        if (o_.seed) {
            cfg.train.seed = *o_.seed;
            cfg.sampler.seed = *o_.seed;
        }
        if (o_.threads < 1) throw ValidationError("--threads", "must be >= 1");
        cfg.validate();
        return cfg;
    }

    void prepare_out(const RunConfig& cfg) {
        std::error_code ec;
        fs::create_directories(o_.out_dir, ec);
        if (ec) throw IoError("cannot create output directory '" + o_.out_dir + "': " + ec.message());
        bin::write_file(path("resolved_config.json"), config_to_json(cfg));
    }

    DatasetSplit dataset(const RunConfig& cfg) const {
        if (o_.data_path.empty()) return gen_dataset(cfg.data_seed, cfg.n_train, cfg.n_test, cfg.data_params());
        DatasetSplit split = load_dataset(o_.data_path);
        const auto p = cfg.data_params();
        const auto check = [&](const LatentGrid& g) {
            if (g.channels() != p.channels || g.height() != p.height || g.width() != p.width)
                throw ShapeMismatch("dataset grids do not match model.C/H/W of the config");
        };
        for (const auto& s : split.train) check(s.person_full);
        for (const auto& s : split.test_paired) check(s.person_full);
        for (const auto& u : split.test_unpaired) check(u.person.person_full);
        return split;
    }

    Checkpoint require_checkpoint() const {
        if (o_.checkpoint_path.empty()) throw ValidationError("--checkpoint", "required for this command");
        return load_checkpoint(o_.checkpoint_path);
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        for (std::string tok; std::getline(ss, tok, ',');)
            if (!tok.empty()) out.push_back(tok);
        return out;
    }

    std::string path(const std::string& name) const { return (fs::path(o_.out_dir) / name).string(); }

    void info(const std::string& msg) {
        if (level_ != LogLevel::error) err_ << msg << '\n';
    }

    Options o_;
    std::ostream& out_;
    std::ostream& err_;
    LogLevel level_;
};

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::Validation: return 3;
    case ErrorKind::Io: return 4;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::IndexOutOfRange:
    case ErrorKind::NonBinaryMask:
    case ErrorKind::StaleTape:
    case ErrorKind::TooSmall: return 5;
    case ErrorKind::Format:
    case ErrorKind::CrcMismatch: return 6;
    default: return 1;
    }
}

const char* error_class(ErrorKind k) {
    switch (exit_code(k)) {
    case 3: return "config";
    case 4: return "io";
    case 5: return "shape";
    case 6: return "format";
    default: return "error";
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"recat: toy latent-diffusion virtual try-on"};
    app.require_subcommand(1);
    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration");
        sub->add_option("--seed", o.seed, "overrides train.seed and sampler.seed");
        sub->add_option("--out", o.out_dir, "output directory");
        sub->add_option("--threads", o.threads, "worker thread cap");
    };
    auto* gen = app.add_subcommand("gen-data", "generate the toy dataset");
    auto* tr = app.add_subcommand("train", "train the denoiser");
    auto* sa = app.add_subcommand("sample", "sample try-on results");
    auto* ev = app.add_subcommand("eval", "compute SSIM / FID_g / KID_p");
    auto* sw = app.add_subcommand("sweep", "guidance-scale sweep");
    auto* cx = app.add_subcommand("complexity", "parameter and FLOP count");
    for (auto* sub : {gen, tr, sa, ev, sw, cx}) common(sub);
    for (auto* sub : {tr, sa, ev, sw}) sub->add_option("--data", o.data_path, "dataset file (default: generate)");
    for (auto* sub : {sa, ev, sw}) sub->add_option("--checkpoint", o.checkpoint_path, "checkpoint file");
    tr->add_option("--resume", o.resume_path, "checkpoint to resume from");
    sa->add_option("--mode", o.mode, "paired or unpaired");
    sa->add_option("--count", o.count, "number of samples to emit");
    sw->add_option("--mode", o.mode, "paired, unpaired or both");
    sw->add_option("--omegas", o.omegas, "comma-separated guidance scales");
    sw->add_option("--variants", o.variants, "comma-separated: catvton, recatvton");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << '\n' << app.help();
        return 2;
    }

    Runner r(o, out, err);
    try {
        if (*gen) r.gen_data();
        else if (*tr) r.train_cmd();
        else if (*sa) r.sample_cmd();
        else if (*ev) r.eval_cmd();
        else if (*sw) r.sweep_cmd();
        else if (*cx) r.complexity_cmd();
    } catch (const Error& e) {
        err << "error[" << error_class(e.kind()) << "]: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace recat::cli
