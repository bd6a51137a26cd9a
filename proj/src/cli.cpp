#include <bgr/cli.hpp>

#include <bgr/synthetic.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace bgr::cli {

namespace {

enum class Command { Run, Train, Segment, Eval, Synth, Complexity };

constexpr std::size_t kSegmentChunk = 64;

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string numbered(const char* prefix, long index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%06ld.%s", prefix, index, ext);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool labeled(const LabelFrame& gt) {
    return std::any_of(gt.data.begin(), gt.data.end(),
                       [](Label l) { return l == Label::Foreground || l == Label::Background; });
}

std::string video_of(const std::string& sequence) { return fs::path(sequence).filename().string(); }

std::string f_text(const std::optional<double>& f) { return f ? shortest(*f) : "nan"; }

struct Context {
    RunConfig cfg;
    io::DatasetLayout layout;
    Command command;
    std::ostream& out;
};

void segment_to_disk(const Context& ctx, const arch::Autoencoder& model, const FrameSequence& seq,
                     const std::vector<io::IndexedFile>& files, const fs::path& seq_out) {
    const auto& cfg = ctx.cfg;
    fs::create_directories(seq_out);
    std::size_t foreground = 0;
    for (std::size_t begin = 0; begin < seq.size(); begin += kSegmentChunk) {
        const std::size_t count = std::min(kSegmentChunk, seq.size() - begin);
        auto results = seg::segment_sequence(model, std::span(seq.frames).subspan(begin, count), cfg.threshold);
        for (std::size_t k = 0; k < count; ++k) {
            const long index = files[begin + k].index;
            const auto& r = results[k];
            io::write_mask(r.mask, seq_out / numbered("bin", index, "png"));
            foreground += static_cast<std::size_t>(std::count(r.mask.data.begin(), r.mask.data.end(), 1));
            if (cfg.dump_backgrounds) io::write_frame(r.background, seq_out / "background" / numbered("bg", index, "png"));
            if (cfg.dump_noise) io::write_gray(r.noise, 255.f, seq_out / "noise" / numbered("noise", index, "png"));
            if (cfg.dump_threshold) {
                FloatRaster tau(r.threshold.h, r.threshold.w);
                std::transform(r.threshold.data.begin(), r.threshold.data.end(), tau.data.begin(),
                               [](double v) { return static_cast<float>(v); });
                io::write_float_raster(tau, seq_out / "threshold" / numbered("tau", index, "pfm"));
            }
        }
    }
    ctx.out << "stage=segment seq=" << seq.source_id << " frames=" << seq.size() << " foreground_pixels=" << foreground
            << std::endl;
}

void write_counts(const fs::path& path, const std::string& sequence, const eval::ConfusionCounts& c) {
    json j = {{"sequence", sequence}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    write_text(path, j.dump(2) + "\n");
}

eval::ConfusionCounts read_counts(const fs::path& path) {
    try {
        const json j = json::parse(read_text(path));
        return {j.at("tp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
                j.at("fn").get<std::uint64_t>()};
    } catch (const json::exception& e) {
        throw Error("malformed counts file " + path.string() + ": " + e.what());
    }
}

void process_sequence(const Context& ctx, const std::string& name) {
    const auto& cfg = ctx.cfg;
    const fs::path seq_out = fs::path(cfg.output) / name;
    if (ctx.command == Command::Eval) return;

    FrameSequence seq = io::load_sequence(ctx.layout, name);
    seq.source_id = name;
    ctx.out << "stage=load seq=" << name << " frames=" << seq.size() << " height=" << seq.height()
            << " width=" << seq.width() << std::endl;

    train::TrainConfig tc = cfg.train;
    tc.log = &ctx.out;

    if (ctx.command == Command::Complexity) {
        auto probed = train::probe(seq, tc);
        ctx.out << "stage=complexity seq=" << name << " mbar=" << shortest(probed.verdict.mean_soft_mask)
                << " verdict=" << arch::to_string(probed.verdict.verdict) << std::endl;
        return;
    }

    fs::create_directories(seq_out);
    fs::remove(seq_out / "counts.json");
    write_text(seq_out / "config.txt", cfg.echo());

    std::optional<arch::Autoencoder> model;
    if (ctx.command == Command::Run || ctx.command == Command::Train) {
        auto trained = train::train(seq, tc);
        ctx.out << "stage=train seq=" << name << " mbar=" << shortest(trained.verdict.mean_soft_mask)
                << " verdict=" << arch::to_string(trained.verdict.verdict) << " iterations=" << trained.iterations
                << std::endl;
        train::save_checkpoint(trained.model, seq_out / "model.ckpt");
        model.emplace(std::move(trained.model));
    } else {
        const fs::path ckpt = cfg.checkpoint.empty() ? seq_out / "model.ckpt" : fs::path(cfg.checkpoint);
        model.emplace(train::load_checkpoint(ckpt));
        if (model->spec().height != seq.height() || model->spec().width != seq.width())
            throw Error("checkpoint " + ckpt.string() + " was trained for another frame size");
    }
    if (ctx.command == Command::Train) return;

    auto files = io::list_frame_files(ctx.layout.input_path(name));
    segment_to_disk(ctx, *model, seq, files, seq_out);

    if (ctx.command == Command::Run && fs::exists(ctx.layout.groundtruth_path(name))) {
        auto counts = evaluate_predictions(ctx.layout, name, seq_out);
        write_counts(seq_out / "counts.json", name, counts);
        ctx.out << "stage=eval seq=" << name << " tp=" << counts.tp << " fp=" << counts.fp << " fn=" << counts.fn
                << " tn=" << counts.tn << " f=" << f_text(eval::f_measure(counts)) << std::endl;
    }
}

// Runs every sequence, in worker processes when jobs > 1. Returns the number of failures.
int process_all(const Context& ctx, const std::vector<std::string>& sequences, std::ostream& err) {
    auto guarded = [&](const std::string& name) {
        try {
            process_sequence(ctx, name);
            return 0;
        } catch (const std::exception& e) {
            err << "error: " << name << ": " << e.what() << '\n';
            ctx.out << "stage=failed seq=" << name << std::endl;
            return 1;
        }
    };
    const int jobs = std::min<int>(ctx.cfg.jobs, static_cast<int>(sequences.size()));
    if (jobs <= 1) {
        int failures = 0;
        for (const auto& name : sequences) failures += guarded(name);
        return failures;
    }

    ctx.out.flush();
    err.flush();
    std::vector<pid_t> workers;
    for (int k = 0; k < jobs; ++k) {
        const pid_t pid = fork();
        if (pid < 0) throw Error("fork failed");
        if (pid == 0) {
            int failures = 0;
            for (std::size_t i = static_cast<std::size_t>(k); i < sequences.size(); i += jobs)
                failures += guarded(sequences[i]);
            ctx.out.flush();
            err.flush();
            std::_Exit(failures > 0 ? 1 : 0);
        }
        workers.push_back(pid);
    }
    int failures = 0;
    for (pid_t pid : workers) {
        int status = 0;
        if (waitpid(pid, &status, 0) < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
    }
    return failures;
}

void write_eval_report(const Context& ctx, std::vector<eval::VideoResult> videos, const std::string& echo) {
    if (videos.empty()) return;
    auto report = eval::aggregate(std::move(videos));
    report.config_echo = echo;
    const fs::path dir = fs::path(ctx.cfg.output) / "report";
    eval::write_report(report, dir, ctx.cfg.chart);
    for (const auto& c : report.categories) ctx.out << "category=" << c.name << " f=" << f_text(c.f) << '\n';
    ctx.out << "overall f=" << f_text(report.overall) << " report=" << dir.string() << '\n';
}

int run_synth(const RunConfig& cfg, std::ostream& out) {
    synth::SyntheticSpec spec;
    if (!cfg.synth_spec.empty()) {
        spec = synth::SyntheticSpec::from_json(read_text(cfg.synth_spec));
    } else if (cfg.synth_scene == "static") {
        spec = synth::SyntheticSpec::static_scene();
    } else if (cfg.synth_scene == "noise") {
        spec = synth::SyntheticSpec::noise_scene();
    } else if (cfg.synth_scene == "panning") {
        spec = synth::SyntheticSpec::panning_scene();
    } else {
        throw Error("unknown scene '" + cfg.synth_scene + "' (static, noise, panning)");
    }
    auto data = synth::generate(spec);
    synth::materialize(spec, data, cfg.output);
    out << "stage=synth output=" << cfg.output << " frames=" << data.sequence.size() << " kind="
        << synth::to_string(spec.kind) << std::endl;
    return kExitOk;
}

}  // namespace

void RunConfig::apply_ablations() {
    if (no_bootstrap) train.loss.beta = 0.0;
    if (no_noise_threshold) threshold.alpha2 = 0.0;
    if (l2_loss) {
        train.loss.l2 = true;
        threshold.alpha2 = 0.0;
    }
    if (no_postprocess) threshold.postprocess = false;
    if (force_simple) train.complexity.tau0 = 1.0;
}

void RunConfig::validate() const {
    io::layout_kind_from_string(layout);
    if (!preset.empty()) arch::preset_from_string(preset);
    if (!codes.empty()) io::parse_code_table(codes);
    if (!(threshold.alpha1 >= 0.0) || !(threshold.alpha2 >= 0.0)) throw Error("alpha1 and alpha2 must be >= 0");
    if (jobs < 1) throw Error("jobs must be >= 1");
    train.validate();
}

io::DatasetLayout RunConfig::dataset_layout() const {
    auto l = io::DatasetLayout::of_kind(io::layout_kind_from_string(layout), root);
    if (!codes.empty()) l.codes = io::parse_code_table(codes);
    return l;
}

std::string RunConfig::echo() const {
    std::ostringstream o;
    o << "layout=" << quote(layout) << '\n';
    o << "root=" << quote(root) << '\n';
    o << "sequence=[";
    for (std::size_t i = 0; i < sequences.size(); ++i) o << (i ? ", " : "") << quote(sequences[i]);
    o << "]\n";
    o << "codes=" << quote(codes.empty() ? io::format_code_table(dataset_layout().codes) : codes) << '\n';
    o << "preset=" << quote(preset) << '\n';
    o << "channel-divisor=" << train.channel_divisor << '\n';
    o << "seed=" << train.seed << '\n';
    o << "lr=" << shortest(train.learning_rate) << '\n';
    o << "batch-size=" << train.batch_size << '\n';
    o << "n-simple=" << train.n_simple << '\n';
    o << "n-complex=" << train.n_complex << '\n';
    o << "e-complex=" << train.e_complex << '\n';
    o << "lr-drop-fraction=" << shortest(train.lr_drop_fraction) << '\n';
    o << "lr-drop-factor=" << shortest(train.lr_drop_factor) << '\n';
    o << "loss=" << quote(train.loss.l2 ? "l2" : "l1") << '\n';
    o << "tau1=" << shortest(train.loss.tau1) << '\n';
    o << "beta=" << shortest(train.loss.beta) << '\n';
    o << "r=" << train.loss.r << '\n';
    o << "tau0=" << shortest(train.complexity.tau0) << '\n';
    o << "n-eval=" << train.complexity.n_eval << '\n';
    o << "b-eval=" << train.complexity.b_eval << '\n';
    o << "alpha1=" << shortest(threshold.alpha1) << '\n';
    o << "alpha2=" << shortest(threshold.alpha2) << '\n';
    o << "postprocess=" << (threshold.postprocess ? "true" : "false") << '\n';
    return o.str();
}

std::vector<std::string> discover_sequences(const io::DatasetLayout& layout) {
    if (!fs::is_directory(layout.root)) throw Error("dataset root " + layout.root.string() + " is not a directory");
    std::vector<std::string> found;
    auto subdirs = [](const fs::path& p) {
        std::vector<fs::path> out;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_directory()) out.push_back(e.path());
        std::sort(out.begin(), out.end());
        return out;
    };
    for (const auto& first : subdirs(layout.root)) {
        const std::string a = first.filename().string();
        if (fs::is_directory(layout.input_path(a))) {
            found.push_back(a);
            continue;
        }
        for (const auto& second : subdirs(first)) {
            const std::string b = a + "/" + second.filename().string();
            if (fs::is_directory(layout.input_path(b))) found.push_back(b);
        }
    }
    if (found.empty()) throw Error("no sequences found under " + layout.root.string());
    return found;
}

std::string category_of(const std::string& sequence) {
    const auto parent = fs::path(sequence).parent_path();
    return parent.empty() ? "all" : parent.string();
}

eval::ConfusionCounts evaluate_predictions(const io::DatasetLayout& layout, const std::string& sequence,
                                           const fs::path& prediction_dir) {
    const auto inputs = io::list_frame_files(layout.input_path(sequence));
    const auto gt = io::load_groundtruth(layout, sequence);
    std::map<long, fs::path> predictions;
    for (const auto& f : io::list_frame_files(prediction_dir)) {
        if (f.path.stem().string().rfind("bin", 0) != 0) continue;
        if (!predictions.emplace(f.index, f.path).second)
            throw Error("two predictions for frame " + std::to_string(f.index) + " in " + prediction_dir.string());
    }
    eval::ConfusionCounts counts;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto it = predictions.find(inputs[t].index);
        if (it == predictions.end()) {
            if (labeled(gt[t]))
                throw Error(sequence + ": no prediction for evaluated frame " + std::to_string(inputs[t].index));
            continue;
        }
        eval::accumulate(io::read_mask(it->second), gt[t], counts);
        predictions.erase(it);
    }
    if (!predictions.empty())
        throw Error(sequence + ": " + std::to_string(predictions.size()) + " prediction(s) without an input frame, first " +
                    predictions.begin()->second.filename().string());
    return counts;
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Background reconstruction and foreground segmentation with a self-supervised autoencoder"};
    app.set_config("--config", "", "Flat key=value file; command-line flags take precedence");
    app.require_subcommand(1, 1);

    RunConfig cfg;
    std::optional<double> lr;
    std::optional<std::size_t> batch;
    std::optional<long> n_complex;
    bool non_video = false;
    std::string loss_kind = "l1";

    app.add_option("--layout", cfg.layout, "Dataset layout: cdnet, lasiesta, bmc, generic");
    app.add_option("--root", cfg.root, "Dataset root directory");
    app.add_option("--sequence", cfg.sequences, "Sequence path relative to the root (repeatable)");
    app.add_option("--codes", cfg.codes, "Ground-truth code table, e.g. 0:background,255:foreground");
    app.add_option("-o,--output", cfg.output, "Output directory");

    app.add_option("--lr", lr, "Learning rate (default 5e-4)");
    app.add_option("--batch-size", batch, "Mini-batch size (default 32)");
    app.add_option("--n-simple", cfg.train.n_simple, "Total iterations for simple backgrounds");
    app.add_option("--n-complex", n_complex, "Minimum iterations for complex backgrounds (default 24000)");
    app.add_option("--e-complex", cfg.train.e_complex, "Minimum epochs for complex backgrounds");
    app.add_option("--lr-drop-fraction", cfg.train.lr_drop_fraction, "Fraction of the schedule before the lr drop");
    app.add_option("--lr-drop-factor", cfg.train.lr_drop_factor, "Divisor applied to the lr at the drop");
    app.add_option("--seed", cfg.train.seed, "Random seed");
    app.add_option("--preset", cfg.preset, "video_stride3, image64_stride2 or image128_stride2");
    app.add_option("--channel-divisor", cfg.train.channel_divisor, "Divide hidden channel counts (1 = full width)");
    app.add_option("--log-every", cfg.train.log_every, "Iterations between progress lines (0 = silent)");
    app.add_flag("--non-video", non_video, "lr 2e-3, batch 128 and 500000 complex iterations unless set explicitly");

    app.add_option("--loss", loss_kind, "Reconstruction loss: l1 or l2")->check(CLI::IsMember({"l1", "l2"}));
    app.add_option("--tau1", cfg.train.loss.tau1, "Soft-mask temperature");
    app.add_option("--beta", cfg.train.loss.beta, "Bootstrap weight decay");
    app.add_option("--r", cfg.train.loss.r, "Smoothing divisor (half-width = width / r)");
    app.add_option("--tau0", cfg.train.complexity.tau0, "Complexity threshold on the mean soft mask");
    app.add_option("--n-eval", cfg.train.complexity.n_eval, "Probe iterations");
    app.add_option("--b-eval", cfg.train.complexity.b_eval, "Probe frame count");
    app.add_option("--alpha1", cfg.threshold.alpha1, "Illumination factor of the threshold");
    app.add_option("--alpha2", cfg.threshold.alpha2, "Noise factor of the threshold");
    app.add_option("--postprocess", cfg.threshold.postprocess, "Morphological closing and opening");

    app.add_flag("--no-bootstrap", cfg.no_bootstrap, "Ablation: unit loss weights (beta = 0)");
    app.add_flag("--no-noise-threshold", cfg.no_noise_threshold, "Ablation: alpha2 = 0");
    app.add_flag("--l2-loss", cfg.l2_loss, "Ablation: squared-error loss, alpha2 = 0");
    app.add_flag("--no-postprocess", cfg.no_postprocess, "Ablation: keep raw masks");
    app.add_flag("--force-simple", cfg.force_simple, "Ablation: tau0 = 1");

    app.add_flag("--dump-backgrounds", cfg.dump_backgrounds, "Write reconstructed backgrounds");
    app.add_flag("--dump-noise", cfg.dump_noise, "Write noise maps (x255)");
    app.add_flag("--dump-threshold", cfg.dump_threshold, "Write threshold maps as PFM");
    app.add_flag("--chart", cfg.chart, "Write a per-category bar chart with the report");
    app.add_option("--checkpoint", cfg.checkpoint, "Checkpoint for segment (default <output>/<sequence>/model.ckpt)");
    app.add_option("--pred-dir", cfg.pred_dir, "Predictions for eval: <dir>/<sequence>/bin%06d.png");
    app.add_option("--spec", cfg.synth_spec, "Synthetic scene JSON for synth");
    app.add_option("--scene", cfg.synth_scene, "Built-in synthetic scene: static, noise, panning");
    app.add_option("-j,--jobs", cfg.jobs, "Worker processes, one sequence each at a time");

    const std::map<std::string, Command> commands = {
        {"run", Command::Run},         {"train", Command::Train},
        {"segment", Command::Segment}, {"eval", Command::Eval},
        {"synth", Command::Synth},     {"complexity", Command::Complexity}};
    const std::map<std::string, std::string> descriptions = {
        {"run", "Train, segment and evaluate"},
        {"train", "Train and write checkpoints"},
        {"segment", "Segment with saved checkpoints"},
        {"eval", "Score existing masks against ground truth"},
        {"synth", "Write a synthetic sequence"},
        {"complexity", "Probe training and complexity verdict only"}};
    for (const auto& [name, _] : commands) app.add_subcommand(name, descriptions.at(name))->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfigError;
    }
    const Command command = commands.at(app.get_subcommands().front()->get_name());

    Context ctx{cfg, {}, command, out};
    try {
        if (non_video) {
            const auto profile = train::TrainConfig::non_video_profile();
            cfg.train.learning_rate = profile.learning_rate;
            cfg.train.batch_size = profile.batch_size;
            cfg.train.n_complex = profile.n_complex;
        }
        if (lr) cfg.train.learning_rate = *lr;
        if (batch) cfg.train.batch_size = *batch;
        if (n_complex) cfg.train.n_complex = *n_complex;
        cfg.train.loss.l2 = loss_kind == "l2";
        cfg.train.complexity.tau1 = cfg.train.loss.tau1;
        if (!cfg.preset.empty()) cfg.train.preset = arch::preset_from_string(cfg.preset);
        cfg.apply_ablations();
        cfg.validate();
        if (command == Command::Synth) return run_synth(cfg, out);
        if (cfg.root.empty()) throw Error("--root is required");
        ctx.cfg = cfg;
        ctx.layout = cfg.dataset_layout();
        if (ctx.cfg.sequences.empty()) ctx.cfg.sequences = discover_sequences(ctx.layout);
        if (command == Command::Eval && cfg.pred_dir.empty()) throw Error("eval needs --pred-dir");
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfigError;
    }

    try {
        const auto& sequences = ctx.cfg.sequences;
        if (command == Command::Eval) {
            std::vector<eval::VideoResult> videos;
            for (const auto& name : sequences) {
                auto counts = evaluate_predictions(ctx.layout, name, fs::path(ctx.cfg.pred_dir) / name);
                auto f = eval::f_measure(counts);
                out << "stage=eval seq=" << name << " tp=" << counts.tp << " fp=" << counts.fp << " fn=" << counts.fn
                    << " tn=" << counts.tn << " f=" << f_text(f) << std::endl;
                videos.push_back({video_of(name), category_of(name), counts, f});
            }
            std::string echo = "pred-dir=" + quote(ctx.cfg.pred_dir) + "\n" + ctx.cfg.echo();
            write_eval_report(ctx, std::move(videos), echo);
            return kExitOk;
        }

        const int failures = process_all(ctx, sequences, err);
        if (command == Command::Run) {
            std::vector<eval::VideoResult> videos;
            for (const auto& name : sequences) {
                const fs::path counts_file = fs::path(ctx.cfg.output) / name / "counts.json";
                if (!fs::exists(counts_file)) continue;
                auto counts = read_counts(counts_file);
                videos.push_back({video_of(name), category_of(name), counts, eval::f_measure(counts)});
            }
            write_eval_report(ctx, std::move(videos), ctx.cfg.echo());
        }
        return failures > 0 ? kExitStageFailure : kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitStageFailure;
    }
}

}  // namespace bgr::cli
