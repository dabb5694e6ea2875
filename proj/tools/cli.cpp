#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lindistill/analysis.hpp"
#include "lindistill/convert.hpp"
#include "lindistill/distill.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/persist.hpp"
#include "lindistill/tasks.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lindistill;
using lindistill::cli::RunConfig;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kMissing = 3, kNumeric = 4 };

struct Context {
    RunConfig cfg;
    fs::path out;
    bool quiet = false;

    fs::path data(const std::string& name) const { return out / "data" / (name + ".bin"); }
    fs::path teacher(const std::string& name) const { return out / "teacher" / name; }
    fs::path student(const std::string& name) const { return out / "student" / name; }
    fs::path run_dir(GuidanceMode mode) const { return out / "distill" / to_string(mode); }
    fs::path analysis(const std::string& name) const { return out / "analysis" / name; }

    void log(json event) const {
        if (quiet || !cfg.io.log_stdout) return;
        std::cout << event.dump() << std::endl;
    }
};

Dataset need_data(const Context& ctx, const std::string& split) {
    const fs::path p = ctx.data(split);
    if (!fs::exists(p)) throw MissingArtifact("missing dataset " + p.string() + " (run gen-data first)");
    return load_dataset(p);
}

Model need_model(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw MissingArtifact("missing checkpoint " + p.string() + " (" + hint + ")");
    return load_model(p);
}

bool has_ssm(const Model& m) {
    for (auto k : m.spec().mixers) {
        if (k == MixerKind::ssm || k == MixerKind::bidirectional_ssm) return true;
    }
    return false;
}

// Training with a line-delimited record log and resumable state.
class Stage {
public:
    Stage(const Context& ctx, fs::path dir, std::string name)
        : ctx_(ctx), dir_(std::move(dir)), name_(std::move(name)) {
        fs::create_directories(dir_);
        fingerprint_ = content_hash(ctx.cfg.to_json().dump() + "\n" + name_);
    }

    fs::path log_path() const { return dir_ / "log.jsonl"; }

    // Thrown after the resume state for `step` is on disk.
    struct Stopped {
        std::int64_t step;
    };

    // stop_after > 0 ends the stage early, as an interruption would.
    TrainResult run(Distiller& session, TrainHooks hooks, const Dataset* val, std::int64_t stop_after = 0) {
        const fs::path resume = dir_ / "resume.ckpt";
        const fs::path resume_teacher = dir_ / "resume_teacher.ckpt";
        std::int64_t start = 0;
        if (fs::exists(resume)) {
            Checkpoint ck = load_checkpoint(resume);
            if (ck.metadata == fingerprint_) {
                std::optional<Model> live;
                if (session.config().mode == GuidanceMode::trajectory) live = load_model(resume_teacher);
                session.resume(ck.step, ck.model, ck.state, live);
                start = ck.step;
                ctx_.log({{"event", "resume"}, {"stage", name_}, {"step", start}});
            }
        }
        truncate_log(start);
        std::ofstream log(log_path(), std::ios::app);
        const auto user_step = hooks.on_step;
        const auto user_record = hooks.on_record;
        hooks.val = val;
        hooks.on_record = [&](const StepRecord& r) {
            log << r.to_json() << "\n";
            log.flush();
            if (user_record) user_record(r);
            if (r.eval_metric || r.step % 100 == 0 || r.step == session.config().steps) {
                json e = json::parse(r.to_json());
                e["event"] = "step";
                e["stage"] = name_;
                ctx_.log(e);
            }
        };
        const std::int64_t interval = ctx_.cfg.io.resume_interval;
        hooks.on_step = [&, user_step](const Model& m, const AdamW& opt, std::int64_t step) {
            if (user_step) user_step(m, opt, step);
            if (interval > 0 && (step % interval == 0 || step == session.config().steps)) save_resume(session, step);
            if (step == stop_after && step < session.config().steps) {
                save_resume(session, step);
                throw Stopped{step};
            }
        };
        TrainResult result = lindistill::run(session, hooks);
        if (session.config().steps == 0) save_resume(session, 0);
        return result;
    }

private:
    void save_resume(const Distiller& session, std::int64_t step) {
        auto state = session.optimizer().export_state("adam");
        if (session.teacher_optimizer()) {
            save_checkpoint(dir_ / "resume_teacher.ckpt", *session.teacher(), step);
            for (auto& kv : session.teacher_optimizer()->export_state("teacher_adam")) state.push_back(kv);
        }
        save_checkpoint(dir_ / "resume.ckpt", session.student(), step, fingerprint_, state);
    }

    void truncate_log(std::int64_t keep) {
        std::string kept;
        if (keep > 0 && fs::exists(log_path())) {
            std::ifstream in(log_path());
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                if (json::parse(line).at("step").get<std::int64_t>() <= keep) kept += line + "\n";
            }
        }
        write_text(log_path(), kept);
    }

    const Context& ctx_;
    fs::path dir_;
    std::string name_;
    std::string fingerprint_;
};

int cmd_gen_data(const Context& ctx) {
    const DatasetSplits s = generate(ctx.cfg.task);
    for (const auto* d : {&s.train, &s.val, &s.test}) {
        save_dataset(*d, ctx.data(to_string(d->split)));
        ctx.log({{"event", "dataset"}, {"split", to_string(d->split)}, {"count", d->count},
                 {"file", ctx.data(to_string(d->split)).string()}});
    }
    if (ctx.cfg.teacher.pretrain_steps > 0) {
        TaskSpec pre = ctx.cfg.task;
        pre.kind = ctx.cfg.teacher.pretrain_task;
        pre.seed = ctx.cfg.task.seed + 0x5EED;
        const DatasetSplits p = generate(pre);
        save_dataset(p.train, ctx.data("pretrain"));
        ctx.log({{"event", "dataset"}, {"split", "pretrain"}, {"count", p.train.count}});
    }
    return kOk;
}

int cmd_train_teacher(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Dataset train = need_data(ctx, "train");
    const Dataset val = need_data(ctx, "val");
    Model source = init_model(cfg.teacher_spec(), cfg.model_seed());
    if (cfg.teacher.pretrain_steps > 0) {
        const Dataset pre = need_data(ctx, "pretrain");
        if (pre.vocab != train.vocab || pre.seq_len != train.seq_len || pre.num_classes != train.num_classes) {
            throw ConfigError("pretraining data must match the target task's vocabulary, length and classes");
        }
        Stage stage(ctx, ctx.teacher("pretrain"), "pretrain");
        Distiller session(source, std::nullopt, pre, cfg.teacher_config(cfg.teacher.pretrain_steps,
                                                                           cfg.teacher.pretrain_optim));
        source = stage.run(session, {}, nullptr).student;
    }
    save_checkpoint(ctx.teacher("source.ckpt"), source, 0);

    WaypointStore store = WaypointStore::create(ctx.teacher("waypoints"), cfg.teacher.waypoint_interval);
    Stage stage(ctx, ctx.teacher("finetune"), "finetune");
    const DistillConfig tc = cfg.teacher_config(cfg.teacher.steps, cfg.teacher.optim);
    Distiller session(source, std::nullopt, train, tc);
    TrainHooks hooks;
    hooks.on_step = [&](const Model& m, const AdamW&, std::int64_t step) {
        const bool due = step % tc.waypoint_interval == 0 || step == tc.steps;
        if (due && store.last_teacher_step().value_or(0) < step) store.append(m, step);
    };
    TrainResult r = stage.run(session, hooks, &val);
    save_checkpoint(ctx.teacher("target.ckpt"), r.student, tc.steps);
    const Metrics m = evaluate(r.student, val);
    ctx.log({{"event", "teacher"}, {"val_accuracy", m.accuracy}, {"val_loss", m.loss}, {"waypoints", store.size()}});
    return kOk;
}

int cmd_convert(const Context& ctx) {
    std::string report;
    for (const char* which : {"source", "target"}) {
        const fs::path p = ctx.teacher(std::string(which) + ".ckpt");
        if (!fs::exists(p)) {
            if (std::string(which) == "source") throw MissingArtifact("missing " + p.string() + " (run train-teacher)");
            continue;
        }
        const Model teacher = load_model(p);
        const ConversionPlan plan = ctx.cfg.plan(teacher);
        const Model student = transfer_parameters(teacher, plan);
        save_checkpoint(ctx.student(std::string("from_") + which + ".ckpt"), student, 0);
        const ConversionReport rep = describe_conversion(teacher, plan);
        report += std::string("# from ") + which + "\n" + rep.to_string() + "\n";
        ctx.log({{"event", "convert"},
                 {"from", which},
                 {"transferred", rep.scalars(GroupStatus::transferred)},
                 {"discarded", rep.scalars(GroupStatus::discarded)},
                 {"initialized", rep.scalars(GroupStatus::initialized)}});
    }
    write_text(ctx.student("conversion.txt"), report);
    return kOk;
}

std::string init_source(const RunConfig& cfg) {
    if (cfg.conversion.init_from != "auto") return cfg.conversion.init_from;
    const auto m = cfg.distill.mode;
    return (m == GuidanceMode::target || m == GuidanceMode::hybrid) ? "target" : "source";
}

int cmd_distill(const Context& ctx, std::int64_t stop_after) {
    const auto& cfg = ctx.cfg;
    const Dataset train = need_data(ctx, "train");
    const Dataset val = need_data(ctx, "val");
    const std::string from = init_source(cfg);
    const Model student = need_model(ctx.student("from_" + from + ".ckpt"), "run convert");
    DistillConfig dc = cfg.distill_config(has_ssm(student));
    std::optional<Model> teacher;
    WaypointSource waypoints;
    switch (dc.mode) {
        case GuidanceMode::unguided: break;
        case GuidanceMode::target:
        case GuidanceMode::hybrid: teacher = need_model(ctx.teacher("target.ckpt"), "run train-teacher"); break;
        case GuidanceMode::trajectory: teacher = need_model(ctx.teacher("source.ckpt"), "run train-teacher"); break;
        case GuidanceMode::waypoint: {
            const fs::path dir = ctx.teacher("waypoints");
            if (!fs::exists(dir / "manifest.jsonl")) throw MissingArtifact("waypoint mode needs " + dir.string());
            WaypointStore store = WaypointStore::open(dir);
            if (store.empty()) throw MissingArtifact("waypoint store " + dir.string() + " is empty");
            if (!store.verify()) throw FormatError("waypoint store " + dir.string() + " fails its hash check");
            waypoints = WaypointSource::from_store(store);
            break;
        }
    }
    const fs::path dir = ctx.run_dir(dc.mode);
    const std::int64_t snap = cfg.io.checkpoint_interval;
    auto snapshot = [&](const Model& m, std::int64_t step) {
        char name[40];
        std::snprintf(name, sizeof name, "step_%08lld.ckpt", static_cast<long long>(step));
        save_checkpoint(dir / "snapshots" / name, m, step);
    };
    if (snap > 0) {
        fs::create_directories(dir / "snapshots");
        snapshot(student, 0);
    }
    Stage stage(ctx, dir, "distill-" + to_string(dc.mode));
    Distiller session(student, teacher, train, dc, waypoints);
    TrainHooks hooks;
    hooks.on_step = [&](const Model& m, const AdamW&, std::int64_t step) {
        if (snap > 0 && (step % snap == 0 || step == dc.steps)) snapshot(m, step);
    };
    TrainResult r;
    try {
        r = stage.run(session, hooks, &val, stop_after);
    } catch (const Stage::Stopped& s) {
        ctx.log({{"event", "stopped"}, {"step", s.step}});
        return kOk;
    }
    save_checkpoint(dir / "final.ckpt", r.student, dc.steps);
    if (r.teacher) save_checkpoint(dir / "teacher_final.ckpt", *r.teacher, dc.steps);
    const Metrics m = evaluate(r.student, val);
    json summary = {{"mode", to_string(dc.mode)}, {"init_from", from},      {"steps", dc.steps},
                    {"val_accuracy", m.accuracy}, {"val_loss", m.loss},     {"val_perplexity", m.perplexity}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    summary["event"] = "distill";
    ctx.log(summary);
    return kOk;
}

int cmd_eval(const Context& ctx, const std::vector<std::string>& ckpts, const std::string& split) {
    const Dataset data = need_data(ctx, split);
    std::vector<std::pair<std::string, fs::path>> targets;
    for (const auto& c : ckpts) targets.emplace_back(c, c);
    if (targets.empty()) {
        for (const char* n : {"source.ckpt", "target.ckpt"}) targets.emplace_back(std::string("teacher/") + n, ctx.teacher(n));
        for (const char* n : {"from_source.ckpt", "from_target.ckpt"}) targets.emplace_back(std::string("student/") + n, ctx.student(n));
        if (fs::exists(ctx.out / "distill")) {
            std::vector<fs::path> runs;
            for (const auto& e : fs::directory_iterator(ctx.out / "distill")) runs.push_back(e.path());
            std::sort(runs.begin(), runs.end());
            for (const auto& r : runs) targets.emplace_back("distill/" + r.filename().string() + "/final.ckpt", r / "final.ckpt");
        }
    }
    json results = json::object();
    for (const auto& [label, path] : targets) {
        if (!fs::exists(path)) {
            if (!ckpts.empty()) throw MissingArtifact("missing checkpoint " + path.string());
            continue;
        }
        const Metrics m = evaluate(load_model(path), data);
        results[label] = {{"accuracy", m.accuracy}, {"loss", m.loss}, {"perplexity", m.perplexity}, {"count", m.count}};
    }
    if (results.empty()) throw MissingArtifact("no checkpoints to evaluate under " + ctx.out.string());
    write_text(ctx.out / "eval" / (split + ".json"), results.dump(2) + "\n");
    std::cout << results.dump(2) << std::endl;
    return kOk;
}

std::vector<StepModel> teacher_waypoints(const Context& ctx) {
    const fs::path dir = ctx.teacher("waypoints");
    if (!fs::exists(dir / "manifest.jsonl")) throw MissingArtifact("missing waypoint store " + dir.string());
    const WaypointStore store = WaypointStore::open(dir);
    std::vector<StepModel> out;
    for (const auto& e : store.entries()) out.emplace_back(e.teacher_step, store.load(e.index));
    return out;
}

int cmd_analyze_shift(const Context& ctx) {
    const Dataset val = need_data(ctx, "val");
    const Model source = need_model(ctx.teacher("source.ckpt"), "run train-teacher");
    std::vector<StepModel> cps{{0, source}};
    for (auto& w : teacher_waypoints(ctx)) cps.push_back(std::move(w));
    const std::size_t n = std::min(ctx.cfg.analysis.shift_samples, val.count);
    const ShiftCurve curve = hidden_shift(source, cps, val, n, ctx.cfg.seed);
    write_shift_csv(ctx.analysis("shift.csv"), {{"teacher", curve}});
    Series s{"teacher", {}};
    for (const auto& [step, d] : curve.points) s.points.emplace_back(static_cast<double>(step), d);
    write_text(ctx.analysis("shift.svg"), line_chart_svg({s}, {"Hidden-state shift from the source teacher",
                                                              "teacher fine-tuning step", "mean cosine distance"}));
    ctx.log({{"event", "analyze-shift"}, {"points", curve.points.size()},
             {"final_distance", curve.points.back().second}});
    return kOk;
}

std::vector<StepModel> snapshots(const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::exists(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() == ".ckpt") files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<StepModel> out;
    for (const auto& f : files) {
        Checkpoint ck = load_checkpoint(f);
        out.emplace_back(ck.step, std::move(ck.model));
    }
    return out;
}

int cmd_analyze_trajectory(const Context& ctx) {
    const Dataset val = need_data(ctx, "val");
    std::vector<TrajectoryVariant> variants;
    TrajectoryVariant teacher{"teacher", {{0, need_model(ctx.teacher("source.ckpt"), "run train-teacher")}}};
    for (auto& w : teacher_waypoints(ctx)) teacher.checkpoints.push_back(std::move(w));
    variants.push_back(std::move(teacher));
    if (fs::exists(ctx.out / "distill")) {
        std::vector<fs::path> runs;
        for (const auto& e : fs::directory_iterator(ctx.out / "distill")) runs.push_back(e.path());
        std::sort(runs.begin(), runs.end());
        for (const auto& r : runs) {
            auto cps = snapshots(r / "snapshots");
            if (!cps.empty()) variants.push_back({r.filename().string(), std::move(cps)});
        }
    }
    const std::size_t n = std::min(ctx.cfg.analysis.trajectory_samples, val.count);
    const auto idx = probe_indices(val.count, n, ctx.cfg.seed);
    const TrajectoryProjection proj = trajectory_projection(variants, val, idx);
    write_trajectory_csv(ctx.analysis("trajectory.csv"), proj);
    std::vector<Series> series;
    for (const auto& p : proj.points) {
        if (series.empty() || series.back().name != p.variant) series.push_back({p.variant, {}});
        series.back().points.emplace_back(p.x, p.y);
    }
    write_text(ctx.analysis("trajectory.svg"),
               line_chart_svg(series, {"Hidden-state trajectories (PCA)", "PC1", "PC2"}));
    ctx.log({{"event", "analyze-trajectory"}, {"variants", variants.size()}, {"points", proj.points.size()},
             {"explained", {proj.explained[0], proj.explained[1]}}});
    return kOk;
}

int cmd_bench(const Context& ctx) {
    const auto& a = ctx.cfg.analysis;
    const std::size_t max_len = *std::max_element(a.bench_lengths.begin(), a.bench_lengths.end());
    ModelSpec base;
    base.vocab = ctx.cfg.task.model_vocab();
    base.max_len = max_len;
    base.width = a.bench_width;
    base.heads = a.bench_heads;
    base.ffn_hidden = a.bench_ffn_hidden;
    base.num_classes = 2;
    const std::size_t depth = ctx.cfg.model.blocks.size();
    std::vector<std::pair<std::string, Model>> models;
    for (MixerKind k : {MixerKind::attention, MixerKind::linformer, MixerKind::ssm}) {
        ModelSpec s = base;
        s.mixers.assign(depth, k);
        s.linformer_rank = ctx.cfg.conversion.linformer_rank;
        s.share = ctx.cfg.conversion.share;
        s.ssm_state = ctx.cfg.conversion.ssm_state;
        models.emplace_back(to_string(k), init_model(s, ctx.cfg.seed));
    }
    const TimingReport rep = timing_bench(models, a.bench_lengths, a.bench_runs, a.bench_batch, ctx.cfg.seed);
    write_timing_csv(ctx.analysis("timing.csv"), rep);
    std::vector<Series> series;
    for (const auto& p : rep.points) {
        if (series.empty() || series.back().name != p.kind) series.push_back({p.kind, {}});
        series.back().points.emplace_back(static_cast<double>(p.length), p.mean_seconds);
    }
    ChartOptions opt{"Forward time against sequence length", "sequence length", "seconds"};
    opt.log_x = opt.log_y = true;
    write_text(ctx.analysis("timing.svg"), line_chart_svg(series, opt));
    json slopes = rep.slopes;
    ctx.log({{"event", "bench"}, {"slopes", slopes}});
    if (ctx.quiet) std::cout << slopes.dump() << std::endl;
    return kOk;
}

int cmd_inspect(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    std::cout << "file      " << path << "\n";
    std::cout << "hash      " << file_hash(path) << "\n";
    std::cout << "step      " << ck.step << "\n";
    std::cout << "params    " << ck.model.parameter_count() << "\n";
    if (!ck.metadata.empty()) std::cout << "metadata  " << ck.metadata << "\n";
    std::cout << "state     " << ck.state.size() << " tensors\n";
    std::cout << "spec\n" << ck.model.spec().to_text();
    std::cout << "tensors\n";
    for (const auto& [name, t] : ck.model.parameters()) std::cout << "  " << name << " " << shape_str(t.shape()) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convert transformer classifiers into linear-complexity students by layerwise distillation"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir = "run";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run configuration (defaults apply to absent keys)");
    app.add_option("--out", out_dir, "Run directory")->capture_default_str();
    app.add_option("--seed", seed, "Overrides every seed in the configuration");
    app.add_flag("--quiet", quiet, "Suppress progress logs");

    auto* gen = app.add_subcommand("gen-data", "Generate train/val/test splits into OUT/data");
    auto* teach = app.add_subcommand("train-teacher",
                                     "Pretrain (optional) and fine-tune the teacher, recording waypoints. "
                                     "Errors: missing data (3), numeric fault (4)");
    auto* conv = app.add_subcommand("convert", "Build students from the source and target teachers. "
                                               "Errors: missing teacher (3)");
    auto* dist = app.add_subcommand("distill", "Train a student in the configured guidance mode. Errors: missing "
                                               "student, teacher or waypoints (3), numeric fault (4)");
    std::string mode_override;
    dist->add_option("--mode", mode_override, "Overrides distill.mode");
    std::int64_t stop_after = 0;
    dist->add_option("--stop-after", stop_after,
                     "Stop after this many steps, leaving resumable state (a later run continues)");
    auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on a split. Errors: missing data or checkpoint (3)");
    std::vector<std::string> ckpts;
    std::string split = "val";
    ev->add_option("--ckpt", ckpts, "Checkpoint(s) to evaluate; default: every model in the run directory");
    ev->add_option("--split", split, "Dataset split")->capture_default_str()->check(CLI::IsMember({"val", "test", "train"}));
    auto* shift = app.add_subcommand("analyze-shift", "Cosine distance of waypoints from the source teacher");
    auto* traj = app.add_subcommand("analyze-trajectory", "2-D PCA of teacher waypoints and student snapshots");
    auto* bench = app.add_subcommand("bench", "Forward-pass timing against sequence length");
    auto* inspect = app.add_subcommand("inspect-ckpt", "Print a checkpoint's header and tensor table");
    std::string inspect_path;
    inspect->add_option("path", inspect_path, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(inspect_path);
        Context ctx;
        ctx.cfg = config_path.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(config_path);
        if (seed) ctx.cfg.set_seed(*seed);
        if (!mode_override.empty()) ctx.cfg.distill.mode = parse_guidance_mode(mode_override);
        ctx.cfg.validate();
        ctx.out = out_dir;
        ctx.quiet = quiet;
        fs::create_directories(ctx.out);
        write_text(ctx.out / "config.resolved.json", ctx.cfg.to_json().dump(2) + "\n");
        if (gen->parsed()) return cmd_gen_data(ctx);
        if (teach->parsed()) return cmd_train_teacher(ctx);
        if (conv->parsed()) return cmd_convert(ctx);
        if (dist->parsed()) return cmd_distill(ctx, stop_after);
        if (ev->parsed()) return cmd_eval(ctx, ckpts, split);
        if (shift->parsed()) return cmd_analyze_shift(ctx);
        if (traj->parsed()) return cmd_analyze_trajectory(ctx);
        if (bench->parsed()) return cmd_bench(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kMissing;
    } catch (const TrainingFault& e) {
        std::cerr << "numeric fault at step " << e.step << ": " << e.what() << "\n";
        return kNumeric;
    } catch (const NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
