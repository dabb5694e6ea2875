#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lindistill/errors.hpp"

namespace lindistill::cli {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects anything left unread.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError("section '" + where_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        seen_.insert(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + " has the wrong type");
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) {
        auto it = j_.find(key);
        seen_.insert(key);
        if (it == j_.end() || it->is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    template <class E, class Parse>
    void get_enum(const char* key, E& out, Parse parse) {
        std::optional<std::string> text;
        get(key, text);
        if (text) out = parse(*text);
    }

    void get_mixers(const char* key, std::vector<MixerKind>& out) {
        auto it = j_.find(key);
        seen_.insert(key);
        if (it == j_.end() || it->is_null()) return;
        out.clear();
        if (it->is_string()) {
            out.push_back(parse_mixer_kind(it->get<std::string>()));
            return;
        }
        if (!it->is_array()) throw ConfigError(path(key) + " must be a mixer name or a list of names");
        for (const auto& v : *it) {
            if (!v.is_string()) throw ConfigError(path(key) + " entries must be strings");
            out.push_back(parse_mixer_kind(v.get<std::string>()));
        }
    }

    std::optional<Section> sub(const char* key) {
        auto it = j_.find(key);
        seen_.insert(key);
        if (it == j_.end() || it->is_null()) return std::nullopt;
        return Section(*it, where_.empty() ? key : where_ + "." + key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + path(it.key().c_str()) + "'");
        }
    }

private:
    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_optim(Section s, OptimSection& o) {
    s.get("lr", o.lr);
    s.get_enum("schedule", o.schedule, parse_schedule_kind);
    s.get("warmup_frac", o.warmup_frac);
    s.get("warmup_steps", o.warmup_steps);
    s.get("min_lr", o.min_lr);
    s.get("decay_rate", o.decay_rate);
    s.get("weight_decay", o.weight_decay);
    s.get("clip_norm", o.clip_norm);
    s.get("beta1", o.beta1);
    s.get("beta2", o.beta2);
    s.get("eps", o.eps);
    s.finish();
}

json optim_json(const OptimSection& o) {
    return {{"lr", o.lr},
            {"schedule", to_string(o.schedule)},
            {"warmup_frac", o.warmup_frac},
            {"warmup_steps", o.warmup_steps},
            {"min_lr", o.min_lr},
            {"decay_rate", o.decay_rate},
            {"weight_decay", o.weight_decay},
            {"clip_norm", o.clip_norm ? json(*o.clip_norm) : json(nullptr)},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps}};
}

json mixers_json(const std::vector<MixerKind>& mixers) {
    json a = json::array();
    for (auto m : mixers) a.push_back(to_string(m));
    return a;
}

template <class T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

}  // namespace

OptimConfig OptimSection::resolve(bool ssm_model) const {
    OptimConfig oc;
    oc.adam.beta1 = beta1;
    oc.adam.beta2 = beta2;
    oc.adam.eps = eps;
    oc.adam.weight_decay = weight_decay;
    oc.adam.clip_norm = clip_norm.value_or(ssm_model ? 1.0 : 0.0);
    oc.schedule.kind = schedule;
    oc.schedule.base_lr = lr;
    oc.schedule.min_lr = min_lr;
    oc.schedule.warmup_frac = warmup_frac;
    oc.schedule.warmup_steps = warmup_steps;
    oc.schedule.decay_rate = decay_rate;
    return oc;
}

ModelSpec ModelSection::to_spec(const TaskSpec& task) const {
    ModelSpec spec;
    spec.head = task.kind == TaskKind::char_lm ? HeadKind::lm : HeadKind::classify;
    spec.vocab = task.model_vocab();
    spec.max_len = max_len.value_or(task.seq_len);
    spec.width = width;
    spec.heads = heads;
    spec.ffn_hidden = ffn_hidden;
    spec.num_classes = task.num_classes();
    spec.mixers = blocks;
    spec.causal = causal.value_or(task.kind == TaskKind::char_lm);
    spec.ln_eps = ln_eps;
    return spec;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    Section root(j, "");
    root.get("seed", c.seed);
    std::optional<std::uint64_t> task_seed;
    if (auto s = root.sub("task")) {
        s->get_enum("kind", c.task.kind, parse_task_kind);
        s->get("vocab", c.task.vocab);
        s->get("seq_len", c.task.seq_len);
        s->get("train_size", c.task.train_size);
        s->get("val_size", c.task.val_size);
        s->get("test_size", c.task.test_size);
        s->get("seed", task_seed);
        std::optional<std::string> text;
        s->get("text_path", text);
        if (text) c.task.text_path = *text;
        s->finish();
    }
    c.task.seed = task_seed.value_or(c.seed);
    if (auto s = root.sub("model")) {
        s->get_mixers("blocks", c.model.blocks);
        s->get("width", c.model.width);
        s->get("heads", c.model.heads);
        s->get("ffn_hidden", c.model.ffn_hidden);
        s->get("max_len", c.model.max_len);
        s->get("causal", c.model.causal);
        s->get("ln_eps", c.model.ln_eps);
        s->get("seed", c.model.seed);
        s->finish();
    }
    if (auto s = root.sub("teacher")) {
        s->get_enum("pretrain_task", c.teacher.pretrain_task, parse_task_kind);
        s->get("pretrain_steps", c.teacher.pretrain_steps);
        if (auto o = s->sub("pretrain_optim")) read_optim(*o, c.teacher.pretrain_optim);
        s->get("steps", c.teacher.steps);
        s->get("batch_size", c.teacher.batch_size);
        if (auto o = s->sub("optim")) read_optim(*o, c.teacher.optim);
        s->get("waypoint_interval", c.teacher.waypoint_interval);
        s->get("eval_interval", c.teacher.eval_interval);
        s->finish();
    }
    if (auto s = root.sub("conversion")) {
        s->get_mixers("mixers", c.conversion.mixers);
        s->get("linformer_rank", c.conversion.linformer_rank);
        s->get_enum("share", c.conversion.share, parse_share_mode);
        s->get("ssm_state", c.conversion.ssm_state);
        s->get("delta_init", c.conversion.delta_init);
        s->get("seed", c.conversion.seed);
        s->get("init_from", c.conversion.init_from);
        s->finish();
    }
    if (auto s = root.sub("distill")) {
        auto& d = c.distill;
        s->get_enum("mode", d.mode, parse_guidance_mode);
        s->get("alpha_ce", d.alpha_ce);
        s->get("alpha_kd", d.alpha_kd);
        s->get("alpha_ld", d.alpha_ld);
        s->get("beta", d.beta);
        s->get_enum("kd_form", d.kd_form, parse_kd_form);
        s->get("steps", d.steps);
        s->get("teacher_update_interval", d.teacher_update_interval);
        s->get("waypoint_interval", d.waypoint_interval);
        s->get("hybrid_switch", d.hybrid_switch);
        s->get("batch_size", d.batch_size);
        s->get("seed", d.seed);
        s->get("normalize_ld", d.normalize_ld);
        if (auto o = s->sub("optim")) read_optim(*o, d.optim);
        if (auto o = s->sub("teacher_optim")) read_optim(*o, d.teacher_optim);
        s->get("eval_interval", d.eval_interval);
        s->finish();
    }
    if (auto s = root.sub("io")) {
        s->get("checkpoint_interval", c.io.checkpoint_interval);
        s->get("resume_interval", c.io.resume_interval);
        s->get("log_stdout", c.io.log_stdout);
        s->finish();
    }
    if (auto s = root.sub("analysis")) {
        auto& a = c.analysis;
        s->get("shift_samples", a.shift_samples);
        s->get("trajectory_samples", a.trajectory_samples);
        s->get("bench_lengths", a.bench_lengths);
        s->get("bench_runs", a.bench_runs);
        s->get("bench_width", a.bench_width);
        s->get("bench_heads", a.bench_heads);
        s->get("bench_ffn_hidden", a.bench_ffn_hidden);
        s->get("bench_batch", a.bench_batch);
        s->finish();
    }
    root.finish();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["task"] = {{"kind", to_string(task.kind)}, {"vocab", task.vocab},           {"seq_len", task.seq_len},
                 {"train_size", task.train_size}, {"val_size", task.val_size},     {"test_size", task.test_size},
                 {"seed", task.seed},             {"text_path", task.text_path.string()}};
    j["model"] = {{"blocks", mixers_json(model.blocks)},
                  {"width", model.width},
                  {"heads", model.heads},
                  {"ffn_hidden", model.ffn_hidden},
                  {"max_len", model.max_len.value_or(task.seq_len)},
                  {"causal", model.causal.value_or(task.kind == TaskKind::char_lm)},
                  {"ln_eps", model.ln_eps},
                  {"seed", model_seed()}};
    j["teacher"] = {{"pretrain_task", to_string(teacher.pretrain_task)},
                    {"pretrain_steps", teacher.pretrain_steps},
                    {"pretrain_optim", optim_json(teacher.pretrain_optim)},
                    {"steps", teacher.steps},
                    {"batch_size", teacher.batch_size},
                    {"optim", optim_json(teacher.optim)},
                    {"waypoint_interval", teacher.waypoint_interval},
                    {"eval_interval", teacher.eval_interval}};
    j["conversion"] = {{"mixers", mixers_json(conversion.mixers)},
                       {"linformer_rank", conversion.linformer_rank},
                       {"share", to_string(conversion.share)},
                       {"ssm_state", conversion.ssm_state},
                       {"delta_init", conversion.delta_init},
                       {"seed", conversion_seed()},
                       {"init_from", conversion.init_from}};
    const auto& d = distill;
    j["distill"] = {{"mode", to_string(d.mode)},
                    {"alpha_ce", d.alpha_ce},
                    {"alpha_kd", d.alpha_kd},
                    {"alpha_ld", d.alpha_ld},
                    {"beta", d.beta},
                    {"kd_form", to_string(d.kd_form)},
                    {"steps", d.steps},
                    {"teacher_update_interval", d.teacher_update_interval},
                    {"waypoint_interval", d.waypoint_interval},
                    {"hybrid_switch", d.hybrid_switch},
                    {"batch_size", d.batch_size},
                    {"seed", distill_seed()},
                    {"normalize_ld", opt_json(d.normalize_ld)},
                    {"optim", optim_json(d.optim)},
                    {"teacher_optim", optim_json(d.teacher_optim)},
                    {"eval_interval", d.eval_interval}};
    j["io"] = {{"checkpoint_interval", io.checkpoint_interval},
               {"resume_interval", io.resume_interval},
               {"log_stdout", io.log_stdout}};
    const auto& a = analysis;
    j["analysis"] = {{"shift_samples", a.shift_samples}, {"trajectory_samples", a.trajectory_samples},
                     {"bench_lengths", a.bench_lengths}, {"bench_runs", a.bench_runs},
                     {"bench_width", a.bench_width},     {"bench_heads", a.bench_heads},
                     {"bench_ffn_hidden", a.bench_ffn_hidden}, {"bench_batch", a.bench_batch}};
    return j;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    task.seed = s;
    model.seed = s;
    conversion.seed = s;
    distill.seed = s;
}

void RunConfig::validate() const {
    task.validate();
    teacher_spec().validate();
    if (conversion.mixers.size() != 1 && conversion.mixers.size() != model.blocks.size()) {
        throw ConfigError("conversion.mixers needs one entry or one per model block");
    }
    if (conversion.init_from != "auto" && conversion.init_from != "source" && conversion.init_from != "target") {
        throw ConfigError("conversion.init_from must be auto, source or target");
    }
    if (teacher.steps < 0 || teacher.pretrain_steps < 0) throw ConfigError("teacher steps must be non-negative");
    if (teacher.waypoint_interval < 1) throw ConfigError("teacher.waypoint_interval must be >= 1");
    if (teacher.batch_size == 0) throw ConfigError("teacher.batch_size must be positive");
    if (io.checkpoint_interval < 0 || io.resume_interval < 0) throw ConfigError("io intervals must be >= 0");
    if (analysis.bench_runs < 3) throw ConfigError("analysis.bench_runs must be >= 3");
    if (analysis.bench_lengths.size() < 4) throw ConfigError("analysis.bench_lengths needs at least 4 lengths");
    distill_config(false).validate();
}

ConversionPlan RunConfig::plan(const Model& teacher) const {
    ConversionPlan p;
    if (conversion.mixers.size() == 1) {
        p.mixers.assign(teacher.spec().depth(), conversion.mixers.front());
    } else {
        p.mixers = conversion.mixers;
    }
    p.linformer_rank = conversion.linformer_rank;
    p.share = conversion.share;
    p.ssm_state = conversion.ssm_state;
    p.seed = conversion_seed();
    p.delta_init = conversion.delta_init;
    return p;
}

DistillConfig RunConfig::distill_config(bool ssm_student) const {
    const auto& d = distill;
    DistillConfig c;
    c.mode = d.mode;
    c.weights = {d.alpha_ce, d.alpha_kd, d.alpha_ld};
    c.beta = d.beta;
    c.kd_form = d.kd_form;
    c.steps = d.steps;
    c.teacher_update_interval = d.teacher_update_interval;
    c.waypoint_interval = d.waypoint_interval;
    c.hybrid_switch = d.hybrid_switch;
    c.batch_size = d.batch_size;
    c.seed = distill_seed();
    c.normalize_ld = d.normalize_ld;
    c.optim = d.optim.resolve(ssm_student);
    c.teacher_optim = d.teacher_optim.resolve(false);
    c.eval_interval = d.eval_interval;
    return c;
}

DistillConfig RunConfig::teacher_config(std::int64_t steps, const OptimSection& optim) const {
    DistillConfig c;
    c.mode = GuidanceMode::unguided;
    c.weights = {1.0, 0.0, 0.0};
    c.steps = steps;
    c.waypoint_interval = teacher.waypoint_interval;
    c.batch_size = teacher.batch_size;
    c.seed = model_seed();
    c.optim = optim.resolve(false);
    c.eval_interval = teacher.eval_interval;
    return c;
}

}  // namespace lindistill::cli
