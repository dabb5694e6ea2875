#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "lindistill/convert.hpp"
#include "lindistill/distill.hpp"
#include "lindistill/errors.hpp"
#include "lindistill/persist.hpp"
#include "lindistill/tasks.hpp"

using namespace lindistill;

namespace {

Dataset small_data(std::uint64_t seed = 3, std::size_t size = 48) {
    TaskSpec ts;
    ts.kind = TaskKind::first_last_match;
    ts.vocab = 6;
    ts.seq_len = 8;
    ts.train_size = size;
    ts.val_size = 8;
    ts.test_size = 8;
    ts.seed = seed;
    return generate(ts).train;
}

ModelSpec cls_spec(std::vector<MixerKind> mixers) {
    auto s = th::tiny_spec(std::move(mixers));
    s.num_classes = 2;
    return s;
}

Model teacher_model(std::uint64_t seed = 11) {
    return init_model(cls_spec({MixerKind::attention, MixerKind::attention}), seed);
}

Model student_of(const Model& teacher, MixerKind kind = MixerKind::linformer) {
    auto plan = ConversionPlan::uniform(teacher, kind);
    plan.linformer_rank = 4;
    plan.ssm_state = 3;
    plan.seed = 5;
    return transfer_parameters(teacher, plan);
}

DistillConfig base_config(GuidanceMode mode, std::int64_t steps = 6) {
    DistillConfig c;
    c.mode = mode;
    c.steps = steps;
    c.batch_size = 4;
    c.seed = 21;
    c.weights = {1.0, 0.5, 2.0};
    c.optim.schedule.base_lr = 1e-2;
    c.teacher_optim.schedule.base_lr = 5e-3;
    return c;
}

void check_same_records(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].same_losses(b[i]));
}

}  // namespace

TEST_CASE("zero steps return the student unchanged") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    const Model s = student_of(t);
    for (auto mode : {GuidanceMode::unguided, GuidanceMode::target, GuidanceMode::hybrid}) {
        auto cfg = base_config(mode, 0);
        const auto r = train(s, t, {}, data, cfg);
        CHECK(r.records.empty());
        CHECK(th::same_parameters(r.student, s));
    }
}

TEST_CASE("the caller's models are not mutated") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    const Model t_copy = t.clone();
    const Model s = student_of(t);
    const Model s_copy = s.clone();
    for (auto mode : {GuidanceMode::target, GuidanceMode::hybrid, GuidanceMode::trajectory}) {
        train(s, t, {}, data, base_config(mode, 4));
        CHECK(th::same_parameters(t, t_copy));
        CHECK(th::same_parameters(s, s_copy));
    }
    auto wp = WaypointSource::from_models({t.clone()});
    train(s, std::nullopt, wp, data, base_config(GuidanceMode::waypoint, 4));
    CHECK(th::same_parameters(t, t_copy));
}

TEST_CASE("frozen teachers are never updated inside a session") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    for (auto mode : {GuidanceMode::target, GuidanceMode::hybrid}) {
        Distiller d(student_of(t), t, data, base_config(mode, 5));
        while (d.completed() < 5) d.step();
        CHECK(th::same_parameters(*d.teacher(), t));
    }
    Distiller d(student_of(t), std::nullopt, data, base_config(GuidanceMode::waypoint, 5),
                WaypointSource::from_models({t.clone()}));
    while (d.completed() < 5) d.step();
    CHECK(th::same_parameters(*d.teacher(), t));
}

TEST_CASE("single-example overfitting lowers the loss") {
    const Dataset data = small_data(3, 1);
    const Model t = teacher_model();
    auto cfg = base_config(GuidanceMode::unguided, 40);
    cfg.batch_size = 1;
    cfg.optim.schedule.base_lr = 2e-2;
    const auto r = train_unguided(student_of(t), data, cfg);
    CHECK(r.records.back().ce < 0.25 * r.records.front().ce);
}

TEST_CASE("training is deterministic") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    for (auto mode : {GuidanceMode::target, GuidanceMode::trajectory}) {
        const auto a = train(student_of(t), t, {}, data, base_config(mode));
        const auto b = train(student_of(t), t, {}, data, base_config(mode));
        check_same_records(a.records, b.records);
        CHECK(th::same_parameters(a.student, b.student));
    }
}

TEST_CASE("every record satisfies the weighted decomposition") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    const LossWeights w{1.0, 0.7, 3.0};
    for (auto mode : {GuidanceMode::target, GuidanceMode::trajectory, GuidanceMode::waypoint, GuidanceMode::hybrid}) {
        auto cfg = base_config(mode);
        cfg.weights = w;
        cfg.teacher_update_interval = 2;
        const auto r = train(student_of(t, MixerKind::ssm), t, WaypointSource::from_models({t.clone()}), data, cfg);
        for (const auto& rec : r.records) {
            CHECK(std::abs(rec.total - (w.ce * rec.ce + w.kd * rec.kd + w.ld * rec.ld)) <= 1e-12);
            CHECK(rec.kd >= 0.0);
            CHECK(rec.ld >= 0.0);
        }
    }
}

TEST_CASE("mode reduction lattice") {
    const Dataset data = small_data();
    const Model source = teacher_model(11);
    const Model target = teacher_model(12);
    const Model s = student_of(source);
    const std::int64_t T = 6;

    SUBCASE("hybrid switching at T equals target") {
        auto h = base_config(GuidanceMode::hybrid, T);
        h.hybrid_switch = T;
        const auto a = train(s, target, {}, data, h);
        const auto b = train(s, target, {}, data, base_config(GuidanceMode::target, T));
        check_same_records(a.records, b.records);
        CHECK(th::same_parameters(a.student, b.student));
    }
    SUBCASE("a single waypoint equals target") {
        const auto a = train(s, std::nullopt, WaypointSource::from_models({target.clone()}), data,
                             base_config(GuidanceMode::waypoint, T));
        const auto b = train(s, target, {}, data, base_config(GuidanceMode::target, T));
        check_same_records(a.records, b.records);
        CHECK(th::same_parameters(a.student, b.student));
    }
    SUBCASE("a trajectory teacher that never updates equals target against the source") {
        auto tr = base_config(GuidanceMode::trajectory, T);
        tr.teacher_update_interval = T + 1;
        const auto a = train(s, source, {}, data, tr);
        const auto b = train(s, source, {}, data, base_config(GuidanceMode::target, T));
        check_same_records(a.records, b.records);
        CHECK(th::same_parameters(a.student, b.student));
        CHECK(th::same_parameters(*a.teacher, source));
    }
    SUBCASE("zero distillation weights reduce every mode to unguided") {
        auto u = base_config(GuidanceMode::unguided, T);
        u.weights.kd = u.weights.ld = 0.0;
        const auto ref = train(s, std::nullopt, {}, data, u);
        for (auto mode : {GuidanceMode::target, GuidanceMode::hybrid, GuidanceMode::trajectory,
                          GuidanceMode::waypoint}) {
            auto cfg = u;
            cfg.mode = mode;
            cfg.teacher_update_interval = T + 1;
            const auto r = train(s, target, WaypointSource::from_models({source.clone(), target.clone()}), data, cfg);
            check_same_records(r.records, ref.records);
            CHECK(th::same_parameters(r.student, ref.student));
        }
    }
}

TEST_CASE("hybrid drops the teacher after the switch step") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    auto cfg = base_config(GuidanceMode::hybrid, 10);
    CHECK(cfg.switch_step() == 3);
    const auto r = train(student_of(t), t, {}, data, cfg);
    for (const auto& rec : r.records) {
        CHECK(rec.teacher == (rec.step <= 3 ? "target" : "none"));
        if (rec.step > 3) CHECK(rec.total == rec.ce);
    }
    cfg.hybrid_switch = 0;
    auto u = base_config(GuidanceMode::unguided, 10);
    check_same_records(train(student_of(t), t, {}, data, cfg).records,
                       train(student_of(t), std::nullopt, {}, data, u).records);
}

TEST_CASE("trajectory teacher matches a standalone fine-tune") {
    const Dataset data = small_data();
    const Model source = teacher_model();
    auto cfg = base_config(GuidanceMode::trajectory, 7);
    cfg.teacher_update_interval = 1;
    const auto r = train_trajectory_guided(student_of(source), source, data, cfg);
    std::int64_t updates = 0;
    for (const auto& rec : r.records) updates += rec.teacher_ce.has_value();
    CHECK(updates == 7);

    auto ft = cfg;
    ft.optim = cfg.teacher_optim;
    const auto oracle = fine_tune_teacher(source, data, ft, nullptr);
    REQUIRE(oracle.records.size() == r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i) CHECK(*r.records[i].teacher_ce == oracle.records[i].ce);
    CHECK(th::same_parameters(*r.teacher, oracle.student));
}

TEST_CASE("trajectory teacher updates every T_u steps") {
    const Dataset data = small_data();
    const Model source = teacher_model();
    auto cfg = base_config(GuidanceMode::trajectory, 9);
    cfg.teacher_update_interval = 3;
    const auto r = train_trajectory_guided(student_of(source), source, data, cfg);
    for (const auto& rec : r.records) CHECK(rec.teacher_ce.has_value() == (rec.step % 3 == 0));
}

TEST_CASE("waypoint schedule follows the increment bookkeeping") {
    const Dataset data = small_data();
    std::vector<Model> wps;
    for (std::uint64_t k = 0; k < 4; ++k) wps.push_back(teacher_model(30 + k));
    auto cfg = base_config(GuidanceMode::waypoint, 10);
    cfg.waypoint_interval = 3;
    const auto r = train_waypoint_guided(student_of(wps[0]), WaypointSource::from_models(wps), data, cfg);
    std::vector<std::int64_t> column;
    for (const auto& rec : r.records) column.push_back(rec.teacher_index);
    CHECK(column == std::vector<std::int64_t>{1, 1, 1, 2, 2, 2, 3, 3, 3, 4});

    for (std::int64_t tw : {1, 2, 4, 7}) {
        for (std::int64_t count : {1, 2, 3}) {
            auto c = base_config(GuidanceMode::waypoint, 9);
            c.waypoint_interval = tw;
            std::vector<Model> sub(wps.begin(), wps.begin() + count);
            const auto rr = train_waypoint_guided(student_of(wps[0]), WaypointSource::from_models(sub), data, c);
            for (const auto& rec : rr.records) {
                CHECK(rec.teacher_index == std::min<std::int64_t>((rec.step - 1) / tw + 1, count));
            }
        }
    }
}

TEST_CASE("waypoint store drives the same schedule as in-memory waypoints") {
    const auto dir = std::filesystem::temp_directory_path() / "lindistill_test_wp_schedule";
    std::filesystem::remove_all(dir);
    const Dataset data = small_data();
    const Model source = teacher_model();
    auto ft = base_config(GuidanceMode::unguided, 10);
    ft.waypoint_interval = 3;
    auto store = WaypointStore::create(dir, 3);
    const auto teacher_run = fine_tune_teacher(source, data, ft, &store);
    REQUIRE(store.size() == 4);
    CHECK(store.entries().back().teacher_step == 10);
    CHECK(th::same_parameters(store.load(4), teacher_run.student));

    std::vector<Model> models;
    for (std::size_t i = 1; i <= store.size(); ++i) models.push_back(store.load(i));
    auto cfg = base_config(GuidanceMode::waypoint, 10);
    cfg.waypoint_interval = 3;
    const auto a = train_waypoint_guided(student_of(source), WaypointSource::from_store(store), data, cfg);
    const auto b = train_waypoint_guided(student_of(source), WaypointSource::from_models(models), data, cfg);
    check_same_records(a.records, b.records);
    std::filesystem::remove_all(dir);
}

TEST_CASE("identity conversion starts with zero layerwise loss") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    const Model s = transfer_parameters(t, ConversionPlan::identity(t));
    auto cfg = base_config(GuidanceMode::target, 3);
    cfg.optim.schedule.base_lr = 0.0;
    const auto r = train(s, t, {}, data, cfg);
    for (const auto& rec : r.records) {
        CHECK(std::abs(rec.ld) <= 1e-12);
        CHECK(std::abs(rec.kd) <= 1e-12);
    }
    CHECK(th::same_parameters(r.student, s));
}

TEST_CASE("numeric faults stop training at the failing step") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    Distiller d(student_of(t), t, data, base_config(GuidanceMode::target, 6));
    d.step();
    d.step();
    Model poisoned = d.student().clone();
    for (double& v : poisoned.param("embed.token").mutable_values()) v = NAN;
    const Model before = poisoned.clone();
    d.resume(2, poisoned, d.optimizer().export_state());
    try {
        d.step();
        FAIL("expected a training fault");
    } catch (const TrainingFault& e) {
        CHECK(e.step == 3);
    }
    CHECK(d.completed() == 2);
    CHECK(th::same_parameters(d.student(), before));
}

TEST_CASE("optimizer faults leave parameters untouched") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    auto cfg = base_config(GuidanceMode::target, 4);
    cfg.optim.schedule.base_lr = 1e300;
    Distiller d(student_of(t), t, data, cfg);
    CHECK_THROWS_AS(
        [&] {
            for (int k = 0; k < 4; ++k) d.step();
        }(),
        TrainingFault);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
    const Dataset data = small_data();
    const Model source = teacher_model(11);
    const Model target = teacher_model(12);
    const std::vector<Model> wps{teacher_model(13), teacher_model(14), target.clone()};
    for (auto mode : {GuidanceMode::target, GuidanceMode::trajectory, GuidanceMode::waypoint, GuidanceMode::hybrid}) {
        CAPTURE(to_string(mode));
        auto cfg = base_config(mode, 8);
        cfg.teacher_update_interval = 2;
        cfg.waypoint_interval = 3;
        cfg.optim.schedule.kind = ScheduleKind::cosine_warmup;
        cfg.optim.schedule.warmup_frac = 0.25;
        const Model& teacher = mode == GuidanceMode::trajectory ? source : target;
        const auto wp = WaypointSource::from_models(wps);
        const auto full = train(student_of(source), teacher, wp, data, cfg);

        for (std::int64_t cut : {1, 3, 4}) {
            Distiller first(student_of(source), teacher, data, cfg, wp);
            std::vector<StepRecord> records;
            while (first.completed() < cut) records.push_back(first.step());
            auto state = first.optimizer().export_state("adam");
            std::optional<Model> live;
            if (first.teacher_optimizer()) {
                const auto ts = first.teacher_optimizer()->export_state("teacher_adam");
                state.insert(state.end(), ts.begin(), ts.end());
                live = first.teacher()->clone();
            }
            const auto dir = std::filesystem::temp_directory_path() / "lindistill_test_resume";
            std::filesystem::create_directories(dir);
            save_checkpoint(dir / "s.ckpt", first.student(), cut, "", state);
            if (live) save_checkpoint(dir / "t.ckpt", *live, cut);
            const Checkpoint ck = load_checkpoint(dir / "s.ckpt");
            std::optional<Model> loaded_teacher;
            if (live) loaded_teacher = load_model(dir / "t.ckpt");

            Distiller second(student_of(source), teacher, data, cfg, wp);
            second.resume(ck.step, ck.model, ck.state, loaded_teacher);
            while (second.completed() < cfg.steps) records.push_back(second.step());
            check_same_records(records, full.records);
            CHECK(th::same_parameters(second.student(), full.student));
            if (full.teacher) CHECK(th::same_parameters(*second.teacher(), *full.teacher));
            std::filesystem::remove_all(dir);
        }
    }
}

TEST_CASE("ce targets mask language-model padding") {
    Batch b;
    b.size = 2;
    b.time = 3;
    b.tokens = {1, 2, 3, 4, 5, 0};
    b.labels = {2, 3, 4, 5, 1, 1};
    b.lengths = {3, 1};
    CHECK(ce_targets(b, HeadKind::lm) == std::vector<std::int32_t>{2, 3, 4, 5, -1, -1});
    Batch c = b;
    c.labels = {1, 0};
    CHECK(ce_targets(c, HeadKind::classify) == std::vector<std::int32_t>{1, 0});
}

TEST_CASE("language-model distillation runs with ragged batches") {
    TaskSpec ts;
    ts.kind = TaskKind::char_lm;
    ts.seq_len = 8;
    ts.train_size = 16;
    ts.val_size = 4;
    ts.test_size = 4;
    const auto path = std::filesystem::temp_directory_path() / "lindistill_test_text.txt";
    {
        std::string text;
        for (int k = 0; k < 60; ++k) text += "the quick brown fox jumps over the lazy dog. ";
        std::FILE* f = std::fopen(path.string().c_str(), "wb");
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
    }
    ts.text_path = path;
    const auto splits = generate(ts);
    ModelSpec spec = th::tiny_spec({MixerKind::attention}, HeadKind::lm);
    spec.vocab = ts.model_vocab();
    const Model t = init_model(spec, 4);
    auto cfg = base_config(GuidanceMode::target, 3);
    const auto r = train(student_of(t, MixerKind::ssm), t, {}, splits.train, cfg);
    CHECK(r.records.size() == 3);
    for (const auto& rec : r.records) CHECK(std::isfinite(rec.total));
    std::filesystem::remove(path);
}

TEST_CASE("config validation") {
    const Dataset data = small_data();
    const Model t = teacher_model();
    auto bad = [&](auto mutate) {
        auto cfg = base_config(GuidanceMode::target);
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS(bad([](DistillConfig& c) { c.beta = 0.0; }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) { c.weights.ld = -1.0; }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) { c.steps = -1; }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) { c.teacher_update_interval = 0; }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) { c.waypoint_interval = 0; }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) {
                     c.mode = GuidanceMode::hybrid;
                     c.hybrid_switch = 100;
                 }).validate());
    CHECK_THROWS(bad([](DistillConfig& c) { c.batch_size = 0; }).validate());
    CHECK_NOTHROW(base_config(GuidanceMode::hybrid).validate());

    CHECK_THROWS(Distiller(student_of(t), std::nullopt, data, base_config(GuidanceMode::target)));
    CHECK_THROWS(Distiller(student_of(t), std::nullopt, data, base_config(GuidanceMode::waypoint)));
    const Model shallow = init_model(cls_spec({MixerKind::attention}), 1);
    CHECK_THROWS_AS(Distiller(student_of(t), shallow, data, base_config(GuidanceMode::target)), ShapeError);

    CHECK(parse_guidance_mode("trajectory") == GuidanceMode::trajectory);
    for (auto m : {GuidanceMode::unguided, GuidanceMode::target, GuidanceMode::trajectory, GuidanceMode::waypoint,
                   GuidanceMode::hybrid}) {
        CHECK(parse_guidance_mode(to_string(m)) == m);
    }
    CHECK_THROWS(parse_guidance_mode("sideways"));
}

TEST_CASE("step records serialize as one json line") {
    StepRecord r;
    r.step = 4;
    r.ce = 0.5;
    r.teacher = "waypoint";
    r.teacher_index = 2;
    const auto line = r.to_json();
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.find("\"teacher_index\":2") != std::string::npos);
    CHECK(line.find("\"teacher_ce\":null") != std::string::npos);
}

TEST_CASE("learning-rate schedules match their closed forms") {
    const double pi = 3.14159265358979323846;
    LrSchedule lin{ScheduleKind::linear_warmup, 1e-3, 0.0, 0.06, 0, 0.999, 1000};
    CHECK(lin.warmup() == 60);
    CHECK(lin.at(30) == doctest::Approx(1e-3 * 30 / 60).epsilon(1e-14));
    CHECK(lin.at(60) == doctest::Approx(1e-3));
    CHECK(lin.at(530) == doctest::Approx(1e-3 * 470.0 / 940.0).epsilon(1e-14));
    CHECK(lin.at(1000) == 0.0);

    LrSchedule cos{ScheduleKind::cosine_warmup, 2e-3, 1e-5, 0.03, 0, 0.999, 2000};
    CHECK(cos.warmup() == 60);
    CHECK(cos.at(1) == doctest::Approx(2e-3 / 60).epsilon(1e-14));
    CHECK(cos.at(1030) == doctest::Approx(1e-5 + (2e-3 - 1e-5) * 0.5 * (1 + std::cos(pi * 970.0 / 1940.0))));
    CHECK(cos.at(2000) == doctest::Approx(1e-5));

    LrSchedule ex{ScheduleKind::exponential_warmup, 1e-3, 1e-6, 0.0, 5000, 0.999, 20000};
    CHECK(ex.warmup() == 5000);
    CHECK(ex.at(2500) == doctest::Approx(5e-4));
    CHECK(ex.at(5100) == doctest::Approx(1e-3 * std::pow(0.999, 100)).epsilon(1e-12));
    CHECK(ex.at(19000) == doctest::Approx(1e-6));

    LrSchedule constant;
    CHECK(constant.at(1) == constant.base_lr);
    CHECK(parse_schedule_kind(to_string(ScheduleKind::cosine_warmup)) == ScheduleKind::cosine_warmup);
}

namespace {

Model scalar_model(double w, double g) {
    ModelSpec spec;
    Model m(spec);
    Tensor p = Tensor::from_values({1}, {w}, true);
    p.mutable_grad()[0] = g;
    m.add_param("w", p);
    return m;
}

}  // namespace

TEST_CASE("AdamW matches a hand-computed update") {
    AdamWConfig ac;
    ac.weight_decay = 0.1;
    LrSchedule sched;
    sched.base_lr = 0.01;
    AdamW opt(ac, sched);
    Model m = scalar_model(2.0, 0.5);
    opt.step(m);
    // decay: 2 - 0.01*0.1*2 = 1.998; m_hat = 0.5, v_hat = 0.25 -> step 0.01*0.5/(0.5+1e-8)
    const double expected1 = 1.998 - 0.01 * 0.5 / (0.5 + 1e-8);
    CHECK(m.param("w").item() == doctest::Approx(expected1).epsilon(1e-15));
    CHECK_FALSE((m.param("w").has_grad() && m.param("w").grad()[0] != 0.0));

    m.param("w").mutable_grad()[0] = -1.0;
    opt.step(m);
    const double m2 = 0.9 * 0.05 + 0.1 * -1.0;
    const double v2 = 0.999 * 0.00025 + 0.001 * 1.0;
    const double decayed = expected1 - 0.01 * 0.1 * expected1;
    const double expected2 = decayed - 0.01 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
    CHECK(m.param("w").item() == doctest::Approx(expected2).epsilon(1e-14));
    CHECK(opt.steps_taken() == 2);
}

TEST_CASE("AdamW clipping rescales the gradient") {
    AdamWConfig ac;
    ac.clip_norm = 1.0;
    LrSchedule sched;
    sched.base_lr = 0.1;
    ac.beta1 = 0.0;
    ac.beta2 = 0.0;
    ac.eps = 0.0;
    AdamW opt(ac, sched);
    Model m = scalar_model(0.0, 10.0);
    CHECK(opt.step(m) == doctest::Approx(10.0));
    // With beta1 = beta2 = 0 the step is lr * sign(g) regardless of scale.
    CHECK(m.param("w").item() == doctest::Approx(-0.1));
}

TEST_CASE("AdamW state round-trips and faults on NaN") {
    AdamW a({}, LrSchedule{});
    Model m = scalar_model(1.0, 0.3);
    a.step(m);
    m.param("w").mutable_grad()[0] = 0.2;
    AdamW b({}, LrSchedule{});
    b.import_state(a.export_state());
    Model m2 = m.clone();
    m2.param("w").mutable_grad()[0] = 0.2;
    a.step(m);
    b.step(m2);
    CHECK(m.param("w").item() == m2.param("w").item());

    m.param("w").mutable_grad()[0] = NAN;
    const double before = m.param("w").item();
    CHECK_THROWS_AS(a.step(m), NumericFault);
    CHECK(m.param("w").item() == before);
}
