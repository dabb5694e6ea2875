import math

import numpy as np
import pytest

import lindistill as ld


def small_spec(mixers, vocab=6, max_len=8):
    spec = ld.ModelSpec()
    spec.vocab = vocab
    spec.max_len = max_len
    spec.width = 8
    spec.heads = 2
    spec.ffn_hidden = 12
    spec.num_classes = 2
    spec.mixers = mixers
    spec.linformer_rank = 4
    spec.ssm_state = 3
    return spec


def scan_oracle(u, delta, a, b, c):
    batch, time, width = u.shape
    y = np.zeros_like(u)
    for bi in range(batch):
        for d in range(width):
            h = np.zeros(a.shape[1])
            for t in range(time):
                abar = np.exp(delta[bi, t, d] * a[d])
                h = abar * h + (abar - 1.0) / a[d] * b[d] * u[bi, t, d]
                y[bi, t, d] = c[d] @ h
    return y


def test_kd_example():
    teacher = np.log(np.array([[0.5, 0.5]]))
    student = np.log(np.array([[0.9, 0.1]]))
    assert ld.loss_kd(student, teacher, beta=1.0) == pytest.approx(0.51083, abs=1e-5)
    z = np.random.default_rng(0).normal(size=(4, 5))
    assert ld.loss_kd(z, z) == 0.0
    hidden = [np.ones((2, 3, 4)), np.zeros((2, 3, 4))]
    assert ld.loss_ld(hidden, hidden) == 0.0


def test_scan_matches_numpy_recurrence():
    rng = np.random.default_rng(1)
    u = rng.normal(size=(2, 40, 3))
    delta = np.log1p(np.exp(rng.normal(size=(2, 40, 3))))
    a = -np.exp(rng.normal(size=(3, 4)))
    b = rng.normal(size=(3, 4))
    c = rng.normal(size=(3, 4))
    y = ld.ssm_scan(u, delta, a, b, c)
    assert np.max(np.abs(y - scan_oracle(u, delta, a, b, c))) < 1e-10
    back = ld.ssm_scan(u, delta, a, b, c, reverse=True)
    expect = scan_oracle(u[:, ::-1], delta[:, ::-1], a, b, c)[:, ::-1]
    assert np.max(np.abs(back - expect)) < 1e-10


def test_identity_conversion_and_forward():
    teacher = ld.init_model(small_spec([ld.MixerKind.attention, ld.MixerKind.attention]), 3)
    student = ld.convert(teacher, [ld.MixerKind.attention])
    tokens = np.random.default_rng(2).integers(0, 6, size=(3, 8)).astype(np.int32)
    t_logits, t_hidden = teacher.forward(tokens)
    s_logits, s_hidden = student.forward(tokens)
    assert t_logits.shape == (3, 2)
    assert len(t_hidden) == 2 and t_hidden[0].shape == (3, 8, 8)
    assert np.array_equal(t_logits, s_logits)
    assert ld.loss_ld(s_hidden, t_hidden) == 0.0

    ssm = ld.convert(teacher, [ld.MixerKind.ssm], ssm_state=3)
    assert "blocks.0.ssm.a_log" in ssm.parameter_names()
    assert np.array_equal(ssm.parameter("embed.token"), teacher.parameter("embed.token"))


def test_distillation_is_deterministic_and_decomposes():
    train, val, _ = ld.generate(ld.TaskKind.first_last_match, vocab=6, seq_len=8, train_size=48, val_size=16,
                                test_size=8, seed=3)
    assert train.tokens.shape == (48, 8)
    assert set(np.unique(train.labels)) <= {0, 1}
    teacher = ld.init_model(small_spec([ld.MixerKind.attention, ld.MixerKind.attention]), 11)
    student = ld.convert(teacher, [ld.MixerKind.linformer], linformer_rank=4, seed=5)

    cfg = ld.DistillConfig()
    cfg.mode = ld.GuidanceMode.target
    cfg.steps = 5
    cfg.batch_size = 4
    cfg.weights = (1.0, 0.5, 2.0)
    cfg.lr = 1e-2
    a, records_a, _ = ld.train(student, teacher, [], train, cfg)
    b, records_b, _ = ld.train(student, teacher, [], train, cfg)
    assert records_a == records_b
    for rec in records_a:
        assert rec["teacher"] == "target"
        assert abs(rec["total"] - (rec["ce"] + 0.5 * rec["kd"] + 2.0 * rec["ld"])) <= 1e-12
    for name in a.parameter_names():
        assert np.array_equal(a.parameter(name), b.parameter(name))
    metrics = ld.evaluate(a, val)
    assert 0.0 <= metrics["accuracy"] <= 1.0 and metrics["count"] == 16

    cfg.mode = ld.GuidanceMode.waypoint
    cfg.waypoint_interval = 2
    _, records, _ = ld.train(student, None, [teacher.clone(), teacher.clone()], train, cfg)
    assert [r["teacher_index"] for r in records] == [1, 1, 2, 2, 2]


def test_checkpoint_round_trip(tmp_path):
    model = ld.init_model(small_spec([ld.MixerKind.linformer, ld.MixerKind.bidirectional_ssm]), 4)
    path = tmp_path / "m.ckpt"
    ld.save_checkpoint(path, model, step=9, metadata="smoke")
    loaded = ld.load_model(path)
    assert loaded.spec == model.spec
    for name in model.parameter_names():
        assert np.array_equal(loaded.parameter(name), model.parameter(name))
    with pytest.raises(ld.MissingArtifact):
        ld.load_model(tmp_path / "absent.ckpt")
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(ld.FormatError):
        ld.load_model(path)


def test_pca_and_cosine():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 10)) * np.linspace(3.0, 0.1, 10)
    coords, axes, explained = ld.pca2(x)
    centered = x - x.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    for k in range(2):
        ref = vecs[:, -1 - k]
        assert min(np.max(np.abs(axes[:, k] - ref)), np.max(np.abs(axes[:, k] + ref))) < 1e-8
    assert np.allclose(coords, centered @ axes, atol=1e-10)
    assert explained[0] >= explained[1] > 0.0
    assert ld.cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(1.0)
    assert ld.cosine_distance(np.zeros(3), np.zeros(3)) == 0.0
    assert math.isclose(ld.cosine_distance(np.array([1.0, 1.0]), np.array([2.0, 2.0])), 0.0, abs_tol=1e-15)
