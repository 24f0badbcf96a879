import numpy as np
import pytest

import headstrain as hs


def small_dataset(seed, n=40, **drift):
    cfg = hs.DriftConfig()
    cfg.seed = seed
    for key, value in drift.items():
        setattr(cfg, key, value)
    return hs.synth_dataset(cfg, n)


def test_synth_and_features():
    ds = small_dataset(3)
    assert len(ds) == 40
    assert ds.has_labels
    assert ds.labels("MPS").shape == (40, 128)
    assert ds.lin_acc(0).shape[0] == 3
    fm = hs.featurize(ds)
    assert fm.shape == (40, 512)
    assert fm.values.shape == (40, 512)
    assert len(fm.names) == 512
    assert fm.ids == ds.ids
    again = hs.featurize(small_dataset(3))
    np.testing.assert_array_equal(fm.values, again.values)


def test_augment_multiplies_by_six():
    ds = small_dataset(4, n=5)
    assert len(hs.augment_axes(ds)) == 30


def test_drca_toy():
    xs = np.array([[0.0, 0.0], [2.0, 0.0]])
    xt = np.array([[1.0, 1.0], [1.0, 3.0]])
    cfg = hs.DrcaConfig()
    cfg.dim = 1
    cfg.standardize = False
    pm = hs.fit_drca(xs, xt, cfg)
    assert abs(pm.projection[0, 0]) > 0.999
    assert pm.eigenvalues[0] == pytest.approx(2.0 / pm.ridge, rel=1e-6)
    assert pm.transform(xs).shape == (2, 1)


def test_generalized_eig_residual():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(6, 6))
    m = (g + g.T) / 2
    h = rng.normal(size=(6, 6))
    b = h @ h.T + 0.1 * np.eye(6)
    values, vectors = hs.generalized_eig(m, b)
    for k in range(6):
        p = vectors[:, k]
        assert np.linalg.norm(m @ p - values[k] * b @ p) < 1e-8 * (np.linalg.norm(m) + abs(values[k]) * np.linalg.norm(b))
    with pytest.raises(hs.NotPositiveDefiniteError):
        hs.cholesky(-np.eye(3))


def test_train_and_predict():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 4))
    y = x @ rng.normal(size=(4, 2))
    cfg = hs.TrainConfig()
    cfg.epochs = 60
    cfg.seed = 5
    model = hs.train_mlhm(x, y, cfg)
    assert model.predict(x).shape == (200, 2)
    assert model.train_loss[-1] < model.train_loss[0]
    with pytest.raises(hs.ConfigError):
        hs.train_mlhm(x, y, cfg, arch="huge")


def test_gan_and_kmm():
    rng = np.random.default_rng(2)
    xs = rng.normal(size=(80, 2))
    xt = rng.normal(loc=1.0, size=(60, 2))
    cfg = hs.GanConfig()
    cfg.epochs = 2
    cfg.generator_widths = [8]
    cfg.discriminator_widths = [8]
    gan = hs.train_cyclegan(xs, xt, cfg)
    assert gan.translate_to_source(xt).shape == xt.shape
    assert len(gan.history) == 2
    res = hs.kmm_weights(xs, xt)
    assert res.objective <= res.uniform_objective
    assert res.weights.min() >= 0.0
    assert abs(res.weights.mean() - 1.0) <= 0.1 + 1e-12


def test_statistics():
    r = hs.paired_t_test([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    assert r.t == pytest.approx(-2.0 * np.sqrt(3.0))
    assert r.p_two_sided == pytest.approx(0.0742, abs=5e-4)
    assert hs.relative_change(0.036, 0.017) == pytest.approx(-52.78, abs=0.01)
    assert 2 * (1 - hs.student_t_cdf(2.228, 10)) == pytest.approx(0.05, abs=5e-4)
    with pytest.raises(hs.DegenerateTestError):
        hs.paired_t_test([1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    mae, rmse, per = hs.error_metrics(np.zeros((2, 3)), np.ones((2, 3)))
    assert (mae, rmse, per) == (1.0, 1.0, [1.0, 1.0])


def test_config_errors():
    with pytest.raises(hs.ConfigError, match="did you mean 'drca'"):
        hs.resolve_config({"source": {"synth": {}}, "targets": [{"synth": {}}], "dcra": {}})
    resolved = hs.resolve_config({"source": {"synth": {}}, "targets": [{"synth": {}}]}, seed=4)
    assert resolved["seed"] == 4
    assert resolved["methods"][0] == "baseline"


def test_run_pipeline(tmp_path):
    config = {
        "seed": 2,
        "source": {"n": 120, "synth": {}},
        "targets": [{"name": "field", "n": 40, "synth": {"channel_gain": [1.1, 0.9, 1.1]}}],
        "methods": "drca",
        "drca": {"dim": 8},
        "train": {"epochs": 20},
    }
    result = hs.run(config, out=tmp_path / "run")
    assert {row["method"] for row in result["rows"]} == {"baseline", "drca"}
    assert (tmp_path / "run" / "report.csv").read_text() == result["csv"]
    assert set(result["source_test_mae"]) == {"MPS", "MPSR"}
    again = hs.evaluate_directory(str(tmp_path / "run"))
    assert again["csv"] == result["csv"]
