import numpy as np
import pytest
from scipy import stats

from streamal.stream import (
    ObservationStream,
    ScenarioConfig,
    draw_betas,
    dump_stream,
    gen_initial_design,
    gen_test_set,
    load_stream,
    replica_generators,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_degenerate_beta_range():
    cfg = ScenarioConfig(beta_normal_low=2.0, beta_normal_high=2.0, beta_outlier_low=-1.0, beta_outlier_high=-1.0)
    b = draw_betas(rng(), cfg)
    np.testing.assert_array_equal(b.normal, 2.0)
    np.testing.assert_array_equal(b.outlier, -1.0)


def test_beta_means():
    cfg = ScenarioConfig()
    g = rng(1)
    draws = [draw_betas(g, cfg) for _ in range(10_000)]
    assert np.mean([d.normal for d in draws], axis=0) == pytest.approx(np.zeros(20), abs=0.1)
    assert np.mean([d.outlier for d in draws], axis=0) == pytest.approx(np.full(20, 12.5), abs=0.1)


def test_beta_determinism():
    cfg = ScenarioConfig()
    a, b = draw_betas(rng(5), cfg), draw_betas(rng(5), cfg)
    np.testing.assert_array_equal(a.normal, b.normal)
    np.testing.assert_array_equal(a.outlier, b.outlier)


@pytest.mark.parametrize("cont,expect", [(0.0, 0), (1.0, 100_000)])
def test_contamination_extremes(cont, expect):
    cfg = ScenarioConfig(contamination=cont)
    s = ObservationStream(cfg, draw_betas(rng(), cfg), rng(1))
    _, _, f = s.take(100_000)
    assert f.sum() == expect


def test_contamination_rate_binomial():
    cfg = ScenarioConfig(contamination=0.05)
    s = ObservationStream(cfg, draw_betas(rng(), cfg), rng(2))
    _, _, f = s.take(100_000)
    assert 0.045 <= f.mean() <= 0.055
    # two-sided binomial test does not reject at 0.1%
    assert stats.binomtest(int(f.sum()), 100_000, 0.05).pvalue > 1e-3


def test_regimes_have_their_scales():
    cfg = ScenarioConfig(contamination=0.3)
    betas = draw_betas(rng(), cfg)
    X, y, f = ObservationStream(cfg, betas, rng(3)).take(40_000)
    assert X[~f].std() == pytest.approx(1.0, rel=0.03)
    assert X[f].std() == pytest.approx(3.0, rel=0.03)
    assert np.var(y[~f] - X[~f] @ betas.normal) == pytest.approx(1.0, rel=0.05)
    assert np.var(y[f] - X[f] @ betas.outlier) == pytest.approx(9.0, rel=0.05)


def test_normal_noise_variance_10k():
    cfg = ScenarioConfig()
    betas = draw_betas(rng(), cfg)
    X, y, _ = ObservationStream(cfg, betas, rng(4)).take(10_000)
    assert np.var(y - X @ betas.normal) == pytest.approx(1.0, rel=0.05)


def test_fresh_outlier_beta():
    cfg = ScenarioConfig(contamination=1.0, fresh_outlier_beta=True, sigma_eps_outlier=1e-9)
    betas = draw_betas(rng(), cfg)
    X, y, _ = ObservationStream(cfg, betas, rng(5)).take(200)
    assert not np.allclose(y, X @ betas.outlier, atol=1e-3)
    cfg2 = ScenarioConfig(contamination=1.0, sigma_eps_outlier=1e-9)
    X, y, _ = ObservationStream(cfg2, betas, rng(5)).take(200)
    np.testing.assert_allclose(y, X @ betas.outlier, atol=1e-6)


def test_stream_independent_of_consumption_pattern():
    cfg = ScenarioConfig(contamination=0.1)
    betas = draw_betas(rng(), cfg)
    a = ObservationStream(cfg, betas, rng(6))
    Xa, ya, fa = a.take(3000)
    b = ObservationStream(cfg, betas, rng(6))
    parts = []
    while b.position < 3000:
        n = min(37, 3000 - b.position)
        X, y, f = b.peek(n)
        X2, _, _ = b.peek(n)
        np.testing.assert_array_equal(X, X2)
        parts.append((X.copy(), y.copy(), f.copy()))
        b.advance(n)
    np.testing.assert_array_equal(np.vstack([p[0] for p in parts]), Xa)
    np.testing.assert_array_equal(np.concatenate([p[1] for p in parts]), ya)
    obs = next(ObservationStream(cfg, betas, rng(6)))
    np.testing.assert_array_equal(obs.x, Xa[0])
    assert obs.y == ya[0] and obs.is_outlier == fa[0]


def test_initial_design_size_and_clean():
    cfg = ScenarioConfig(contamination=0.5)
    X, y, f = gen_initial_design(cfg, rng(7), draw_betas(rng(), cfg))
    assert X.shape == (22, 20) and y.shape == (22,)
    assert not f.any()


def test_contaminated_initial_design_binomial():
    cfg = ScenarioConfig(contamination=0.5, contaminated_init=True)
    betas = draw_betas(rng(), cfg)
    counts = [gen_initial_design(cfg, rng(s), betas)[2].sum() for s in range(400)]
    # Binomial(22, 0.5): mean 11, sd of the average ~0.12
    assert np.mean(counts) == pytest.approx(11.0, abs=0.5)


def test_test_set_clean():
    cfg = ScenarioConfig(contamination=0.9)
    betas = draw_betas(rng(), cfg)
    X, y = gen_test_set(cfg, rng(8), betas)
    assert X.shape == (1000, 20)
    assert X.std() == pytest.approx(1.0, rel=0.05)
    assert np.var(y - X @ betas.normal) == pytest.approx(1.0, rel=0.15)
    X2, y2 = gen_test_set(cfg, rng(8), betas)
    np.testing.assert_array_equal(X, X2)


def test_replica_generators_independent_and_reproducible():
    a = replica_generators(1, 0)
    b = replica_generators(1, 0)
    c = replica_generators(1, 1)
    assert a.stream.random() == b.stream.random()
    assert a.stream.random() != c.stream.random()
    firsts = [g.random() for g in replica_generators(1, 2)]
    assert len(set(firsts)) == 5
    assert replica_generators(1, 0, attempt=1).init.random() != replica_generators(1, 0).init.random()


@pytest.mark.parametrize("bad", [
    dict(p=0), dict(sigma_x_normal=0.0), dict(contamination=1.5), dict(budget=-1),
    dict(warm_up=20), dict(alpha=0.96, cutoff=0.05), dict(initial_design_size=10),
    dict(stream_cap=100), dict(beta_normal_low=3.0, beta_normal_high=1.0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ScenarioConfig(**bad)


def test_default_initial_design_is_p_plus_2():
    assert ScenarioConfig().initial_design_size == 22
    assert ScenarioConfig(p=5, warm_up=50).initial_design_size == 7


def test_dump_roundtrip(tmp_path):
    cfg = ScenarioConfig(p=3, warm_up=10, contamination=0.3)
    X, y, f = ObservationStream(cfg, draw_betas(rng(), cfg), rng(9)).take(50)
    path = tmp_path / "s.csv"
    dump_stream(path, X, y, f)
    X2, y2, f2 = load_stream(path)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)
    np.testing.assert_array_equal(f, f2)
    assert len(path.read_text().splitlines()[0].split(",")) == 5
