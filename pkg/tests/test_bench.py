import itertools
import json
import math

import numpy as np
import pytest
from scipy import optimize

from addbo.bench.cli import main
from addbo.bench.config import ConfigError, build, default_full_budget, load, parse_text, validate_flat
from addbo.bench.runner import (
    AGGREGATE_COLUMNS,
    COLUMNS,
    ResultRow,
    compare_results,
    read_rows,
    run_experiment,
    write_rows,
)
from addbo.bench.synthetic import SyntheticSpec, build_composite, build_fdtilde, bump_bandwidth

# mpmath: 0.01 * 2^0.1
H_DTILDE_2 = 0.010717734625362931642

# (D, dtilde, Mtilde) = (10, 3, 3), seed 7; optimum certified by DiRect plus grid refinement
F10_3_3_STAR = 39.78834996014889
F3_STAR = 13.262783320049632

TINY_CFG = """
function.D = 4
function.dtilde = 2
function.Mtilde = 2
function.seed = 1
noise.eta = 0.1
loop.T = 5
loop.replicates = 2
budget.full = 60
strategy[0].kind = add_gp_ucb
strategy[0].decomposition = known
strategy[1].kind = random
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CFG)
    return p


class TestSynthetic:
    def test_bandwidth(self):
        assert bump_bandwidth(2) == pytest.approx(H_DTILDE_2, rel=1e-15)
        assert bump_bandwidth(1) == 0.01

    def test_value_at_heavy_mode(self):
        for seed in range(5):
            spec = SyntheticSpec(3, 3, 1, seed=seed)
            f = build_fdtilde(spec)
            v3 = f.centers[2]
            assert f(v3) == pytest.approx(math.log(0.8 / spec.bandwidth**3), abs=1e-6)

    def test_argmax_near_heavy_mode(self):
        f = build_fdtilde(SyntheticSpec(2, 2, 1, seed=3))
        g = (np.arange(400) + 0.5) / 400
        grid = np.array(list(itertools.product(g, g)))
        best = grid[np.argmax(f(grid))]
        assert np.linalg.norm(best - f.centers[2]) <= 2 / 400

    def test_three_modes(self):
        f = build_fdtilde(SyntheticSpec(2, 2, 1, seed=5))
        found = set()
        for c in f.centers:
            for dz in itertools.product([-0.01, 0.01], repeat=2):
                res = optimize.minimize(lambda z: -f(z), c + np.array(dz), jac=lambda z: -f.gradient(z), method="L-BFGS-B", bounds=[(0, 1)] * 2)
                found.add(tuple(np.round(res.x, 4)))
        assert len(found) == 3

    def test_centers_separated(self):
        for seed in range(10):
            spec = SyntheticSpec(3, 3, 1, seed=seed)
            c = build_fdtilde(spec).centers
            assert c.min() >= 0.15 and c.max() <= 0.85
            assert min(np.linalg.norm(c[a] - c[b]) for a, b in ((0, 1), (0, 2), (1, 2))) >= 10 * spec.bandwidth

    def test_gradient(self):
        f = build_fdtilde(SyntheticSpec(2, 2, 1, seed=0))
        x = f.centers[0] + 0.004
        num = optimize.approx_fprime(x, f, 1e-8)
        np.testing.assert_allclose(f.gradient(x), num, rtol=1e-4)

    def test_single_group_composite(self):
        F = build_composite(SyntheticSpec(3, 3, 1, seed=2))
        x = np.random.default_rng(0).random(3)
        assert F(x) == pytest.approx(F.component(x), rel=1e-14)

    def test_unused_coordinates_ignored(self):
        F = build_composite(SyntheticSpec(10, 3, 3, seed=7))
        assert len(F.unused) == 1
        x = F.x_star.copy()
        for v in (0.0, 0.3, 1.0):
            x[F.unused[0]] = v
            assert F(x) == F.f_star

    def test_frozen_fixture(self):
        F = build_composite(SyntheticSpec(10, 3, 3, seed=7))
        assert F.f_star == pytest.approx(F10_3_3_STAR, abs=1e-10)
        assert F.f_star == pytest.approx(3 * F3_STAR, abs=1e-10)
        assert F.spec.bandwidth == pytest.approx(0.011161231740339044, rel=1e-15)

    def test_optimum_dominates_samples(self):
        F = build_composite(SyntheticSpec(10, 3, 3, seed=7))
        assert F(np.random.default_rng(1).random((5000, 10))).max() < F.f_star

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(5, 3, 2)
        with pytest.raises(ValueError):
            SyntheticSpec(3, 3, 1, centers=((0.1, 0.2, 0.3),))


class TestConfig:
    def test_parse_text(self):
        flat = parse_text("a.b = 3  # note\n# skip\nc = practical\nd = 1e-4\ne = true\n")
        assert flat == {"a.b": 3, "c": "practical", "d": 1e-4, "e": True}

    def test_shipped_config(self):
        cfg = load("configs/toy_10_3_3.cfg")
        assert cfg.T == 100 and cfg.replicates == 10 and cfg.additive_budget == 900
        assert [s.name for s in cfg.strategies] == ["add_gp_ucb-known", "add_gp_ucb-5", "gp_ucb", "ei", "random"]
        known = cfg.strategies[0].decomposition
        assert sorted(i for g in known.groups for i in g) == list(range(10))

    def test_json_equivalent(self, tmp_path, tiny_cfg):
        obj = {
            "function": {"D": 4, "dtilde": 2, "Mtilde": 2, "seed": 1},
            "noise": {"eta": 0.1},
            "loop": {"T": 5, "replicates": 2},
            "budget": {"full": 60},
            "strategy": [{"kind": "add_gp_ucb", "decomposition": "known"}, {"kind": "random"}],
        }
        p = tmp_path / "tiny.json"
        p.write_text(json.dumps(obj))
        assert load(p).config_hash() == load(tiny_cfg).config_hash()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            validate_flat({"loop.TT": 3})
        with pytest.raises(ConfigError):
            validate_flat({"strategy[0].colour": "red"})

    def test_bad_values(self):
        base = parse_text(TINY_CFG)
        with pytest.raises((ConfigError, ValueError)):
            build({**base, "strategy[0].kind": "thompson"})
        with pytest.raises((ConfigError, ValueError)):
            build({**base, "loop.T": "many"})

    def test_default_budget(self):
        assert default_full_budget(10) == 1000
        assert default_full_budget(120) == 5000


class TestRunner:
    def test_csv_round_trip(self, tmp_path):
        rows = [ResultRow(3, "x", 1, 0.1 + 0.2, math.nan, 1 / 3, 2.0, 0.0, math.pi, 0.0)]
        write_rows(tmp_path / "a.csv", rows)
        back = read_rows(tmp_path / "a.csv")
        assert back[0].y_t == 0.1 + 0.2 and back[0].R_t == 1 / 3 and math.isnan(back[0].r_t)
        assert (tmp_path / "a.csv").read_text().splitlines()[0].split(",") == list(COLUMNS)

    def test_counts_and_determinism(self, tmp_path, tiny_cfg):
        cfg = load(tiny_cfg)
        m1 = run_experiment(cfg, tmp_path / "a", threads=1)
        m2 = run_experiment(cfg, tmp_path / "b", threads=2)
        assert len(m1["files"]) == 4 and not m1["failures"]
        for name in m1["files"]:
            a, b = tmp_path / "a" / name, tmp_path / "b" / name
            assert len(read_rows(a)) == 10 + 5
            assert a.read_bytes() == b.read_bytes()
            assert compare_results(a, b)
        assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()

    def test_aggregate_recomputable(self, tmp_path, tiny_cfg):
        cfg = load(tiny_cfg)
        m = run_experiment(cfg, tmp_path, threads=1)
        lines = (tmp_path / "aggregate.csv").read_text().splitlines()
        assert lines[0].split(",") == list(AGGREGATE_COLUMNS)
        for line in lines[1:]:
            rec = dict(zip(AGGREGATE_COLUMNS, line.split(",")))
            finals = [read_rows(tmp_path / f)[-1] for f in m["files"] if f.startswith(rec["strategy"] + "_seed")]
            S = np.array([r.S_t for r in finals])
            RT = np.array([r.R_t / r.t for r in finals])
            assert float(rec["mean_S_T"]) == pytest.approx(S.mean(), rel=1e-12)
            assert float(rec["stderr_S_T"]) == pytest.approx(S.std(ddof=1) / math.sqrt(len(S)), rel=1e-12)
            assert float(rec["mean_RT_over_T"]) == pytest.approx(RT.mean(), rel=1e-12)

    def test_manifest(self, tmp_path, tiny_cfg):
        run_experiment(load(tiny_cfg), tmp_path, threads=1)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["seeds"] == [0, 1] and man["strategies"] == ["add_gp_ucb-known", "random"]
        assert len(man["config_hash"]) > 8


class TestCli:
    def test_validate(self, capsys):
        assert main(["validate", "--config", "configs/toy_10_3_3.cfg"]) == 0
        assert "5 strategies" in capsys.readouterr().out

    def test_validate_bad(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text(TINY_CFG + "loop.bogus = 1\n")
        assert main(["validate", "--config", str(p)]) == 2
        assert main(["validate", "--config", str(tmp_path / "missing.cfg")]) == 2

    def test_bad_flags(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--nope"])
        assert exc.value.code == 2

    def test_synth(self, capsys):
        assert main(["synth", "--D", "10", "--dtilde", "3", "--Mtilde", "3", "--seed", "7"]) == 0
        fx = json.loads(capsys.readouterr().out)
        assert fx["f_star"] == pytest.approx(F10_3_3_STAR, abs=1e-10)
        assert len(fx["x_star"]) == 10

    def test_run_with_overrides(self, tmp_path, tiny_cfg):
        out = tmp_path / "out"
        assert main(["run", "--config", str(tiny_cfg), "--out", str(out), "--seed", "5", "--replicates", "1", "--threads", "1"]) == 0
        assert sorted(p.name for p in out.glob("*_seed*.csv")) == ["add_gp_ucb-known_seed5.csv", "random_seed5.csv"]
        assert json.loads((out / "manifest.json").read_text())["config"]["loop.base_seed"] == 5
