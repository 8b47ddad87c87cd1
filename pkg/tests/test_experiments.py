import json
import math

import numpy as np
import pytest

from sheppext import experiments as E
from sheppext.fieldsim import SheppGrid
from sheppext.models import Example21Field, IncrementVariance, StationaryCovariance

pytestmark = pytest.mark.invariant

BROWN = IncrementVariance.fbm(0.5)
FOU1 = StationaryCovariance.fractional_ou(1.0)
SMALL = SheppGrid(0.5, 1.0, 2.0, 3, 9)


def builtin_models():
    t = np.linspace(0, 40, 4001)
    return {
        "brownian": BROWN,
        "fbm07": IncrementVariance.fbm(0.7),
        "mixed": IncrementVariance.mixed_fbm([0.6, 0.8], [0.3, 0.7]),
        "integrated": IncrementVariance.integrated(FOU1),
        "fou": FOU1,
        "cauchy": StationaryCovariance.generalized_cauchy(1.5, 1.0),
        "tabulated": StationaryCovariance.tabulated(t, np.exp(-t)),
        "example21": Example21Field(FOU1),
    }


def test_tail_mc_trivial_and_validation():
    assert E.estimate_tail_mc(BROWN, SMALL, -10.0, 1000, 1).p_hat == 1.0
    with pytest.raises(ValueError):
        E.estimate_tail_mc(BROWN, SMALL, 1.0, 999, 1)


def test_tail_mc_binomial_stderr():
    a = E.estimate_tail_mc(BROWN, SMALL, 2.0, 4000, 1)
    b = E.estimate_tail_mc(BROWN, SMALL, 2.0, 8000, 1)
    assert a.stderr == pytest.approx(math.sqrt(a.p_hat * (1 - a.p_hat) / 4000))
    assert b.stderr**2 / a.stderr**2 == pytest.approx(0.5, rel=0.1)
    assert 0 <= a.p_hat <= 1


def test_tail_mc_nonincreasing_in_u():
    ests = E.estimate_tail_mc(BROWN, SMALL, [1.0, 1.5, 2.0, 2.5, 3.0], 3000, 4)
    p = [e.p_hat for e in ests]
    assert all(b <= a for a, b in zip(p, p[1:]))


@pytest.mark.parametrize("name", list(builtin_models()))
def test_oracle_consistency(name):
    grid = SheppGrid(0.5, 1.0, 1.5, 4, 16)
    cmp_ = E.oracle_compare(builtin_models()[name], grid, [1.5, 2.0, 2.5], 10_000, 31)
    assert cmp_.agree(), cmp_.rows()


def test_tail_ratio_study_shape():
    grid = SheppGrid.from_mesh(0.5, 1.0, 4.0, E.default_mesh(1.0, 3.0))
    st = E.tail_ratio_study(BROWN, grid, [2.0, 2.5, 3.0], n=4000, seed=2)
    assert st.constant == pytest.approx(0.25, rel=1e-10)
    for u, p, se, asym, ratio in st.rows():
        assert asym > 0 and (p == 0 or (np.isfinite(ratio) and ratio > 0))
    tr = st.trend()
    assert set(tr) >= {"variation", "min", "max", "within"}
    with pytest.raises(ValueError):
        E.tail_ratio_study(BROWN, grid, [3.0, 2.0], n=1000)


def test_grid_refinement_raises_ratios():
    coarse, fine = E.nested_grids(0.5, 1.0, 4.0, [0.125, 0.03125])
    a = E.tail_ratio_study(BROWN, coarse, [2.5, 3.0], n=3000, seed=5)
    b = E.tail_ratio_study(BROWN, fine, [2.5, 3.0], n=3000, seed=5)
    assert all(rb >= ra for ra, rb in zip(a.ratios, b.ratios))


def test_nested_grids_are_nested():
    gs = E.nested_grids(0.5, 1.0, 5.0, [0.3, 0.11, 0.05, 0.021])
    for g1, g2 in zip(gs, gs[1:]):
        ratio = g1.ds / g2.ds
        assert abs(ratio - round(ratio)) < 1e-9 and g2.ds <= g1.ds


def test_convergence_study_monotone_and_validation():
    st = E.convergence_study(BROWN, 0.5, 1.0, 3.0, 2.5, [1.0, 0.5, 0.25], 3000, 7)
    p = [e.p_hat for e in st.estimates]
    assert all(b >= a for a, b in zip(p, p[1:]))
    assert isinstance(st.stabilized(), bool)
    with pytest.raises(ValueError):
        E.convergence_study(BROWN, 0.5, 1.0, 3.0, 2.5, [], 3000, 7)
    with pytest.raises(ValueError):
        E.convergence_study(BROWN, 0.5, 1.0, 3.0, 2.5, [0.25, 0.5], 3000, 7)


def test_limit_law_report_small():
    rep = E.empirical_limit_law(BROWN, 0.5, 1.0, [20.0, 40.0], 300, seed=3)
    assert all(0 <= k <= 1 for k in rep.ks_distances)
    assert len(rep.normalizers) == 2 and rep.r == 0.0
    with pytest.raises(ValueError):
        E.empirical_limit_law(BROWN, 0.5, 1.0, [40.0, 20.0], 300)
    with pytest.raises(ValueError):
        E.empirical_limit_law(Example21Field(FOU1), 0.5, 1.0, [20.0], 300)


def test_limit_law_trend_rule():
    rep = E.LimitLawReport([1, 2, 3], [0.10, 0.12, 0.08], 400, [None] * 3)
    assert rep.trend_ok()  # one inversion of 0.02 < 2/sqrt(400) = 0.1
    rep = E.LimitLawReport([1, 2, 3], [0.10, 0.25, 0.08], 400, [None] * 3)
    assert not rep.trend_ok()
    rep = E.LimitLawReport([1, 2, 3, 4], [0.10, 0.11, 0.09, 0.10], 400, [None] * 4)
    assert not rep.trend_ok()


def test_persist_round_trip_and_determinism(tmp_path):
    st = E.tail_ratio_study(BROWN, SMALL, [1.5, 2.0], n=1000, seed=9)
    c1, m1 = E.persist_results(st, tmp_path / "a", "tail")
    st2 = E.tail_ratio_study(BROWN, SMALL, [1.5, 2.0], n=1000, seed=9)
    c2, _ = E.persist_results(st2, tmp_path / "b", "tail")
    assert open(c1, "rb").read() == open(c2, "rb").read()
    back = E.read_csv(c1)
    assert [tuple(r.values()) for r in back] == [tuple(r) for r in st.rows()]
    assert list(back[0]) == list(E.TailStudy.COLUMNS)
    man = json.load(open(m1))
    assert man["columns"] == ["u", "p_hat", "stderr", "asym", "ratio"]
    assert set(man["versions"]) >= {"numpy", "scipy", "python", "sheppext"}


def test_manifest_digest_tracks_config(tmp_path):
    st = E.tail_ratio_study(BROWN, SMALL, [1.5], n=1000, seed=9)
    _, m1 = E.persist_results(st, tmp_path, "x")
    _, m2 = E.persist_results(st, tmp_path, "y")
    st3 = E.tail_ratio_study(BROWN, SMALL, [1.5], n=1000, seed=10)
    _, m3 = E.persist_results(st3, tmp_path, "z")
    d = [json.load(open(m))["config_digest"] for m in (m1, m2, m3)]
    assert d[0] == d[1] != d[2]


def test_results_independent_of_threads():
    a = E.estimate_tail_mc(BROWN, SMALL, 2.0, 2000, 3, threads=1)
    b = E.estimate_tail_mc(BROWN, SMALL, 2.0, 2000, 3, threads=4)
    assert a == b
