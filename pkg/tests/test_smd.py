import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle
from smdbench.core import Dims, DimensionError, DomainError, split
from smdbench.smd import (ProblemId, catalog, contour_grid, dump_catalog, evaluate, instantiate,
                          known_optimum, psi_reference)

FIVE = {pid: (Dims(1, 0, 1, 2) if pid == ProblemId.SMD6 else Dims(1, 2, 1)) for pid in ProblemId}


@st.composite
def problem_case(draw):
    n = draw(st.integers(1, 12))
    p = draw(st.integers(1 if n in (8,) else 0, 3))
    r = draw(st.integers(1, 3))
    if n in (10, 12) and p + r < 2:
        p = 1
    q = draw(st.integers(2 if n in (5, 10, 12) else (0 if n == 6 else 1), 4))
    s = 2 * draw(st.integers(1, 2)) if n == 6 else 0
    d = Dims(p, q, r, s)
    seed = draw(st.integers(0, 2 ** 31))
    return n, d, seed


def _close(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


@settings(max_examples=300, deadline=None)
@given(problem_case())
def test_kernels_match_independent_transcription(case):
    n, d, seed = case
    inst = instantiate(n, d)
    xu, xl = oracle.sample(n, d.as_tuple(), np.random.default_rng(seed))
    (F, f, G, g) = oracle.evaluate(n, xu, xl, d.as_tuple())
    up, lo = inst.components(xu, xl)
    _close(up, F)
    _close(lo, f)
    out = inst.evaluate_flat(xu, xl)
    _close(out.F, sum(F))
    _close(out.f, sum(f))
    _close(out.G, G)
    _close(out.g, g)
    assert len(out.G_tags) == len(G) and len(out.g_tags) == len(g)


def test_problem_ids():
    assert len(ProblemId) == 12
    assert [p.constrained for p in ProblemId] == [False] * 8 + [True] * 4
    assert ProblemId.parse("smd3") == ProblemId.parse(3) == ProblemId.SMD3
    with pytest.raises(ValueError):
        ProblemId.parse("SMD13")


def test_instantiate_examples():
    a = instantiate("SMD1", Dims(1, 2, 1))
    assert (a.n_upper, a.n_lower, len(a.G_tags), len(a.g_tags)) == (2, 3, 0, 0)
    b = instantiate("SMD6", Dims(1, 0, 1, 2))
    assert (b.n_upper, b.n_lower) == (2, 3)
    with pytest.raises(ValueError, match="q >= 2"):
        instantiate("SMD10", Dims(1, 1, 1))


@pytest.mark.parametrize("dims", [Dims(1, 1, 0), Dims(1, 1, 1, 2)])
def test_instantiate_rejects_invalid_dims(dims):
    with pytest.raises(ValueError):
        instantiate("SMD1", dims)


def test_smd6_needs_even_s():
    with pytest.raises(ValueError):
        instantiate("SMD6", Dims(1, 1, 1, 3))
    with pytest.raises(ValueError):
        instantiate("SMD6", Dims(1, 1, 1, 0))


def test_constraint_counts():
    d = Dims(2, 3, 2)
    counts = {n: (len(instantiate(n, d).G_tags), len(instantiate(n, d).g_tags))
              for n in (9, 10, 11, 12)}
    assert counts == {9: (1, 1), 10: (4, 3), 11: (2, 1), 12: (6, 4)}


def test_bounds_match_ranges():
    smd1 = instantiate(1, Dims(1, 2, 1))
    assert smd1.lower_bounds.open_lower[-1] and smd1.lower_bounds.open_upper[-1]
    assert smd1.lower_bounds.upper[-1] == pytest.approx(math.pi / 2)
    smd2 = instantiate(2, Dims(1, 2, 1))
    assert smd2.lower_bounds.open_lower[-1] and not smd2.lower_bounds.open_upper[-1]
    assert smd2.lower_bounds.upper[-1] == pytest.approx(math.e)
    smd12 = instantiate(12, Dims(1, 2, 1))
    assert smd12.upper_bounds.upper[-1] == 14.10 and smd12.upper_bounds.lower[-1] == -14.10


def test_properties_flags():
    assert instantiate(2, Dims(1, 2, 1)).properties.conflict
    assert instantiate(3, Dims(1, 2, 1)).properties.lower_multimodal
    assert instantiate(1, Dims(1, 2, 1)).properties.cooperative
    assert instantiate(6, Dims(1, 0, 1, 2)).properties.multiple_global_lower


def test_evaluate_smd1_hand_point():
    inst = instantiate(1, Dims(1, 2, 1))
    out = evaluate(inst, split([2.0, 1.0], [0.0, 0.0, math.pi / 4], inst.dims))
    assert out.F == pytest.approx(5.0, abs=1e-12)
    # f1 reads xu1 only, so f = 4 + 0 + 0
    assert out.f == pytest.approx(4.0, abs=1e-12)


def test_evaluate_smd1_origin_and_smd11_optimum():
    inst = instantiate(1, Dims(1, 2, 1))
    out = inst.evaluate_flat(np.zeros(2), np.zeros(3))
    assert (out.F, out.f) == (0.0, 0.0)
    smd11 = instantiate(11, Dims(1, 1, 1))
    out = smd11.evaluate_flat([0.0, 0.0], [0.0, math.exp(-1.0)])
    assert out.F == pytest.approx(-1.0, abs=1e-12)
    assert out.f == pytest.approx(1.0, abs=1e-12)


def test_evaluate_domain_errors():
    inst = instantiate(1, Dims(1, 2, 1))
    with pytest.raises(DomainError):
        inst.evaluate_flat([0.0, 0.0], [0.0, 0.0, math.pi / 2])
    with pytest.raises(DomainError):
        inst.evaluate_flat([11.0, 0.0], [0.0, 0.0, 0.0])
    with pytest.raises(DimensionError):
        inst.evaluate_flat([0.0], [0.0, 0.0, 0.0])


def test_evaluate_is_deterministic():
    inst = instantiate(8, Dims(2, 3, 2))
    rng = np.random.default_rng(0)
    xu, xl = inst.upper_bounds.sample(rng), inst.lower_bounds.sample(rng)
    a, b = inst.evaluate_flat(xu, xl), inst.evaluate_flat(xu.copy(), xl.copy())
    assert a.F == b.F and a.f == b.f


def test_psi_examples():
    smd2 = instantiate(2, Dims(1, 2, 1))
    np.testing.assert_allclose(psi_reference(smd2, [0.0, 0.0]).xl_star, [0.0, 0.0, 1.0])
    smd1 = instantiate(1, Dims(1, 2, 1))
    assert psi_reference(smd1, [0.0, 1.0]).xl_star[-1] == pytest.approx(0.785398, abs=1e-6)
    smd8 = instantiate(8, Dims(1, 2, 2))
    ref = psi_reference(smd8, [0.0, 8.0, -1.0])
    np.testing.assert_allclose(ref.xl_star[2:], [2.0, -1.0], atol=1e-12)
    assert smd8.components([0.0, 8.0, -1.0], ref.xl_star)[1][2] == pytest.approx(0.0, abs=1e-20)


def test_psi_uniqueness_flags():
    flags = {n: psi_reference(instantiate(n, FIVE[ProblemId(n)]),
                              np.zeros(2)).is_unique for n in range(1, 13)}
    assert [n for n, u in flags.items() if not u] == [6, 11, 12]


def test_psi_relations():
    smd3 = instantiate(3, Dims(1, 2, 1))
    assert psi_reference(smd3, [0.0, 2.0]).xl_star[-1] == pytest.approx(math.atan(4.0))
    smd5 = instantiate(5, Dims(1, 2, 1))
    xl = psi_reference(smd5, [0.0, 4.0]).xl_star
    np.testing.assert_allclose(xl, [1.0, 1.0, 2.0])


def test_psi_bounds_error():
    with pytest.raises(DomainError):
        psi_reference(instantiate(2, Dims(1, 2, 1)), [0.0, 2.0])


@pytest.mark.parametrize("pid", list(ProblemId))
def test_known_optimum_consistency(pid):
    inst = instantiate(pid, FIVE[pid])
    opt = known_optimum(inst)
    out = evaluate(inst, opt.x_star)
    assert out.F == pytest.approx(opt.F_star, abs=1e-9)
    assert out.f == pytest.approx(opt.f_star, abs=1e-9)
    assert np.all(out.G >= -1e-12) and np.all(out.g >= -1e-12)
    ref = psi_reference(inst, opt.x_star.upper)
    assert ref.residual(opt.x_star.lower) <= 1e-9


def test_known_optimum_examples():
    smd10 = known_optimum(instantiate(10, Dims(1, 2, 1)))
    np.testing.assert_allclose(smd10.x_star.upper, [1.0, 1.0])
    np.testing.assert_allclose(smd10.x_star.lower, [1.0, 1.0, math.atan(1.0)])
    smd9 = known_optimum(instantiate(9, Dims(1, 2, 1)))
    assert np.all(smd9.x_star.upper == 0) and np.all(smd9.x_star.lower == 0)
    assert (smd9.F_star, smd9.f_star) == (0.0, 0.0)
    smd4 = known_optimum(instantiate(4, Dims(1, 2, 1)))
    assert (smd4.F_star, smd4.f_star) == (0.0, 0.0)
    smd12 = known_optimum(instantiate(12, Dims(2, 3, 2)))
    t = 1 / math.sqrt(3)
    np.testing.assert_allclose(smd12.x_star.upper, [t] * 4)
    np.testing.assert_allclose(smd12.x_star.xl2, [math.atan(t - 1 / math.sqrt(2))] * 2)


def test_smd10_constraints_active_at_optimum():
    for d in (Dims(1, 2, 1), Dims(3, 3, 2)):
        inst = instantiate(10, d)
        out = evaluate(inst, known_optimum(inst).x_star)
        assert out.G.size + out.g.size == d.p + d.r + d.q
        np.testing.assert_allclose(out.G, 0.0, atol=1e-9)
        np.testing.assert_allclose(out.g, 0.0, atol=1e-9)


def test_smd11_lower_constraint_tight_at_optimum():
    for d in (Dims(1, 1, 1), Dims(3, 3, 2)):
        inst = instantiate(11, d)
        out = evaluate(inst, known_optimum(inst).x_star)
        assert out.g[0] == pytest.approx(0.0, abs=1e-9)


def test_scaled_presets_evaluate():
    for d in (Dims(3, 3, 2), Dims(6, 6, 4)):
        for pid in ProblemId:
            dd = Dims(d.p, d.q - (2 if d.q == 6 else 2), d.r, 4 if d.q == 6 else 2) \
                if pid == ProblemId.SMD6 else d
            inst = instantiate(pid, dd)
            out = evaluate(inst, known_optimum(inst).x_star)
            assert math.isfinite(out.F) and math.isfinite(out.f)


def test_contour_grid_examples(tmp_path):
    inst = instantiate(1, Dims(1, 2, 1))
    grid = contour_grid(inst, ("xu1", "xu2"), 3)
    assert grid.F.shape == (3, 3) and grid.valid.all()
    rows = list(grid.rows())
    assert len(rows) == 9
    # a 3-point grid over [-5, 10] has no zero; use an odd grid that does
    g = contour_grid(inst, ("xu1", "xu2"), 4)
    assert np.nanmin(g.F) >= 0
    path = tmp_path / "g.csv"
    grid.to_csv(path)
    with open(path) as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["axis1", "axis2", "F", "f"]
        assert sum(1 for _ in reader) == 9
    with pytest.raises(ValueError):
        contour_grid(inst, ("xu1", "xu2"), 1)
    with pytest.raises(IndexError):
        contour_grid(inst, ("xu1[2]", "xu2"), 3)


def test_contour_grid_zero_cell():
    inst = instantiate(1, Dims(1, 2, 1))
    # an axis through zero: [-5, 10] at 16 points hits 0 exactly
    grid = contour_grid(inst, ("xu1", "xu2"), 16)
    i = int(np.flatnonzero(grid.axis1 == 0)[0])
    j = int(np.flatnonzero(grid.axis2 == 0)[0])
    assert grid.F[i, j] == 0.0


def test_contour_grid_lower_axes_smd2():
    inst = instantiate(2, Dims(1, 2, 1))
    grid = contour_grid(inst, ("xl1[1]", "xl2"), 2, xu=np.zeros(2),
                        xl=np.array([0.0, 0.0, 1.0]))
    assert grid.F.size == 4
    i, j = np.unravel_index(np.nanargmin(grid.f), grid.f.shape)
    # nearest to (0, 1) in the lower objective's own coordinates: |xl1| and |log xl2|
    assert i == np.argmin(np.abs(grid.axis1))
    assert j == np.argmin(np.abs(np.log(grid.axis2)))


def test_catalog(tmp_path):
    cat = catalog()
    assert len(cat) == 12
    assert cat[8]["n_upper_constraints"] == 1 and cat[8]["n_lower_constraints"] == 1
    path = tmp_path / "cat.json"
    dump_catalog(path)
    assert json.loads(path.read_text())[0]["id"] == "SMD1"
