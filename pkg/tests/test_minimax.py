import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapfilter import ConfigError, ConstantDensity, FunctionalSpec, InfeasibleClassError, MissingPattern, autoregressive
from gapfilter.minimax import (
    KINDS,
    AdmissibleClass,
    SearchConfig,
    cell_map,
    check_optimality_relations,
    corollary_mode,
    evaluate_delta_cross,
    fixed_class,
    pair_id,
    search_least_favorable,
    solution_at,
    verify_saddle,
)
from gapfilter.minimax.projections import (
    project_box_mean,
    project_l1_ball,
    project_l2_ball,
    project_psd,
    project_simplex,
    project_spectraplex,
)
from gapfilter.minimax.search import _Objective

GRID = 512
FAST = SearchConfig(restarts=2)
PATTERN = MissingPattern.single_gap(2, 1)
SCALAR_F = FunctionalSpec(1, {1: [1.0], 4: [1.0], 5: [0.5]})
PAIR_F = FunctionalSpec(2, {1: [1.0, 1.0], 4: [1.0, 0.5], 5: [0.5, -0.3j]})

vectors = st.lists(st.floats(-10, 10), min_size=1, max_size=30).map(np.array)


# --- projections -------------------------------------------------------------------


@given(vectors, st.floats(0.1, 20))
def test_simplex_projection(v, total):
    w = project_simplex(v, total)
    assert w.min() >= 0.0
    assert w.sum() == pytest.approx(total, rel=1e-12)
    np.testing.assert_allclose(project_simplex(w, total), w, atol=1e-12)


@given(vectors, st.floats(0.0, 20))
def test_ball_projections(v, r):
    for proj, norm in ((project_l2_ball, np.linalg.norm), (project_l1_ball, lambda z: np.abs(z).sum())):
        p = proj(v, r)
        assert norm(p) <= r * (1 + 1e-12) + 1e-12
        np.testing.assert_allclose(proj(p, r), p, atol=1e-12)


@given(vectors, st.floats(-1, 1))
def test_box_mean_projection(v, t):
    lo, hi = -np.ones(v.size), 2 * np.ones(v.size)
    target = 0.5 + 1.5 * t * 0.99
    p = project_box_mean(v, lo, hi, target)
    assert np.all(p >= lo) and np.all(p <= hi)
    assert p.mean() == pytest.approx(target, abs=1e-10)


def test_box_mean_infeasible():
    with pytest.raises(InfeasibleClassError):
        project_box_mean(np.zeros(4), np.zeros(4), np.ones(4), 2.0)


@given(st.integers(0, 2**31 - 1))
def test_psd_and_spectraplex_projections(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 2, 2)) + 1j * rng.standard_normal((5, 2, 2))
    h = a + a.conj().transpose(0, 2, 1)
    p = project_psd(h)
    assert np.linalg.eigvalsh(p).min() >= -1e-12
    s = project_spectraplex(h, 3.0)
    assert np.linalg.eigvalsh(s).min() >= -1e-12
    assert np.einsum("nii->", s).real == pytest.approx(3.0, rel=1e-12)


# --- classes -----------------------------------------------------------------------


def _classes(T):
    I = ConstantDensity.identity(T)
    W = np.eye(T) + 0.3 * (np.ones((T, T)) - np.eye(T))
    ar = autoregressive([1.0] * T, [0.5, -0.3][:T])
    return [
        AdmissibleClass("signal", "moment_trace", T, level=T * 1.0),
        AdmissibleClass("signal", "moment_diag", T, level=[1.0] * T),
        AdmissibleClass("signal", "moment_weighted", T, level=2.0, weight=W),
        AdmissibleClass("signal", "moment_matrix", T, level=np.eye(T)),
        AdmissibleClass("noise", "l2_trace", T, level=0.2, center=I.scaled(0.5)),
        AdmissibleClass("noise", "l2_diag", T, level=[0.2] * T, center=I.scaled(0.5)),
        AdmissibleClass("noise", "l2_weighted", T, level=0.2, center=I.scaled(0.5), weight=W),
        AdmissibleClass("noise", "l2_entry", T, level=0.05, center=I.scaled(0.5)),
        AdmissibleClass("signal", "l1_trace", T, level=0.3, center=ar),
        AdmissibleClass("signal", "l1_diag", T, level=[0.3] * T, center=ar),
        AdmissibleClass("signal", "l1_weighted", T, level=0.3, center=ar, weight=W),
        AdmissibleClass("signal", "l1_entry", T, level=0.1, center=ar),
        AdmissibleClass("noise", "band_trace", T, level=T * 0.5, lower=I.scaled(0.25), upper=I.scaled(1)),
        AdmissibleClass("noise", "band_diag", T, level=[0.5] * T, lower=I.scaled(0.25), upper=I.scaled(1)),
        AdmissibleClass("noise", "band_weighted", T, level=0.5 * np.trace(W).real, lower=I.scaled(0.25), upper=I.scaled(1), weight=W),
        AdmissibleClass("noise", "band_matrix", T, level=0.5 * np.eye(T), lower=I.scaled(0.25), upper=I.scaled(1)),
    ]


def test_every_kind_is_covered():
    assert sorted(c.kind for c in _classes(2)) == sorted(k for k in KINDS if k != "fixed")


@pytest.mark.parametrize("T", [1, 2])
def test_samples_and_projections_are_members(T):
    cmap = cell_map(16, 256)
    rng = np.random.default_rng(5)
    for cls in _classes(T):
        b = cls.bind(cmap)
        for _ in range(3):
            x = b.sample(rng)
            assert b.contains(x), (cls.kind, b.violation(x))
            p = b.project(b.random_cells(rng))
            assert b.contains(p), cls.kind
            np.testing.assert_allclose(b.project(p), p, atol=1e-7 * b.scale)


def test_projection_moves_points_outside():
    cmap = cell_map(16, 256)
    b = AdmissibleClass("signal", "moment_trace", 1, level=1.0).bind(cmap)
    x = 3.0 * np.ones((16, 1, 1), dtype=complex)
    assert not b.contains(x)
    assert b.contains(b.project(x))


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(kind="moment_trace"), "level"),
        (dict(kind="bogus", level=1.0), "kind"),
        (dict(kind="moment_weighted", level=1.0), "weight"),
        (dict(kind="l2_trace", level=0.1), "center"),
        (dict(kind="band_trace", level=1.0), "lower"),
        (dict(kind="moment_trace", level=-1.0), "level"),
        (dict(kind="moment_matrix", level=[[1.0, 2.0], [2.0, 1.0]]), "level"),
    ],
)
def test_invalid_classes_name_the_field(kwargs, field):
    with pytest.raises(ConfigError) as exc:
        AdmissibleClass("signal", dim=2, **kwargs)
    assert exc.value.field == field


def test_infeasible_band_mean():
    I = ConstantDensity.identity(1)
    cls = AdmissibleClass("noise", "band_trace", 1, level=5.0, lower=I.scaled(0.25), upper=I)
    with pytest.raises(InfeasibleClassError):
        cls.bind(cell_map(8, 64))


def test_pair_labels():
    I = ConstantDensity.identity(1)
    m = AdmissibleClass("signal", "moment_trace", 1, level=1.0)
    l2 = AdmissibleClass("noise", "l2_trace", 1, level=0.1, center=I)
    assert pair_id(m, l2) == "moment_l2_trace"
    assert pair_id(m, fixed_class("noise", I)) == "moment_trace/known_noise"
    assert pair_id(fixed_class("signal", I), l2) == "l2_trace/known_signal"


# --- objective and cross error -----------------------------------------------------


def test_gradient_matches_finite_differences():
    cmap = cell_map(16, 256)
    rng = np.random.default_rng(2)
    bF = AdmissibleClass("signal", "moment_trace", 2, level=2.0).bind(cmap)
    bG = AdmissibleClass("noise", "l2_trace", 2, level=0.2, center=ConstantDensity.identity(2, 0.5)).bind(cmap)
    obj = _Objective(bF, bG, PATTERN, PAIR_F, 12, cmap)
    xs = [bF.sample(rng), bG.sample(rng)]
    ev = obj(xs)
    for side in (0, 1):
        d = rng.standard_normal((16, 2, 2)) + 1j * rng.standard_normal((16, 2, 2))
        d = d + d.conj().transpose(0, 2, 1)
        h = 1e-6
        plus = [x + h * d if i == side else x for i, x in enumerate(xs)]
        minus = [x - h * d if i == side else x for i, x in enumerate(xs)]
        fd = (obj(plus).delta - obj(minus).delta) / (2 * h)
        an = np.einsum("nij,nij->", ev.grads[side].conj(), d).real
        assert fd == pytest.approx(an, rel=1e-6, abs=1e-10)


@pytest.fixture(scope="module")
def scalar_solution():
    """Scalar moment class for the signal with known white noise."""
    cF = AdmissibleClass("signal", "moment_trace", 1, level=1.0)
    return corollary_mode(ConstantDensity.identity(1, 0.5), cF, PATTERN, SCALAR_F, 24, GRID, FAST)


def test_cross_error_at_solution_is_delta0(scalar_solution):
    s = scalar_solution
    assert evaluate_delta_cross(s, s.F0, s.G0) == pytest.approx(s.delta0, rel=1e-8)
    assert evaluate_delta_cross(s, s.F_cells, s.G0) == pytest.approx(s.delta0, rel=1e-8)


def test_cross_error_is_linear_in_each_density(scalar_solution):
    s = scalar_solution
    f_part = evaluate_delta_cross(s, s.F0, ConstantDensity.identity(1, 0.0))
    g_part = evaluate_delta_cross(s, ConstantDensity.identity(1, 0.0), s.G0)
    assert evaluate_delta_cross(s, s.F0, s.G0.scaled(2.0)) == pytest.approx(f_part + 2 * g_part, rel=1e-12)
    assert evaluate_delta_cross(s, s.F0.scaled(3.0), s.G0) == pytest.approx(3 * f_part + g_part, rel=1e-12)


# --- search ------------------------------------------------------------------------


def test_scalar_search_converges_and_dominates(scalar_solution):
    s = scalar_solution
    assert s.converged
    assert s.self_consistent()
    assert max(s.membership().values()) <= 1e-8
    b = s.class_F.bind(s.cmap)
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = b.sample(rng)
        sol = solution_at(s.class_F, s.class_G, x, None, PATTERN, SCALAR_F, 24, s.cmap)
        assert sol.delta0 <= s.delta0 + 1e-6


def test_scalar_relations_hold(scalar_solution):
    rep = check_optimality_relations(scalar_solution)
    assert rep.passed
    assert rep.max_residual <= 5e-2


def test_non_optimal_point_fails_relations(scalar_solution):
    s = scalar_solution
    b = s.class_F.bind(s.cmap)
    x = b.project(s.F_cells * (1 + 0.5 * np.cos(3 * s.cmap.centers()))[:, None, None] + 0.05)
    sol = solution_at(s.class_F, s.class_G, x, None, PATTERN, SCALAR_F, 24, s.cmap)
    assert check_optimality_relations(sol).max_residual > 10 * 5e-2


def test_scalar_saddle(scalar_solution):
    rep = verify_saddle(scalar_solution, 200)
    assert rep.passed
    assert all(3.5 <= r <= 4.5 for r in rep.quadratic_ratios)


def test_saddle_with_no_samples(scalar_solution):
    rep = verify_saddle(scalar_solution, 0)
    assert rep.n_samples == 0 and rep.passed and not rep.quadratic_ratios


def test_zero_radius_ball_returns_centre():
    G1 = ConstantDensity.identity(1, 0.5)
    cG = AdmissibleClass("noise", "l2_trace", 1, level=0.0, center=G1)
    s = corollary_mode(autoregressive([1.0], [0.6]), cG, PATTERN, SCALAR_F, 24, GRID, FAST)
    np.testing.assert_array_equal(s.G_cells, s.cmap.cells_of(G1))
    assert check_optimality_relations(s).max_residual <= 1e-6


def test_zero_radius_ball_matrix_case():
    G1 = ConstantDensity(np.array([[0.5, 0.1], [0.1, 0.4]]))
    cG = AdmissibleClass("noise", "l2_entry", 2, level=0.0, center=G1)
    cF = fixed_class("signal", autoregressive([1.0, 0.8], [0.5, -0.3]))
    s = search_least_favorable(cF, cG, PATTERN, PAIR_F, 16, 256, FAST)
    np.testing.assert_array_equal(s.G_cells, s.cmap.cells_of(G1))


def test_collapsed_band_forces_the_limit():
    V = ConstantDensity.identity(1, 0.7)
    cG = AdmissibleClass("noise", "band_trace", 1, level=0.7, lower=V, upper=V)
    s = corollary_mode(ConstantDensity.identity(1), cG, PATTERN, SCALAR_F, 24, GRID, FAST)
    np.testing.assert_array_equal(s.G_cells, s.cmap.cells_of(V))
    one = ConstantDensity.identity(1)
    ref = search_least_favorable(fixed_class("signal", one), fixed_class("noise", V), PATTERN, SCALAR_F, 24, GRID)
    assert s.delta0 == pytest.approx(ref.delta0, rel=1e-12)


def test_search_is_deterministic():
    cF = AdmissibleClass("signal", "moment_trace", 1, level=1.0)
    cG = AdmissibleClass("noise", "l2_trace", 1, level=0.1, center=ConstantDensity.identity(1, 0.5))
    cfg = SearchConfig(restarts=2, seed=3)
    a = search_least_favorable(cF, cG, PATTERN, SCALAR_F, 16, 256, cfg)
    b = search_least_favorable(cF, cG, PATTERN, SCALAR_F, 16, 256, cfg)
    assert a.restart_values == b.restart_values
    np.testing.assert_array_equal(a.F_cells, b.F_cells)
    np.testing.assert_array_equal(a.G_cells, b.G_cells)


def test_wrong_sides_are_rejected():
    cF = AdmissibleClass("signal", "moment_trace", 1, level=1.0)
    with pytest.raises(InfeasibleClassError):
        search_least_favorable(fixed_class("noise", ConstantDensity.identity(1)), cF, PATTERN, SCALAR_F, 16, 256)


@pytest.mark.parametrize("cls_index", [0, 4, 8, 12])
def test_scalar_pairs_converge(cls_index):
    """One representative class per family, paired with a known density."""
    cls = _classes(1)[cls_index]
    known = autoregressive([1.0], [0.5]) if cls.side == "noise" else ConstantDensity.identity(1, 0.5)
    s = corollary_mode(known, cls, PATTERN, SCALAR_F, 24, GRID, FAST)
    assert s.converged
    assert s.relations.passed
    assert verify_saddle(s, 50).passed


def test_matrix_moment_with_known_noise():
    cF = AdmissibleClass("signal", "moment_trace", 2, level=2.0)
    G = ConstantDensity(np.array([[0.5, 0.1], [0.1, 0.4]]))
    s = corollary_mode(G, cF, PATTERN, PAIR_F, 24, GRID, FAST)
    assert s.converged
    assert s.self_consistent()
    assert s.relations.passed
    assert verify_saddle(s, 50).passed


@pytest.mark.slow
def test_matrix_moment_against_entry_ball():
    cF = AdmissibleClass("signal", "moment_matrix", 2, level=np.eye(2))
    cG = AdmissibleClass("noise", "l2_entry", 2, level=0.05, center=ConstantDensity.identity(2, 0.5))
    s = search_least_favorable(cF, cG, PATTERN, PAIR_F, 24, GRID, SearchConfig(restarts=1))
    assert s.converged
    assert max(s.membership().values()) <= 1e-8
    assert s.relations.passed
    assert verify_saddle(s, 50).passed
