import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qronos import (
    CalibStats,
    DampingPolicy,
    LayerQuantRequest,
    METHODS,
    ShapeError,
    accumulate,
    chol_of_inverse,
    grid_from_minmax,
    quantize_gpfq_column,
    quantize_layer,
    quantize_optq_column,
    quantize_optq_column_ref,
    quantize_qronos_base_column,
    quantize_qronos_column,
    quantize_rtn,
    quantize_rtn_layer,
)
from qronos.oracle import step_objective, stepwise_argmin_oracle
from helpers import column_instance, layer_instance, on_grid_weights


def _stats_of(x, xq):
    return accumulate(CalibStats(x.shape[1]), x, xq)


def _orthogonal_activations(rng, m, n):
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return q * rng.uniform(1.0, 3.0, size=n)


# ---------------------------------------------------------------------------
# rtn layer


def test_rtn_layer_fixed_point():
    rng = np.random.default_rng(0)
    w = on_grid_weights(rng, 8, 5)
    grids = [grid_from_minmax(w[:, j], 4) for j in range(5)]
    assert np.array_equal(quantize_rtn_layer(w, grids), w)


def test_rtn_layer_matches_per_entry():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((10, 4))
    grids = [grid_from_minmax(w[:, j], 8) for j in range(4)]
    q = quantize_rtn_layer(w, grids)
    for j, g in enumerate(grids):
        assert np.array_equal(q[:, j], quantize_rtn(w[:, j], g))
        assert np.max(np.abs(q[:, j] - w[:, j])) <= g.step_size / 2 + 1e-12


# ---------------------------------------------------------------------------
# column trajectories


def test_optq_on_grid_passthrough():
    rng = np.random.default_rng(2)
    w = on_grid_weights(rng, 8, 1)[:, 0]
    grid = grid_from_minmax(w, 4)
    x = rng.standard_normal((40, 8))
    chol = chol_of_inverse(x.T @ x)
    tr = quantize_optq_column(w, chol, grid, record_trace=True)
    assert np.array_equal(tr.q, w)
    assert all(np.allclose(d, 0.0) for d in tr.deltas)


def test_optq_single_coordinate():
    grid = grid_from_minmax(np.array([-1.0, 1.0]), 4)
    x = np.random.default_rng(3).standard_normal((10, 1))
    chol = chol_of_inverse(x.T @ x)
    tr = quantize_optq_column(np.array([0.4]), chol, grid)
    assert tr.q[0] == quantize_rtn(0.4, grid)


def test_optq_matches_lstsq_reference():
    rng = np.random.default_rng(4)
    w, x, _, grid = column_instance(rng, 8, 64, 4, identical=True)
    chol = chol_of_inverse(x.T @ x)
    fast = quantize_optq_column(w, chol, grid, record_trace=True)
    ref = quantize_optq_column_ref(w, x, grid, record_trace=True)
    assert np.array_equal(fast.q, ref.q)
    for a, b in zip(fast.w_states, ref.w_states):
        assert np.linalg.norm(a - b) <= 1e-8 * max(1.0, np.linalg.norm(b))


def test_optq_ref_orthogonal_columns_decouple():
    rng = np.random.default_rng(5)
    x = _orthogonal_activations(rng, 32, 6)
    w = rng.standard_normal(6)
    grid = grid_from_minmax(w, 4)
    tr = quantize_optq_column_ref(w, x, grid)
    assert np.array_equal(tr.q, quantize_rtn(w, grid))


def test_optq_ref_on_grid_zero_residual():
    rng = np.random.default_rng(6)
    w = on_grid_weights(rng, 6, 1)[:, 0]
    grid = grid_from_minmax(w, 4)
    x = rng.standard_normal((30, 6))
    tr = quantize_optq_column_ref(w, x, grid, record_trace=True)
    assert np.array_equal(tr.q, w)
    assert tr.objective <= 1e-18


def test_gpfq_identical_orthogonal_passthrough():
    rng = np.random.default_rng(7)
    x = _orthogonal_activations(rng, 32, 6)
    w = on_grid_weights(rng, 6, 1)[:, 0]
    grid = grid_from_minmax(w, 4)
    tr = quantize_gpfq_column(w, x, x, grid)
    assert np.array_equal(tr.q, w)


def test_gpfq_single_coordinate_formula():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((16, 1))
    xq = x + 0.1 * rng.standard_normal((16, 1))
    w = np.array([0.7])
    grid = grid_from_minmax(np.array([-1.0, 1.0]), 8)
    tr = quantize_gpfq_column(w, x, xq, grid)
    expect = quantize_rtn(float(xq[:, 0] @ (w[0] * x[:, 0])) / float(xq[:, 0] @ xq[:, 0]), grid)
    assert tr.q[0] == expect


def test_gpfq_steps_match_alphabet_enumeration():
    rng = np.random.default_rng(9)
    w, x, xq, grid = column_instance(rng, 6, 48, 4)
    tr = quantize_gpfq_column(w, x, xq, grid, record_trace=True)
    u = np.zeros(x.shape[0])
    for t in range(6):
        target = u + w[t] * x[:, t]
        best, best_obj = stepwise_argmin_oracle(target, xq[:, t], grid)
        got = step_objective(target, xq[:, t], tr.q[t])
        assert got <= best_obj + 1e-12 * max(1.0, best_obj)
        u = target - tr.q[t] * xq[:, t]


def test_gpfq_zero_column_falls_back_with_warning():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((20, 4))
    xq = x.copy()
    xq[:, 2] = 0.0
    w = rng.standard_normal(4)
    grid = grid_from_minmax(w, 4)
    with pytest.warns(RuntimeWarning):
        tr = quantize_gpfq_column(w, x, xq, grid)
    assert tr.q[2] == quantize_rtn(w[2], grid)


def test_qronos_base_identical_paths_on_grid_passthrough():
    rng = np.random.default_rng(11)
    w = on_grid_weights(rng, 6, 1)[:, 0]
    grid = grid_from_minmax(w, 4)
    x = rng.standard_normal((48, 6))
    h = x.T @ x
    tr = quantize_qronos_base_column(w, h, h.copy(), grid)
    assert np.array_equal(tr.q, w)


def test_qronos_base_single_coordinate():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((16, 1))
    xq = x + 0.2 * rng.standard_normal((16, 1))
    h = xq.T @ xq
    g = xq.T @ x
    w = np.array([0.9])
    grid = grid_from_minmax(np.array([-1.0, 1.0]), 4)
    tr = quantize_qronos_base_column(w, h, g, grid)
    assert tr.q[0] == quantize_rtn(float(g[0, 0]) * w[0] / float(h[0, 0]), grid)


def test_qronos_efficient_equals_base():
    rng = np.random.default_rng(13)
    w, x, xq, grid = column_instance(rng, 16, 128, 4)
    h = xq.T @ xq
    g = xq.T @ x
    base = quantize_qronos_base_column(w, h, g, grid, record_trace=True)
    eff = quantize_qronos_column(w, h, g, chol_of_inverse(h), grid, record_trace=True)
    assert np.array_equal(base.q, eff.q)
    for a, b in zip(base.w_states, eff.w_states):
        assert np.linalg.norm(a - b) <= 1e-8 * max(1.0, np.linalg.norm(b))


def test_qronos_identical_paths_on_grid_passthrough():
    rng = np.random.default_rng(14)
    w = on_grid_weights(rng, 6, 1)[:, 0]
    grid = grid_from_minmax(w, 4)
    x = rng.standard_normal((48, 6))
    h = x.T @ x
    tr = quantize_qronos_column(w, h, h.copy(), chol_of_inverse(h), grid)
    assert np.array_equal(tr.q, w)


def test_trace_first_state_is_input_column():
    rng = np.random.default_rng(15)
    w, x, xq, grid = column_instance(rng, 8, 64, 4)
    h, g = xq.T @ xq, xq.T @ x
    for tr in (
        quantize_optq_column(w, chol_of_inverse(h), grid, record_trace=True),
        quantize_qronos_base_column(w, h, g, grid, record_trace=True),
        quantize_qronos_column(w, h, g, chol_of_inverse(h), grid, record_trace=True),
        quantize_gpfq_column(w, x, xq, grid, record_trace=True),
        quantize_optq_column_ref(w, x, grid, record_trace=True),
    ):
        assert np.array_equal(tr.w_states[0], w)
        assert set(np.round(tr.q, 10)) <= set(np.round(grid.alphabet, 10))


# ---------------------------------------------------------------------------
# layer driver


def test_layer_rtn_dispatch():
    rng = np.random.default_rng(16)
    w = rng.standard_normal((8, 3))
    grids = [grid_from_minmax(w[:, j], 4) for j in range(3)]
    req = LayerQuantRequest(weights=w, grids=grids, method="rtn")
    q, report = quantize_layer(req)
    assert np.array_equal(q, quantize_rtn_layer(w, grids))
    assert report.damping_lambda == 0.0
    assert np.all(np.isnan(report.objectives))


@pytest.mark.parametrize("method", [m for m in METHODS if m != "rtn"])
def test_layer_matches_column_ops(method):
    """The vectorized layer path and the traced per-column path agree."""
    rng = np.random.default_rng(17)
    w, x, xq, stats, grids = layer_instance(rng, 10, 80, 6, 4)
    kw = {"x": x} if method == "optq_ref" else {}
    fast, _ = quantize_layer(
        LayerQuantRequest(weights=w, grids=grids, method=method, stats=stats,
                          damping=DampingPolicy("mean_diag_percent")), **kw
    )
    traced, rep = quantize_layer(
        LayerQuantRequest(weights=w, grids=grids, method=method, stats=stats,
                          damping=DampingPolicy("mean_diag_percent"), record_trace=True), **kw
    )
    assert np.array_equal(fast, traced)
    assert len(rep.traces) == 6


def test_layer_gpfq_moment_identity_matches_residual_recursion():
    rng = np.random.default_rng(18)
    w, x, xq, stats, grids = layer_instance(rng, 8, 64, 5, 4)
    q, report = quantize_layer(
        LayerQuantRequest(weights=w, grids=grids, method="gpfq", stats=stats,
                          damping=DampingPolicy("none"), order="natural")
    )
    for j in range(5):
        tr = quantize_gpfq_column(w[:, j], x, xq, grids[j])
        assert np.array_equal(q[:, j], tr.q)


def test_layer_collapse_to_optq_on_identical_paths():
    rng = np.random.default_rng(19)
    w, x, _, stats, grids = layer_instance(rng, 12, 96, 4, 16, identical=True)
    shared = DampingPolicy("mean_diag_percent")
    q_opt, _ = quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="optq",
                                                stats=stats, damping=shared))
    q_qro, _ = quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="qronos",
                                                stats=stats, damping=shared))
    assert np.array_equal(q_opt, q_qro)


def test_layer_determinism():
    rng = np.random.default_rng(20)
    w, x, xq, stats, grids = layer_instance(rng, 9, 72, 4, 4)
    req = LayerQuantRequest(weights=w, grids=grids, method="qronos", stats=stats)
    q1, r1 = quantize_layer(req, x=x, xq=xq)
    q2, r2 = quantize_layer(req, x=x, xq=xq)
    assert q1.tobytes() == q2.tobytes()
    assert np.array_equal(r1.objectives, r2.objectives)


def test_layer_order_is_internal_bijection():
    """Running permuted inputs without ordering equals the ordered run."""
    rng = np.random.default_rng(21)
    w, x, xq, stats, grids = layer_instance(rng, 8, 64, 3, 4)
    from qronos import order_by_diag, permute_stats, permute_weights, unpermute_result

    ordered, _ = quantize_layer(
        LayerQuantRequest(weights=w, grids=grids, method="qronos", stats=stats,
                          damping=DampingPolicy("none"), order="diag")
    )
    order = order_by_diag(stats.H)
    manual, _ = quantize_layer(
        LayerQuantRequest(weights=permute_weights(w, order), grids=grids, method="qronos",
                          stats=permute_stats(stats, order), damping=DampingPolicy("none"),
                          order="natural")
    )
    assert np.array_equal(ordered, unpermute_result(manual, order))


def test_layer_residual_objective_form():
    rng = np.random.default_rng(22)
    w, x, xq, stats, grids = layer_instance(rng, 6, 48, 3, 4)
    q, report = quantize_layer(
        LayerQuantRequest(weights=w, grids=grids, method="qronos", stats=stats), x=x, xq=xq
    )
    assert report.objective_form == "residual"
    resid = x @ w - xq @ q
    assert np.allclose(report.objectives, 0.5 * np.sum(resid**2, axis=0))


def test_layer_moment_objective_is_shifted_residual():
    """Moment-form objective differs from the true residual by a q-free constant."""
    rng = np.random.default_rng(23)
    w, x, xq, stats, grids = layer_instance(rng, 6, 48, 3, 4)
    req = LayerQuantRequest(weights=w, grids=grids, method="optq", stats=stats,
                            damping=DampingPolicy("none"))
    q, rep_m = quantize_layer(req)
    assert rep_m.objective_form == "moment_quadratic"
    for j in range(3):
        direct = 0.5 * float(q[:, j] @ stats.H @ q[:, j]) - float(q[:, j] @ stats.G @ w[:, j])
        assert rep_m.objectives[j] == pytest.approx(direct, rel=1e-12, abs=1e-9)


def test_layer_validation_errors():
    rng = np.random.default_rng(24)
    w = rng.standard_normal((6, 2))
    grids = [grid_from_minmax(w[:, j], 4) for j in range(2)]
    with pytest.raises(ValueError):
        quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="optq"))
    with pytest.raises(ValueError):
        quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="nope"))
    with pytest.raises(ShapeError):
        quantize_layer(LayerQuantRequest(weights=w, grids=grids[:1], method="rtn"))
    x = rng.standard_normal((10, 6))
    stats = _stats_of(x, x)
    with pytest.raises(ValueError):
        quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="optq_ref", stats=stats))


def test_singular_trailing_block_raises_without_damping():
    rng = np.random.default_rng(25)
    x = rng.standard_normal((12, 5))
    x[:, 4] = x[:, 3]  # exactly dependent columns
    w = rng.standard_normal((5, 2))
    stats = _stats_of(x, x)
    grids = [grid_from_minmax(w[:, j], 4) for j in range(2)]
    from qronos import NotPositiveDefiniteError

    with pytest.raises(NotPositiveDefiniteError):
        quantize_layer(LayerQuantRequest(weights=w, grids=grids, method="qronos",
                                         stats=stats, damping=DampingPolicy("none")))


def test_layer_reports_gpfq_zero_column_warning():
    rng = np.random.default_rng(26)
    x = rng.standard_normal((20, 4))
    xq = x.copy()
    xq[:, 1] = 0.0
    w = rng.standard_normal((4, 2))
    stats = _stats_of(x, xq)
    grids = [grid_from_minmax(w[:, j], 4) for j in range(2)]
    with pytest.warns(RuntimeWarning):
        q, report = quantize_layer(
            LayerQuantRequest(weights=w, grids=grids, method="gpfq", stats=stats,
                              damping=DampingPolicy("none"), order="natural")
        )
    assert any("zero" in msg for msg in report.warnings)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["optq", "gpfq", "qronos", "qronos_base"]))
def test_layer_outputs_stay_on_grid(seed, method):
    rng = np.random.default_rng(seed)
    w, x, xq, stats, grids = layer_instance(rng, 6, 48, 3, 4)
    q, _ = quantize_layer(LayerQuantRequest(weights=w, grids=grids, method=method, stats=stats))
    for j, g in enumerate(grids):
        assert set(np.round(q[:, j], 10)) <= set(np.round(g.alphabet, 10))
