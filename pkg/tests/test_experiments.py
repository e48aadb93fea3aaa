import math

import numpy as np
import pytest

from losscurv.errors import InvalidInput, NotPositiveSemidefinite
from losscurv.experiments import (minibatch_analysis, ou_escape, ou_exact_escape,
                                  perturbation_sweep, saddle_grid, unit_directions)
from losscurv.fields import ScalarField, make_quadratic_field
from losscurv.geometry import scalar_curvature_at_min
from losscurv.io import read_csv, write_csv, write_json


def random_psd(rng, q):
    b = rng.normal(size=(q, q))
    return b @ b.T / q


# --- perturbations ----------------------------------------------------------------

def test_unit_directions_on_sphere():
    d = unit_directions(500, 7, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-14)
    assert abs(np.mean(d)) < 0.05


def test_one_dimensional_equality_case():
    lam = 3.0
    for eps in (1e-1, 1e-2, 1e-3):
        rep = perturbation_sweep(make_quadratic_field([[lam]]), np.zeros(1), eps, 50, seed=1)
        np.testing.assert_allclose(rep.deltas, rep.bound, rtol=1e-12)
        assert rep.bound == pytest.approx(0.25 * eps**4 * lam**2, rel=1e-15)


def test_diag_quadratic_max_ratio_is_largest_eigen_direction():
    rep = perturbation_sweep(make_quadratic_field(np.diag([1.0, 2.0])), np.zeros(2), 0.01, 1000, seed=0)
    assert rep.violations == 0
    assert rep.bound == pytest.approx(0.25 * 0.01**4 * 5)
    # the sampled maximum approaches 1/4 eps^4 lambda_max^2 = 4/5 of the bound
    assert 0.79 <= rep.max_ratio <= 0.8 + 1e-12
    assert np.all(rep.deltas >= 0)


def test_no_violations_on_quadratics():
    rng = np.random.default_rng(2)
    for q in (2, 5, 12):
        f = make_quadratic_field(random_psd(rng, q))
        ratios = []
        for eps in (1e-1, 1e-2, 1e-3):
            rep = perturbation_sweep(f, np.zeros(q), eps, 1000, seed=7)
            assert rep.violations == 0 and rep.failures == 0
            ratios.append(rep.max_ratio)
        # exact quadratics have no remainder, so the ratio does not move with eps
        assert ratios[0] >= ratios[1] * (1 - 1e-9) and ratios[1] >= ratios[2] * (1 - 1e-9)


def test_cubic_remainder_vanishes_as_eps_shrinks():
    h = np.diag([1.0, 2.0])
    f = ScalarField(2, lambda x: 0.5 * x @ h @ x + x[0] ** 3, lambda x: h @ x + np.array([3 * x[0] ** 2, 0.0]),
                    lambda x: h + np.array([[6 * x[0], 0.0], [0.0, 0.0]]))
    limit = perturbation_sweep(make_quadratic_field(h), np.zeros(2), 1e-3, 1000, seed=4).max_ratio
    gaps = [abs(perturbation_sweep(f, np.zeros(2), eps, 1000, seed=4).max_ratio - limit)
            for eps in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert perturbation_sweep(f, np.zeros(2), 1e-2, 1000, seed=4).violations == 0


def test_gaussian_mode_and_failures():
    f = make_quadratic_field(np.eye(3))
    rep = perturbation_sweep(f, np.zeros(3), mode="gaussian", sigma=0.1, n_directions=400, seed=2)
    assert rep.mode == "gaussian" and rep.violations == 0
    np.testing.assert_allclose(rep.deltas, 0.25 * rep.perturbation_norms**4, rtol=1e-12)

    partial = ScalarField(1, lambda x: 0.5 * x[0] ** 2 if x[0] <= 0 else math.nan)
    rep = perturbation_sweep(partial, np.zeros(1), 0.1, 100, seed=0, trace_h2=1.0)
    assert rep.failures > 0 and rep.failures + rep.deltas.size == 100


def test_perturbation_input_checks():
    f = make_quadratic_field(np.eye(2))
    with pytest.raises(InvalidInput):
        perturbation_sweep(f, np.zeros(2), epsilon=0.0)
    with pytest.raises(InvalidInput):
        perturbation_sweep(f, np.zeros(2), mode="cube")


def test_scaled_family_ordering():
    rng = np.random.default_rng(10)
    h0 = random_psd(rng, 6)
    scs, tr2s, means = [], [], []
    for lam in (0.5, 1.0, 2.0, 4.0):
        h = lam * h0
        rep = perturbation_sweep(make_quadratic_field(h), np.zeros(6), mode="gaussian", sigma=0.1,
                                 n_directions=500, seed=123)
        scs.append(scalar_curvature_at_min(h))
        tr2s.append(float(np.sum(h * h)))
        means.append(rep.mean_delta)
    assert scs == sorted(scs) and tr2s == sorted(tr2s) and means == sorted(means)


# --- OU escape ------------------------------------------------------------------------

def test_escape_at_time_zero():
    rep = ou_escape(np.diag([1.0, 2.0]), 0.0, 0.001, n_paths=100)
    assert rep.empirical_escape == 0.0 and rep.predicted == 0.0 and rep.exact == 0.0


def test_escape_one_dimensional():
    rep = ou_escape([[1.0]], 0.01, 0.001, n_paths=100_000, seed=1)
    assert rep.rel_error <= 0.05
    assert rep.exact == pytest.approx(0.25 * (1 - math.exp(-0.02)), rel=1e-14)
    assert abs(rep.empirical_escape - rep.exact) <= 3 * rep.std_error


def test_escape_diag_and_oracle():
    h = np.diag([1.0, 2.0])
    rep = ou_escape(h, 0.005, 0.0005, n_paths=100_000, seed=1, keep_paths=True)
    assert rep.predicted == pytest.approx(0.0125)
    assert rep.rel_error <= 0.05
    assert abs(rep.empirical_escape - rep.exact) <= 3 * rep.std_error
    assert np.all(rep.escapes >= 0)


def test_exact_oracle_rotation_invariant():
    rng = np.random.default_rng(0)
    rot, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    h = np.diag([0.5, 1.0, 3.0])
    assert ou_exact_escape(rot @ h @ rot.T, 0.2) == pytest.approx(ou_exact_escape(h, 0.2), rel=1e-12)


def test_escape_halving_dt():
    h = np.diag([1.0, 2.0])
    diffs, var = [], 0.0
    for rep_i in range(10):
        coarse = ou_escape(h, 0.01, 0.001, n_paths=20_000, seed=2 * rep_i)
        fine = ou_escape(h, 0.01, 0.0005, n_paths=20_000, seed=2 * rep_i + 1)
        diffs.append(coarse.empirical_escape - fine.empirical_escape)
        var += coarse.std_error**2 + fine.std_error**2
    assert abs(np.mean(diffs)) < 2 * math.sqrt(var) / 10


def test_escape_input_errors():
    with pytest.raises(NotPositiveSemidefinite):
        ou_escape(np.diag([1.0, -1.0]), 0.01, 0.001)
    with pytest.raises(InvalidInput):
        ou_escape(np.diag([1.0, 2.0]), 0.01, 0.1)
    with pytest.raises(InvalidInput):
        ou_escape(np.diag([1.0, 2.0]), 0.0105, 0.001)


# --- minibatches ----------------------------------------------------------------------

def test_minibatch_counterexample():
    rep = minibatch_analysis([np.diag([2.0, 0.0]), np.diag([0.0, 2.0])])
    assert rep.per_batch_sc == [0.0, 0.0]
    assert rep.full_sc == 2.0 and rep.sc_gap == 2.0
    assert rep.trace_gap == 0.0


def test_identical_batches_have_no_gap():
    h = np.array([[2.0, 0.3], [0.3, 1.0]])
    rep = minibatch_analysis([h, h, h])
    assert rep.sc_gap == pytest.approx(0.0, abs=1e-14)


def test_minibatch_trace_linearity():
    rng = np.random.default_rng(3)
    for k in (2, 3, 7):
        hs = [random_psd(rng, 5) for _ in range(k)]
        rep = minibatch_analysis(hs)
        assert rep.trace_gap <= 1e-10 * (1 + abs(rep.full_trace))
        np.testing.assert_allclose(rep.full_hessian, sum(hs) / k, atol=1e-12)


def test_minibatch_errors():
    with pytest.raises(InvalidInput):
        minibatch_analysis([np.eye(2)])
    with pytest.raises(InvalidInput):
        minibatch_analysis([np.eye(2), np.eye(3)])


def test_minibatch_on_mlp_partition():
    from losscurv.nn import MlpSpec, make_sine_dataset, minibatch_hessians, mlp_loss_field

    spec = MlpSpec((1, 4, 1))
    data = make_sine_dataset(70, 0.1, 0)
    params = spec.init_params(3)
    hs = minibatch_hessians(spec, data, params, 7)
    full = mlp_loss_field(spec, data).hessian(params)
    rep = minibatch_analysis(hs)
    # equal batch sizes make the full loss the mean of the batch losses
    np.testing.assert_allclose(rep.full_hessian, full, atol=1e-7)
    assert rep.trace_gap <= 1e-10 * (1 + abs(rep.full_trace))


# --- saddle grid ----------------------------------------------------------------------

def test_saddle_grid_flattens_along_u():
    grid = saddle_grid(0.1, (0.0, 60.0), (0.0, 2 * math.pi), 81)
    u = grid.u
    first, last = u <= 15.0, u >= 45.0
    for col in (np.abs(grid.trace), np.abs(grid.sc)):
        assert col[last].max() < col[first].max()


def test_saddle_grid_critical_saddles():
    grid = saddle_grid(0.1, (0.0, 2 * math.pi), (0.0, 2 * math.pi), 3)
    assert grid.u.size == 9
    assert np.max(np.abs(grid.trace)) < 1e-12
    assert np.all(grid.sc < 0)


def test_saddle_grid_zero_row_and_shape():
    grid = saddle_grid(0.1, (0.0, 6.0), (0.0, 2 * math.pi), (11, 13))
    assert grid.u.size == 143
    assert np.all(grid.f[grid.v == 0.0] == 0.0)
    with pytest.raises(InvalidInput):
        saddle_grid(0.1, resolution=1)


# --- output files ---------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    cols = {"a": np.array([0.1, 1 / 3, -2e-300]), "b": np.array([1.0, 2.0, 3.0])}
    path = write_csv(tmp_path / "x.csv", cols, {"seed": 5, "name": "demo"})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "a,b"
    config, back = read_csv(path)
    assert config == {"name": "demo", "seed": 5}
    for k in cols:
        assert np.array_equal(back[k], cols[k])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "y.csv", {"a": [1.0], "b": [1.0, 2.0]})


def test_json_report_serialises(tmp_path):
    import json

    rep = minibatch_analysis([np.diag([2.0, 0.0]), np.diag([0.0, 2.0])])
    payload = json.loads(write_json(tmp_path / "r.json", rep.as_dict()).read_text())
    assert payload["sc_gap"] == 2.0 and "full_hessian" not in payload
