"""Power iteration and log-log fitting against direct linear algebra."""

import numpy as np
import pytest

from obslab.estimate import (LogLogFit, PowerResult, gram_operator_norm,
                             loglog_fit, matrix_operator_norm, probe_vector)


def test_probe_vector_is_deterministic_and_unit():
    a = probe_vector(64, seed=123)
    b = probe_vector(64, seed=123)
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert not np.array_equal(a, probe_vector(64, seed=124))


def test_power_iteration_matches_svd():
    rng = np.random.default_rng(42)
    k = rng.standard_normal((48, 48)) + 1j * rng.standard_normal((48, 48))
    top = np.linalg.svd(k, compute_uv=False)[0]
    res = gram_operator_norm(lambda v: k.conj().T @ (k @ v), 48, tol=1e-10)
    assert res.converged
    assert res.value == pytest.approx(top, rel=1e-8)
    res2 = matrix_operator_norm(lambda v: k @ v, lambda v: k.conj().T @ v, 48,
                                tol=1e-10)
    assert res2.value == pytest.approx(top, rel=1e-8)


def test_power_iteration_zero_operator_short_circuits():
    res = gram_operator_norm(lambda v: np.zeros_like(v), 32)
    assert res.value == 0.0 and res.converged and res.iterations == 1


def test_power_iteration_reports_nonconvergence():
    # two nearly equal top singular values stall the iteration
    d = np.diag([1.0, 1.0 - 1e-12] + [0.1] * 14)
    res = gram_operator_norm(lambda v: d @ (d @ v), 16, tol=1e-14, max_iter=10)
    assert isinstance(res, PowerResult)
    assert not res.converged
    assert res.iterations == 10
    assert res.value == pytest.approx(1.0, abs=1e-6)


def test_loglog_fit_recovers_exact_power_law():
    t = np.linspace(2.0, 50.0, 20)
    fit = loglog_fit(t, 3.5 * t**-2.75)
    assert isinstance(fit, LogLogFit)
    assert fit.slope == pytest.approx(-2.75, abs=1e-12)
    assert np.exp(fit.intercept) == pytest.approx(3.5, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_loglog_fit_discards_head_and_floor():
    t = np.linspace(1.0, 10.0, 10)
    v = t**-3.0
    v[0] = 100.0            # transient head point, excluded by head_fraction
    v[-1] = 1e-30           # numerical dust below the floor
    fit = loglog_fit(t, v, head_fraction=0.2, floor=1e-20)
    assert fit.slope == pytest.approx(-3.0, abs=1e-12)
    assert fit.times[0] > t[1] - 1e-12
    assert fit.times[-1] < t[-1]


def test_loglog_fit_needs_three_points():
    with pytest.raises(ValueError):
        loglog_fit([1.0, 2.0, 3.0], [0.0, 0.0, 1.0], head_fraction=0.0)
