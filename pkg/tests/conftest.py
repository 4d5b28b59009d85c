"""Shared fixtures and numerical oracles for the test suite."""

import numpy as np
import pytest

from setgrade import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the decorated test once per available kernel backend."""
    previous = kernels.active.NAME
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def fd_gradient(f, arrays, index, step=1e-5):
    """Central-difference gradient of scalar f(arrays) w.r.t. arrays[index].

    Independent of the tape: evaluates f twice per entry with the entry
    nudged by +-step. Arrays are copied, never mutated in place.
    """
    target = arrays[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        ij = it.multi_index
        bumped = [a.copy() for a in arrays]
        bumped[index][ij] = target[ij] + step
        hi = f(bumped)
        bumped[index][ij] = target[ij] - step
        lo = f(bumped)
        grad[ij] = (hi - lo) / (2.0 * step)
    return grad


def assert_grad_close(analytic, numeric, rel_tol=1e-4, abs_floor=1e-3,
                      abs_tol=1e-6):
    """Relative check where the reference is large, absolute where tiny."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    big = np.abs(numeric) >= abs_floor
    if big.any():
        rel = np.abs(analytic[big] - numeric[big]) / np.abs(numeric[big])
        assert rel.max() < rel_tol, f"max rel err {rel.max():.3g}"
    small = ~big
    if small.any():
        err = np.abs(analytic[small] - numeric[small])
        assert err.max() < abs_tol, f"max abs err {err.max():.3g}"
