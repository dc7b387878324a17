"""The gradient checker itself: reporting, determinism guard, dtype guard."""

import numpy as np
import pytest

from qecd import autodiff as ad
from qecd.autodiff import Tensor
from qecd.errors import ParameterError, ReproducibilityError
from qecd.gradcheck import gradient_check


def test_passes_on_a_linear_layer():
    rng = np.random.default_rng(0)
    params = {"w": Tensor(rng.normal(size=(4, 3)), requires_grad=True, dtype=np.float64),
              "b": Tensor(rng.normal(size=(3,)), requires_grad=True, dtype=np.float64)}
    x = Tensor(rng.normal(size=(5, 4)).astype(np.float64))
    r = Tensor(rng.normal(size=(5, 3)).astype(np.float64))

    def forward():
        return ad.tsum(ad.mul(ad.linear(x, params["w"], params["b"]), r))

    report = gradient_check(forward, params, tolerance=1e-3)
    assert report.passed
    assert set(report.per_group) == {"w", "b"}
    assert "PASS" in report.summary()


def test_requires_float64():
    params = {"w": Tensor(np.zeros((2, 2), dtype=np.float32), requires_grad=True)}
    with pytest.raises(ParameterError):
        gradient_check(lambda: ad.tsum(params["w"]), params)


def test_detects_nondeterministic_forward():
    state = {"calls": 0}
    params = {"w": Tensor(np.ones(3), requires_grad=True, dtype=np.float64)}

    def forward():
        state["calls"] += 1
        return ad.tsum(ad.mul(params["w"], float(state["calls"])))

    with pytest.raises(ReproducibilityError):
        gradient_check(forward, params)


def test_reports_failure_per_group():
    # a backward off by a factor of two in one parameter
    params = {"good": Tensor(np.array([1.5]), requires_grad=True, dtype=np.float64),
              "bad": Tensor(np.array([0.5]), requires_grad=True, dtype=np.float64)}

    def broken_double(x):
        out = Tensor(x.data * 1.0)

        def backward(g):
            return (2.0 * g,)

        return ad._record((x,), out, backward, "broken")

    def forward():
        return ad.tsum(ad.add(params["good"], broken_double(params["bad"])))

    report = gradient_check(forward, params, tolerance=1e-3)
    assert not report.passed
    assert report.worst_group == "bad"
    assert report.per_group["good"] < 1e-6
