import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lipschitz_online.errors import ValidationError
from lipschitz_online.losses import LOSS_KINDS, make_loss

unit = st.floats(0.0, 1.0)


@pytest.mark.parametrize(
    "kind, tau, y, x, expected",
    [
        ("squared", None, 0.0, 1.0, 0.5),
        ("squared", None, 0.25, 0.75, 0.125),
        ("absolute", None, 0.2, 0.9, 0.7),
        ("pinball", 0.25, 0.0, 1.0, 1.0 / 3.0),  # 0.25 * 1 / max(0.25, 0.75)
        ("pinball", 0.25, 1.0, 0.0, 1.0),  # 0.75 * 1 / 0.75
    ],
)
def test_scalar_values(kind, tau, y, x, expected):
    loss = make_loss(kind, tau)
    assert float(loss(np.array([y]), np.array([x]))) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("kind", LOSS_KINDS)
@given(y1=unit, y2=unit, x=unit, tau=st.floats(0.05, 0.95))
def test_one_lipschitz_in_action(kind, y1, y2, x, tau):
    loss = make_loss(kind, tau)
    diff = abs(float(loss(np.array([y1]), np.array([x]))) - float(loss(np.array([y2]), np.array([x]))))
    assert diff <= abs(y1 - y2) + 1e-12


@pytest.mark.parametrize("kind", LOSS_KINDS)
@given(a=unit, b=unit, x=unit, lam=unit)
def test_convex_in_action(kind, a, b, x, lam):
    loss = make_loss(kind, 0.3)
    f = lambda y: float(loss(np.array([y]), np.array([x])))
    assert f(lam * a + (1 - lam) * b) <= lam * f(a) + (1 - lam) * f(b) + 1e-12


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_gradient_matches_finite_difference(kind):
    rng = np.random.default_rng(0)
    loss = make_loss(kind, 0.3)
    y, x = rng.random((8, 3)), rng.random((8, 3))
    h = 1e-7
    g = loss.grad(y, x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (loss(y + e, x) - loss(y - e, x)) / (2 * h)
        np.testing.assert_allclose(g[:, k], fd, atol=1e-6)


def test_vector_loss_is_coordinate_mean():
    loss = make_loss("absolute")
    assert float(loss(np.array([0.0, 1.0]), np.array([1.0, 1.0]))) == pytest.approx(0.5)


def test_scaled():
    loss = make_loss("squared").scaled(3.0)
    assert loss.rescale == pytest.approx(1.5)


@pytest.mark.parametrize("args", [("hinge",), ("pinball", 0.0), ("pinball", 1.0)])
def test_invalid(args):
    with pytest.raises(ValidationError):
        make_loss(*args)
