import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_itr.losses import (
    LossSpec,
    loss_subgradient,
    loss_value,
    pinball,
    pinball_shift_decomposition,
    smoothed_loss,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
taus = st.floats(0.01, 0.99)

LOSSES = [
    LossSpec.squared(),
    LossSpec.pinball(0.25),
    LossSpec.pinball(0.5),
    LossSpec.huber(1.0),
    LossSpec.eps_insensitive(0.5),
]


@pytest.mark.parametrize(
    "spec, r, expected",
    [
        (LossSpec.pinball(0.5), 2.0, 1.0),
        (LossSpec.pinball(0.25), -4.0, 3.0),
        (LossSpec.huber(1.0), 2.0, 1.5),
        (LossSpec.huber(1.0), 0.5, 0.125),
        (LossSpec.eps_insensitive(0.5), 0.3, 0.0),
        (LossSpec.eps_insensitive(0.5), 2.0, 1.5),
        (LossSpec.squared(), 3.0, 4.5),
    ],
)
def test_loss_values(spec, r, expected):
    assert loss_value(spec, r) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "spec, r, expected",
    [
        (LossSpec.pinball(0.25), 1.0, 0.25),
        (LossSpec.pinball(0.25), -1.0, -0.75),
        (LossSpec.pinball(0.25), 0.0, -0.25),
        (LossSpec.huber(1.5), 3.0, 1.5),
        (LossSpec.eps_insensitive(1.0), 0.5, 0.0),
        (LossSpec.eps_insensitive(1.0), 1.0, 0.0),
    ],
)
def test_subgradients(spec, r, expected):
    assert loss_subgradient(spec, r) == pytest.approx(expected)


@pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.tag())
@given(r=finite)
def test_subgradient_inequality(spec, r):
    g = loss_subgradient(spec, r)
    for t in (-3.0, -0.1, 0.0, 0.4, 5.0):
        assert loss_value(spec, t) >= loss_value(spec, r) + g * (t - r) - 1e-9 * (1 + abs(r) + abs(t)) ** 2


@pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.tag())
@given(r1=finite, r2=finite)
def test_convexity_midpoint(spec, r1, r2):
    mid = loss_value(spec, 0.5 * (r1 + r2))
    assert mid <= 0.5 * (loss_value(spec, r1) + loss_value(spec, r2)) + 1e-12 * (1 + r1 * r1 + r2 * r2)


@pytest.mark.parametrize("spec", LOSSES, ids=lambda s: s.tag())
@given(r=finite)
def test_nonnegative_with_root(spec, r):
    assert loss_value(spec, r) >= 0
    assert loss_value(spec, 0.0) == 0


@given(tau=taus, x=finite, y=finite)
def test_pinball_shift_bound(tau, x, y):
    assert abs(pinball(x - y, tau) - pinball(x, tau)) <= abs(y) + 1e-12 * (1 + abs(x) + abs(y))


@given(tau=taus, x=finite, y=finite)
def test_shift_decomposition_identity(tau, x, y):
    direct = pinball(x - y, tau) - pinball(x, tau)
    assert pinball_shift_decomposition(tau, x, y) == pytest.approx(direct, abs=1e-9 * (1 + abs(x) + abs(y)))


def test_shift_decomposition_examples():
    assert pinball_shift_decomposition(0.5, 1.0, -1.0) == pytest.approx(0.5)
    assert pinball(2.0, 0.5) - pinball(1.0, 0.5) == pytest.approx(0.5)
    assert pinball_shift_decomposition(0.25, -1.0, 2.0) == pytest.approx(1.5)
    assert pinball(-3.0, 0.25) - pinball(-1.0, 0.25) == pytest.approx(1.5)


@given(tau=taus, x=finite, c=st.floats(1e-3, 1e3))
def test_pinball_positive_homogeneity(tau, x, c):
    assert pinball(c * x, tau) == pytest.approx(c * pinball(x, tau), rel=1e-12, abs=1e-300)


def test_smoothed_far_from_kink_is_exact():
    v, d1, _ = smoothed_loss(LossSpec.pinball(0.5), 5.0, 0.1)
    assert v == 2.5 and d1 == 0.5


def test_smoothed_at_kink_bounded():
    v, _, _ = smoothed_loss(LossSpec.pinball(0.5), 0.0, 0.1)
    assert 0 <= v <= 0.05


def test_smoothed_squared_exact():
    v, d1, d2 = smoothed_loss(LossSpec.squared(), 3.0, 0.7)
    assert (v, d1, d2) == (4.5, 3.0, 1.0)


@pytest.mark.parametrize("spec", LOSSES[1:], ids=lambda s: s.tag())
@pytest.mark.parametrize("kappa", [1.0, 0.1, 1e-2])
def test_smoothing_error_and_derivative(spec, kappa):
    r = np.linspace(-4, 4, 20001)
    v, d1, d2 = smoothed_loss(spec, r, kappa)
    exact = loss_value(spec, r)
    assert np.max(np.abs(v - exact)) <= kappa / 2
    assert np.all(v >= exact - 1e-15)
    assert np.all(d2 >= 0)
    # derivative against central differences away from patch boundaries
    h = 1e-6
    fd = (smoothed_loss(spec, r + h, kappa)[0] - smoothed_loss(spec, r - h, kappa)[0]) / (2 * h)
    ok = np.abs(fd - d1) <= 1e-6 * np.maximum(1.0, np.abs(d1)) + 1e-5
    assert ok.mean() > 0.999


def test_smoothing_converges_uniformly():
    spec = LossSpec.pinball(0.3)
    r = np.linspace(-2, 2, 4001)
    gaps = [np.max(np.abs(smoothed_loss(spec, r, k)[0] - loss_value(spec, r))) for k in (1, 0.1, 0.01)]
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize(
    "tag, expected",
    [
        ("squared", LossSpec.squared()),
        ("pinball:0.25", LossSpec.pinball(0.25)),
        ("huber:auto", LossSpec.huber("auto")),
        ("huber:1.5", LossSpec.huber(1.5)),
        ("eps:0.2", LossSpec.eps_insensitive(0.2)),
    ],
)
def test_parse_and_tag(tag, expected):
    spec = LossSpec.parse(tag)
    assert spec == expected
    assert LossSpec.parse(spec.tag()) == spec
    assert LossSpec.from_json(spec.to_json()) == spec


@pytest.mark.parametrize("tag", ["bogus", "pinball", "pinball:1.5", "huber:-1", "squared:2", "pinball:auto"])
def test_parse_rejects(tag):
    with pytest.raises(ValueError):
        LossSpec.parse(tag)


def test_auto_must_be_resolved():
    with pytest.raises(ValueError):
        loss_value(LossSpec.huber("auto"), 1.0)
