import math
import random
import warnings

import numpy as np
import pytest

from pantilt.errors import DegenerateFitError, ExtrapolationWarning
from pantilt.servo_model import (
    PulseAngleMap,
    PulseAngleSample,
    angular_tolerance,
    fit_pulse_angle,
    pulse_to_angle,
)


def test_two_point_line():
    m = fit_pulse_angle([PulseAngleSample(600, 0), PulseAngleSample(2400, 180)])
    assert m.scale == pytest.approx(0.1, abs=1e-15)
    assert m.offset == pytest.approx(-60, abs=1e-11)
    assert m.sigma == 0
    assert m.pulse_range == (600, 2400)


def test_noiseless_line_recovered():
    samples = [PulseAngleSample(p, 0.05 * p + 3) for p in np.linspace(700, 2300, 17)]
    m = fit_pulse_angle(samples)
    assert m.scale == pytest.approx(0.05, abs=1e-9)
    assert m.offset == pytest.approx(3, abs=1e-9)
    assert m.sigma <= 1e-12
    for s in samples:
        assert pulse_to_angle(m, s.pulse) == pytest.approx(s.angle, abs=1e-9)


def test_order_invariance():
    rng = np.random.default_rng(3)
    samples = [PulseAngleSample(p, 0.1 * p - 150 + rng.normal(0, 0.3)) for p in rng.uniform(600, 2400, 30)]
    a = fit_pulse_angle(samples)
    shuffled = samples[:]
    random.Random(1).shuffle(shuffled)
    b = fit_pulse_angle(shuffled)
    assert b.scale == pytest.approx(a.scale, rel=1e-12)
    assert b.offset == pytest.approx(a.offset, rel=1e-12, abs=1e-12)
    assert b.sigma == pytest.approx(a.sigma, rel=1e-10)


def test_degenerate_fit():
    with pytest.raises(DegenerateFitError):
        fit_pulse_angle([PulseAngleSample(1500, 10)])
    with pytest.raises(DegenerateFitError):
        fit_pulse_angle([PulseAngleSample(1500, 10), PulseAngleSample(1500, 12)])


def test_monte_carlo_sigma_and_standard_errors():
    # scale/offset within 3 standard errors in all but a handful of 100 draws
    sigma = 0.1
    pulses = np.linspace(600, 2400, 28)
    sxx = np.sum((pulses - pulses.mean()) ** 2)
    se_scale = sigma / math.sqrt(sxx)
    se_offset = sigma * math.sqrt(1 / 28 + pulses.mean() ** 2 / sxx)
    fits = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        angles = 0.1 * pulses - 60 + rng.normal(0, sigma, size=28)
        fits.append(fit_pulse_angle([PulseAngleSample(p, a) for p, a in zip(pulses, angles)]))
    assert all(0.06 <= f.sigma <= 0.15 for f in fits)
    assert sum(abs(f.scale - 0.1) > 3 * se_scale for f in fits) <= 2
    assert sum(abs(f.offset + 60) > 3 * se_offset for f in fits) <= 2


def test_pulse_to_angle_examples():
    m = PulseAngleMap(0.1, -60.0)
    assert pulse_to_angle(m, 600) == pytest.approx(0)
    assert pulse_to_angle(m, 2400) == pytest.approx(180)
    assert pulse_to_angle(m, 1500) == pytest.approx(90)


def test_extrapolation_warns_but_maps():
    m = PulseAngleMap(0.1, -60.0, pulse_range=(1000, 2000))
    with pytest.warns(ExtrapolationWarning):
        assert pulse_to_angle(m, 2400) == pytest.approx(180)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pulse_to_angle(m, 1500)


def test_angular_tolerance():
    assert angular_tolerance(PulseAngleMap(0.1, 0, sigma=1.0)) == pytest.approx(3 * math.pi / 180)
    assert angular_tolerance(PulseAngleMap(0.1, 0, sigma=0.0)) == 0
    assert angular_tolerance(PulseAngleMap(0.1, 0, sigma=0.2)) == pytest.approx(0.010472, abs=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(scale=0, offset=0), dict(scale=1, offset=0, sigma=-1), dict(scale=1, offset=0, pulse_range=(5, 5))],
)
def test_map_invariants(kwargs):
    with pytest.raises(ValueError):
        PulseAngleMap(**kwargs)
