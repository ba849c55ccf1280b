import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from spreadsim.errors import InvalidMomentsError
from spreadsim.hazards import (
    LogNormalParams,
    Shedding,
    erfcx_stable,
    lognormal_from_mean_median,
    lognormal_hazard,
    lognormal_pdf,
    lognormal_survival,
    shedding,
)

EI = LogNormalParams(mu=math.log(4.0), sigma=0.6680472308365776)
IR = LogNormalParams(mu=math.log(5.0), sigma=0.9005166385005492)


def test_erfcx_zero_exact():
    assert erfcx_stable(0.0) == 1.0


def test_erfcx_grid_accuracy():
    z = np.linspace(-9.0, 30.0, 10_001)
    ours = erfcx_stable(z)
    ref = special.erfcx(z)
    rel = np.abs(ours - ref) / np.abs(ref)
    near_branch = np.abs(np.abs(z) - 3.5) < 0.1
    assert rel[near_branch].max() <= 5e-2
    assert rel[~near_branch].max() <= 1e-2


def test_erfcx_asymptotic_value():
    # frozen from the high-precision reference: erfcx(20) = 0.02817434874...
    assert erfcx_stable(20.0) == pytest.approx(0.028174348741051323, rel=1e-6)


def test_erfcx_branch_continuity():
    delta = 1e-6
    jump = abs(erfcx_stable(3.5 + delta) - erfcx_stable(3.5 - delta))
    assert jump / special.erfcx(3.5) <= 5e-2


def test_erfcx_scalar_and_array_agree():
    z = np.array([-5.0, -1.0, 0.0, 2.0, 3.6, 12.0])
    arr = erfcx_stable(z)
    for zi, v in zip(z, arr):
        assert erfcx_stable(float(zi)) == v


def test_hazard_zero_at_origin():
    assert lognormal_hazard(0.0, EI) == 0.0
    assert lognormal_hazard(0.0, IR) == 0.0
    with pytest.raises(ValueError):
        lognormal_hazard(-1.0, EI)


def test_hazard_at_median_closed_form():
    # z = 0 there, erfcx(0) = 1: h = sqrt(2/pi) / (tau * sigma)
    expected = math.sqrt(2.0 / math.pi) / (4.0 * EI.sigma)
    assert lognormal_hazard(4.0, EI) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.29859, abs=5e-5)


def _quad_hazard(tau: float, p: LogNormalParams) -> float:
    f = stats.lognorm.pdf(tau, s=p.sigma, scale=math.exp(p.mu))
    s = stats.lognorm.sf(tau, s=p.sigma, scale=math.exp(p.mu))
    return f / s


@pytest.mark.parametrize("params", [EI, IR])
def test_hazard_matches_density_over_survival(params):
    for tau in np.concatenate([np.linspace(0.05, 50.0, 120), [0.01, 80.0]]):
        ours = lognormal_hazard(float(tau), params)
        ref = _quad_hazard(float(tau), params)
        z = (math.log(tau) - params.mu) / (params.sigma * math.sqrt(2.0))
        tol = 1e-1 if abs(abs(z) - 3.5) < 0.2 else 1e-2
        assert ours == pytest.approx(ref, rel=tol)


@pytest.mark.parametrize("params", [EI, IR])
def test_cumulative_hazard_consistency(params):
    # integral of h over [0, T] must equal -ln S(T)
    for t_end in (5.0, 20.0, 50.0):
        integral, _ = integrate.quad(
            lambda t: lognormal_hazard(t, params), 0.0, t_end, limit=200
        )
        ref = -math.log(lognormal_survival(t_end, params))
        assert integral == pytest.approx(ref, abs=1e-3)


def test_hazard_positive_and_vectorized():
    taus = np.linspace(0.0, 60.0, 500)
    h = lognormal_hazard(taus, IR)
    assert np.all(h >= 0.0)
    assert h[0] == 0.0
    assert np.all(np.isfinite(h))


def test_from_mean_median_known_pairs():
    ei = lognormal_from_mean_median(5.0, 4.0)
    assert ei.mu == pytest.approx(1.38629, abs=1e-5)
    assert ei.sigma == pytest.approx(0.66805, abs=1e-5)
    ir = lognormal_from_mean_median(7.5, 5.0)
    assert ir.mu == pytest.approx(1.60944, abs=1e-5)
    assert ir.sigma == pytest.approx(0.90052, abs=1e-5)


def test_from_mean_median_round_trip():
    for mean, median in [(5.0, 4.0), (7.5, 5.0), (12.0, 3.0)]:
        p = lognormal_from_mean_median(mean, median)
        assert p.mean == pytest.approx(mean, rel=1e-12)
        assert p.median == pytest.approx(median, rel=1e-12)


def test_from_mean_median_monte_carlo():
    p = lognormal_from_mean_median(5.0, 4.0)
    rng = np.random.default_rng(12)
    draws = rng.lognormal(p.mu, p.sigma, size=100_000)
    assert abs(np.median(draws) - 4.0) < 0.05
    assert abs(draws.mean() - 5.0) < 0.1


def test_from_mean_median_invalid():
    with pytest.raises(InvalidMomentsError):
        lognormal_from_mean_median(4.0, 4.0)
    with pytest.raises(InvalidMomentsError):
        lognormal_from_mean_median(3.0, 4.0)
    with pytest.raises(InvalidMomentsError):
        lognormal_from_mean_median(5.0, -1.0)


def test_shedding_constant():
    s = Shedding.constant()
    assert shedding(s, 0.0) == 1.0
    assert shedding(s, 17.3) == 1.0


def test_shedding_density_peak_normalized():
    s = Shedding.density_peak(IR)
    assert shedding(s, IR.mode) == pytest.approx(1.0, rel=1e-12)
    taus = np.linspace(0.0, 40.0, 200)
    vals = shedding(s, taus)
    assert vals.max() <= 1.0 + 1e-12
    assert shedding(s, 0.0) == 0.0


def test_shedding_hazard_profile():
    s = Shedding.lognormal_hazard(IR)
    assert shedding(s, 5.0) == lognormal_hazard(5.0, IR)


def test_pdf_survival_against_scipy():
    taus = np.linspace(0.01, 40.0, 50)
    assert np.allclose(
        lognormal_pdf(taus, IR),
        stats.lognorm.pdf(taus, s=IR.sigma, scale=math.exp(IR.mu)),
        rtol=1e-10,
    )
    assert np.allclose(
        lognormal_survival(taus, IR),
        stats.lognorm.sf(taus, s=IR.sigma, scale=math.exp(IR.mu)),
        rtol=1e-10,
    )
