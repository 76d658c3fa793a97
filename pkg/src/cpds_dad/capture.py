"""Probability that a fake base station captures a remote-controlled switch.

A switch attaches to whichever base station delivers the strongest
broadcast signal. Received strengths follow the lognormal shadowing
model, so each strength (in dB) is Gaussian around a distance-dependent
mean. The capture probability is the chance that the fake station's
strength exceeds every legitimate one.

>>> fbs = SignalDistribution(mu=80.0, sigma=4.0)
>>> round(capture_prob_exact(CaptureProblem(fbs, [fbs])), 6)
0.5
>>> z_pdf(0.0)
1.0
>>> z_cdf(0.0)
0.5
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, NamedTuple, Optional, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate
from scipy.stats import norm

from ._utils import Point, PreconditionError
from .network import Network, RadioParams, dist

SQRT_2PI = math.sqrt(2 * math.pi)
PDF_SUPPORT = 3.0
CDF_SUPPORT = 6.0
# The CDF fit drifts away from the normal CDF beyond this point (its error
# passes 1e-3 near 3.3 and reaches 1.7e-2 at 6); z_cdf clamps there.
CDF_FIT_RANGE = 3.2
EXACT_SUPPORT = 8.0

ArrayLike = Union[float, np.ndarray]


########################################################################
# DOMAIN TYPES


@dataclass(frozen=True)
class SignalDistribution:
    mu: float  # dB
    sigma: float  # dB

    def __post_init__(self):
        if not self.sigma > 0:
            raise PreconditionError(f"sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise PreconditionError(f"mu must be finite, got {self.mu}")


@dataclass(frozen=True)
class CaptureProblem:
    fbs: SignalDistribution
    legit: Sequence[SignalDistribution] = ()

    @property
    def n_legit(self) -> int:
        return len(self.legit)

    @property
    def equal_sigmas(self) -> bool:
        return all(
            abs(self.fbs.sigma / s.sigma - 1) <= 1e-12 for s in self.legit
        )

    def offsets(self) -> np.ndarray:
        """Standardized mean gaps `(mu_fbs - mu_k) / sigma_k`."""
        return np.array(
            [(self.fbs.mu - s.mu) / s.sigma for s in self.legit], dtype=float
        )


@dataclass(frozen=True)
class PolyCoefficients:
    """Piecewise seventh-order fits of the Gaussian density and CDF.

    `pdf_coeffs` holds the magnitudes e_0..e_7 of the unnormalized
    density fit, and `cdf_coeffs` holds h_1..h_7 of the CDF fit. The
    CDF fit uses separate intercepts on each side of zero. The signs of
    each term are fixed by the fit and applied in `pdf_branches` and
    `cdf_branches`.
    """

    pdf_coeffs: tuple[float, ...] = (
        1.0,
        0.002786,
        0.4629,
        0.1221,
        0.3035,
        0.1311,
        0.0236,
        0.001577,
    )
    cdf_coeffs: tuple[float, ...] = (
        0.3908,
        0.04542,
        0.1485,
        0.06604,
        0.01362,
        0.001385,
        5.615e-5,
    )
    h0_pos: float = 0.4999
    h0_neg: float = 0.5001
    zeta: float = 2.678e-4
    kappa: float = 5.69e-4

    def __post_init__(self):
        if len(self.pdf_coeffs) != 8 or len(self.cdf_coeffs) != 7:
            raise PreconditionError("need 8 pdf and 7 cdf coefficients")
        if not (self.zeta > 0 and self.kappa > 0):
            raise PreconditionError("zeta and kappa must be positive")

    @classmethod
    def from_overrides(cls, overrides: Optional[dict[str, Any]]) -> PolyCoefficients:
        if not overrides:
            return DEFAULT_COEFFS
        kwargs: dict[str, Any] = {}
        for key in ("pdf_coeffs", "cdf_coeffs"):
            if key in overrides:
                kwargs[key] = tuple(float(v) for v in overrides[key])
        for key in ("h0_pos", "h0_neg", "zeta", "kappa"):
            if key in overrides:
                kwargs[key] = float(overrides[key])
        unknown = set(overrides) - {*kwargs, "pdf_coeffs", "cdf_coeffs"}
        if unknown:
            raise PreconditionError(f"unknown poly keys: {sorted(unknown)}")
        return cls(**kwargs)

    @property
    def pdf_branches(self) -> tuple[Polynomial, Polynomial]:
        """(negative-side, positive-side) density polynomials."""
        e0, e1, e2, e3, e4, e5, e6, e7 = self.pdf_coeffs
        neg = Polynomial([e0, e1, -e2, e3, e4, e5, e6, e7])
        pos = Polynomial([e0, -e1, -e2, -e3, e4, -e5, e6, -e7])
        return neg, pos

    @property
    def cdf_branches(self) -> tuple[Polynomial, Polynomial]:
        """(negative-side, positive-side) CDF polynomials."""
        h1, h2, h3, h4, h5, h6, h7 = self.cdf_coeffs
        neg = Polynomial([self.h0_neg, h1, -h2, -h3, -h4, -h5, -h6, -h7])
        pos = Polynomial([self.h0_pos, h1, h2, -h3, h4, -h5, h6, -h7])
        return neg, pos


DEFAULT_COEFFS = PolyCoefficients()


########################################################################
# SIGNAL STRENGTH


def mean_strength(
    radio: RadioParams, bs_pos: Point, rcs_pos: Point, s_ref: Optional[float] = None
) -> float:
    """Mean received strength (dB) at `rcs_pos` from a station at `bs_pos`.

    `s_ref` overrides `radio.s_ref`; legitimate stations carry their
    own reference strength.
    """
    if s_ref is None:
        s_ref = radio.s_ref
    d = max(dist(bs_pos, rcs_pos), radio.d_min)
    return s_ref - 10 * radio.path_loss_exp * math.log10(d / radio.d0)


def capture_problem_for(
    network: Network,
    rcs_pos: Point,
    fbs_pos: Point,
    s_ref_fbs: Optional[float] = None,
) -> CaptureProblem:
    radio = network.radio
    fbs = SignalDistribution(
        mean_strength(radio, fbs_pos, rcs_pos, s_ref_fbs), radio.fbs_sigma
    )
    legit = [
        SignalDistribution(
            mean_strength(radio, bs.position, rcs_pos, bs.s_ref), bs.sigma
        )
        for bs in network.base_stations
    ]
    return CaptureProblem(fbs, legit)


########################################################################
# POLYNOMIAL FITS


def _as_output(out: np.ndarray) -> ArrayLike:
    return float(out) if out.ndim == 0 else out


def z_pdf(x: ArrayLike, coeffs: PolyCoefficients = DEFAULT_COEFFS) -> ArrayLike:
    """Polynomial fit of the unnormalized Gaussian `exp(-x**2 / 2)`.

    Zero outside the open interval (-3, 3).
    """
    x = np.asarray(x, dtype=float)
    neg, pos = coeffs.pdf_branches
    out = np.where(x > 0, pos(x), neg(x))
    out = np.where(np.abs(x) >= PDF_SUPPORT, 0.0, out)
    return _as_output(out)


def z_cdf(x: ArrayLike, coeffs: PolyCoefficients = DEFAULT_COEFFS) -> ArrayLike:
    """Polynomial fit of the standard normal CDF.

    The fit is used on (-3.2, 3.2) and clamped to 0 at or below -3.2 and
    to 1 at or above 3.2; exactly 0.5 at zero, between the two branch
    intercepts.

    >>> z_cdf(-6.0), z_cdf(3.2)
    (0.0, 1.0)
    """
    x = np.asarray(x, dtype=float)
    neg, pos = coeffs.cdf_branches
    out = np.where(x > 0, pos(x), neg(x))
    out = np.where(x == 0, 0.5, out)
    out = np.where(x <= -CDF_FIT_RANGE, 0.0, out)
    out = np.where(x >= CDF_FIT_RANGE, 1.0, out)
    return _as_output(out)


class FitErrors(NamedTuple):
    pdf_max: float
    cdf_max: float


def measure_fit_errors(
    coeffs: PolyCoefficients = DEFAULT_COEFFS, n_points: int = 100_001
) -> FitErrors:
    """Largest deviation of each fit from its target on a dense grid.

    The density grid excludes the endpoints +-3, where the fit is cut
    to zero.
    """
    xs = np.linspace(-PDF_SUPPORT, PDF_SUPPORT, n_points)[1:-1]
    pdf_err = np.max(np.abs(z_pdf(xs, coeffs) - np.exp(-(xs**2) / 2)))
    xs = np.linspace(-CDF_SUPPORT, CDF_SUPPORT, n_points)
    cdf_err = np.max(np.abs(z_cdf(xs, coeffs) - norm.cdf(xs)))
    return FitErrors(float(pdf_err), float(cdf_err))


def poly_error_bound(n_legit: int, coeffs: PolyCoefficients = DEFAULT_COEFFS) -> float:
    """Worst-case error of `capture_prob_poly` against the exact value.

    Valid for equal-sigma problems with offsets inside [-3, 3].
    """
    return 6 * (coeffs.zeta + n_legit * coeffs.kappa) / SQRT_2PI


def truncation_mass() -> float:
    """Gaussian mass outside [-3, 3], where `z_pdf` is zero.

    `capture_prob_poly` adds this part of the integral back with the
    exact normal CDF.
    """
    return float(2 * norm.cdf(-PDF_SUPPORT))


########################################################################
# CAPTURE PROBABILITY


def three_sigma_shortcut(problem: CaptureProblem) -> Optional[int]:
    """Return 1 or 0 when the outcome is effectively deterministic.

    The outcome is treated as deterministic when the FBS mean is at least
    3 FBS standard deviations above (1) or below (0) the strongest
    legitimate mean. Returns None otherwise.
    """
    if not problem.legit:
        return 1
    gap = problem.fbs.mu - max(s.mu for s in problem.legit)
    if abs(gap) >= 3 * problem.fbs.sigma - 1e-12:
        return 1 if gap > 0 else 0
    return None


def capture_prob_exact(problem: CaptureProblem) -> float:
    if not problem.legit:
        return 1.0
    fbs = problem.fbs
    ratios = np.array([fbs.sigma / s.sigma for s in problem.legit])
    offsets = problem.offsets()

    def integrand(tau: float) -> float:
        cdfs = norm.cdf(ratios * tau + offsets)
        return math.exp(-tau * tau / 2) * float(np.prod(cdfs))

    # Points where a factor switches from ~0 to ~1 help the adaptive rule.
    kinks = sorted(
        {float(p) for p in -offsets / ratios if -EXACT_SUPPORT < p < EXACT_SUPPORT}
    )
    value, _ = integrate.quad(
        integrand,
        -EXACT_SUPPORT,
        EXACT_SUPPORT,
        points=kinks or None,
        epsabs=1e-10,
        epsrel=1e-10,
        limit=200,
    )
    return float(np.clip(value / SQRT_2PI, 0.0, 1.0))


def _breakpoints(offsets: np.ndarray) -> list[float]:
    points = {-PDF_SUPPORT, 0.0, PDF_SUPPORT}
    for a in offsets:
        for p in (-a, -a - CDF_FIT_RANGE, -a + CDF_FIT_RANGE):
            if -PDF_SUPPORT < p < PDF_SUPPORT:
                points.add(float(p))
    return sorted(points)


def _tail_prob(offsets: np.ndarray) -> float:
    """Part of the capture integral over |tau| > 3, with the exact CDF."""

    def integrand(tau: float) -> float:
        return math.exp(-tau * tau / 2) * float(np.prod(norm.cdf(tau + offsets)))

    upper, _ = integrate.quad(
        integrand, PDF_SUPPORT, EXACT_SUPPORT, epsabs=1e-12, epsrel=1e-10
    )
    lower, _ = integrate.quad(
        integrand, -EXACT_SUPPORT, -PDF_SUPPORT, epsabs=1e-12, epsrel=1e-10
    )
    return (upper + lower) / SQRT_2PI


def capture_prob_poly(
    problem: CaptureProblem, coeffs: PolyCoefficients = DEFAULT_COEFFS
) -> float:
    """Capture probability from the polynomial fits, integrated exactly.

    The integration range [-3, 3] is split where any fit changes branch.
    On each piece the integrand is a single polynomial, expanded around
    the piece's midpoint and integrated in closed form. The density mass
    outside [-3, 3], where `z_pdf` is zero, is added by quadrature.

    Raises:
        PreconditionError: If any legitimate station's sigma differs from
            the FBS sigma. Use `capture_prob_exact` for such problems.
    """
    if not problem.legit:
        return 1.0
    if not problem.equal_sigmas:
        raise PreconditionError(
            "polynomial capture probability needs equal sigmas;"
            " use capture_prob_exact"
        )
    offsets = problem.offsets()
    pdf_neg, pdf_pos = coeffs.pdf_branches
    cdf_neg, cdf_pos = coeffs.cdf_branches

    total = 0.0
    points = _breakpoints(offsets)
    for lo, hi in zip(points[:-1], points[1:]):
        if hi - lo <= 0:
            continue
        mid = (lo + hi) / 2
        # Local variable s = tau - mid.
        integrand = (pdf_pos if mid > 0 else pdf_neg)(Polynomial([mid, 1.0]))
        for a in offsets:
            y = mid + a
            if y <= -CDF_FIT_RANGE:
                integrand = Polynomial([0.0])
                break
            if y >= CDF_FIT_RANGE:
                continue
            branch = cdf_pos if y > 0 else cdf_neg
            integrand = integrand * branch(Polynomial([y, 1.0]))
        antideriv = integrand.integ()
        total += antideriv(hi - mid) - antideriv(lo - mid)
    return float(np.clip(total / SQRT_2PI + _tail_prob(offsets), 0.0, 1.0))


class MCEstimate(NamedTuple):
    estimate: float
    std_error: float


def capture_prob_mc(problem: CaptureProblem, samples: int, seed: int) -> MCEstimate:
    """Monte Carlo estimate of the capture probability.

    Counts draws where the FBS strength is strictly the greatest.
    """
    if samples < 1000:
        raise PreconditionError(f"need at least 1000 samples, got {samples}")
    if not problem.legit:
        return MCEstimate(1.0, 0.0)
    rng = np.random.default_rng(seed)
    dists = [problem.fbs, *problem.legit]
    mus = np.array([d.mu for d in dists])
    sigmas = np.array([d.sigma for d in dists])
    draws = rng.normal(mus, sigmas, size=(samples, len(dists)))
    wins = draws[:, 0] > draws[:, 1:].max(axis=1)
    p = float(wins.mean())
    return MCEstimate(p, math.sqrt(p * (1 - p) / samples))


@dataclass(frozen=True)
class CaptureModel:
    """Capture probability evaluator bound to a method and coefficients."""

    method: str = "poly"
    coeffs: PolyCoefficients = DEFAULT_COEFFS

    def __call__(self, problem: CaptureProblem) -> float:
        return capture_prob(problem, self.coeffs, self.method)


def capture_prob(
    problem: CaptureProblem,
    coeffs: PolyCoefficients = DEFAULT_COEFFS,
    method: str = "poly",
) -> float:
    """Capture probability: shortcut, then polynomial or exact path.

    The polynomial path is used only when `method` is "poly" and all
    sigmas are equal.
    """
    shortcut = three_sigma_shortcut(problem)
    if shortcut is not None:
        return float(shortcut)
    if method == "poly" and problem.equal_sigmas:
        return capture_prob_poly(problem, coeffs)
    if method not in ("poly", "exact"):
        raise PreconditionError(f"unknown capture method '{method}'")
    return capture_prob_exact(problem)
