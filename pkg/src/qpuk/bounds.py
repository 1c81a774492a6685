"""Analytic security bounds for the emulation attack on binned homodyne checks.

Pieces: the in-bin probability of a Gaussian homodyne outcome against a bin
centered on the recorded response (honest and shifted), the exhaustive search
for the wrong-response pair the attacker gets away with most often, the Fano
lower bound on the attacker's inference error, the security margin combining
them, and the Chernoff-style sample-size rule for the verification test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .common import ValidityWarning
from .ensemble import ProbeEnsemble, holevo_bound

THETA_X = 0.0
THETA_Y = math.pi / 2
QUADRATURE_ANGLES = (THETA_X, THETA_Y)

# Fano bisection: absolute tolerance on the returned probability.
_FANO_TOL = 1e-15
_FANO_MAX_ITER = 200

_PAIR_CHUNK = 256  # rows per block in the O(N^2) pair search


@dataclass(frozen=True)
class DetectionConfig:
    """Homodyne detection efficiency and bin-to-noise ratio.

    The outcome noise sigma = 1/sqrt(2*eta) is always derived from eta, never
    stored, so the two cannot drift apart.  Bin ratios outside the recommended
    window 2 <= delta_bar < 4 warn but do not fail; efficiencies above 1 are
    unphysical and warn (useful only as a zero-noise diagnostic).
    """

    eta: float
    delta_bar: float

    def __post_init__(self):
        if not (math.isfinite(self.delta_bar) and self.delta_bar > 0):
            raise ValueError(f"delta_bar must be positive and finite, got {self.delta_bar!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if self.eta > 1.0:
            warnings.warn(
                f"eta = {self.eta} > 1 is unphysical (zero-noise diagnostic only)",
                ValidityWarning,
                stacklevel=2,
            )
        if not (2.0 <= self.delta_bar < 4.0):
            warnings.warn(
                f"delta_bar = {self.delta_bar} outside the recommended window [2, 4)",
                ValidityWarning,
                stacklevel=2,
            )

    def sigma(self) -> float:
        """Homodyne outcome standard deviation 1/sqrt(2*eta)."""
        return 1.0 / math.sqrt(2.0 * self.eta)

    def bin_width(self) -> float:
        """Absolute bin width Delta = delta_bar * sigma."""
        return self.delta_bar * self.sigma()


@dataclass(frozen=True)
class ResponseModel:
    """Quadrature means of the recorded responses: sqrt(2*mu_r)*cos(psi_k - theta).

    psi_k = arg_f + 2*pi*k/n_phases is the response phase for probe index k.
    """

    mu_r: float
    arg_f: float
    n_phases: int

    def __post_init__(self):
        if not (math.isfinite(self.mu_r) and self.mu_r >= 0):
            raise ValueError(f"mu_r must be non-negative and finite, got {self.mu_r!r}")
        if not math.isfinite(self.arg_f):
            raise ValueError(f"arg_f must be finite, got {self.arg_f!r}")
        if not (isinstance(self.n_phases, int) and self.n_phases >= 2):
            raise ValueError(f"n_phases must be an integer >= 2, got {self.n_phases!r}")

    def amplitude(self) -> float:
        """Quadrature amplitude sqrt(2*mu_r)."""
        return math.sqrt(2.0 * self.mu_r)

    def psi(self, k: int) -> float:
        self._check_index(k)
        return self.arg_f + 2.0 * math.pi * k / self.n_phases

    def _check_index(self, k: int) -> None:
        if not (0 <= k < self.n_phases):
            raise ValueError(f"index {k} out of range [0, {self.n_phases})")


@dataclass(frozen=True)
class SecurityReport:
    """All intermediates of the security-margin evaluation plus the verdict."""

    chi: float
    p_err_low: float
    p_in0: float
    max_pair_prob: float
    max_pair: tuple[int, int]
    margin_d: float
    epsilon: float
    secure: bool

    def to_dict(self) -> dict:
        return {
            "chi": self.chi,
            "p_err_low": self.p_err_low,
            "p_in0": self.p_in0,
            "max_pair_prob": self.max_pair_prob,
            "max_pair": list(self.max_pair),
            "margin_d": self.margin_d,
            "epsilon": self.epsilon,
            "secure": self.secure,
        }


def quadrature_mean(model: ResponseModel, k: int, theta: float) -> float:
    """Expected homodyne outcome sqrt(2*mu_r) * cos(psi_k - theta).

    Only the two protocol angles theta in {0, pi/2} are accepted.
    """
    if theta not in QUADRATURE_ANGLES:
        raise ValueError(f"theta must be 0 or pi/2, got {theta!r}")
    return model.amplitude() * math.cos(model.psi(k) - theta)


def _shifted_bin_mass(shift_over_sigma, delta_bar):
    """P[|G - s| <= delta_bar/2] for G standard normal; vectorized in the shift.

    Evaluated through the normal CDF at |s| so that for large shifts both CDF
    terms are small (complementary form), avoiding the cancellation that the
    difference of two error functions near +-1 would suffer.
    """
    s = np.abs(shift_over_sigma)
    half = 0.5 * delta_bar
    return ndtr(half - s) - ndtr(-half - s)


def p_in_honest(det: DetectionConfig) -> float:
    """In-bin probability with no cheating: Erf(delta_bar / (2*sqrt(2))).

    Independent of which probe and which quadrature the challenge picked,
    because the bin is always centered on the sampled distribution's mean.
    """
    return float(_shifted_bin_mass(0.0, det.delta_bar))


def p_in_shifted(det: DetectionConfig, shift: float) -> float:
    """Probability that a sample from N(shift, sigma^2) lands in the bin at 0.

    `shift` is in outcome units; the bin has width delta_bar * sigma.  Even in
    the shift, strictly decreasing in |shift|.
    """
    if not math.isfinite(shift):
        raise ValueError(f"shift must be finite, got {shift!r}")
    return float(_shifted_bin_mass(shift / det.sigma(), det.delta_bar))


def p_in_pair(model: ResponseModel, det: DetectionConfig, k: int, k_tilde: int) -> float:
    """In-bin probability when the verifier sent k but the response was for k_tilde.

    Average over the two equally likely measurement angles of the shifted-bin
    mass at shift <Q_k_tilde(theta)> - <Q_k(theta)>.
    """
    model._check_index(k)
    model._check_index(k_tilde)
    total = 0.0
    for theta in QUADRATURE_ANGLES:
        shift = quadrature_mean(model, k_tilde, theta) - quadrature_mean(model, k, theta)
        total += p_in_shifted(det, shift)
    return 0.5 * total


def max_pair_probability(
    model: ResponseModel, det: DetectionConfig
) -> tuple[float, tuple[int, int]]:
    """Exhaustive max of p_in_pair over all ordered pairs k != k_tilde.

    No symmetry shortcut is applied beyond the dependence on the phase pair:
    all N*(N-1) ordered pairs are scored (blockwise, vectorized) and ties are
    broken toward the lexicographically smallest (k, k_tilde).
    """
    n = model.n_phases
    sigma = det.sigma()
    psi = model.arg_f + 2.0 * np.pi * np.arange(n) / n
    x = model.amplitude() * np.cos(psi) / sigma
    y = model.amplitude() * np.sin(psi) / sigma

    best_value = -1.0
    best_pair = (0, 1)
    for start in range(0, n, _PAIR_CHUNK):
        stop = min(start + _PAIR_CHUNK, n)
        sx = x[None, :] - x[start:stop, None]
        sy = y[None, :] - y[start:stop, None]
        block = 0.5 * (
            _shifted_bin_mass(sx, det.delta_bar) + _shifted_bin_mass(sy, det.delta_bar)
        )
        rows = np.arange(start, stop)
        block[rows - start, rows] = -np.inf  # exclude k == k_tilde
        flat = int(np.argmax(block))
        value = float(block.flat[flat])
        if value > best_value:  # strict: earlier block keeps ties
            best_value = value
            k, k_tilde = divmod(flat, n)
            best_pair = (start + k, k_tilde)
    return best_value, best_pair


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def fano_error_lower_bound(chi: float, n_phases: int) -> float:
    """Smallest error probability compatible with extracting chi bits about k.

    Solves H(p) + p*log2(N-1) = log2(N) - chi for p on [0, 1 - 1/N], where the
    left side rises strictly from 0 to log2(N); bisection is therefore exact up
    to the tolerance.  chi >= log2(N) (possible through floating-point excess)
    gives 0.
    """
    if not (isinstance(n_phases, int) and n_phases >= 2):
        raise ValueError(f"n_phases must be an integer >= 2, got {n_phases!r}")
    if not (math.isfinite(chi) and chi >= 0):
        raise ValueError(f"chi must be non-negative and finite, got {chi!r}")
    rhs = math.log2(n_phases) - chi
    if rhs <= 0.0:
        return 0.0
    log_wrong = math.log2(n_phases - 1)

    def lhs(p):
        return _binary_entropy(p) + p * log_wrong

    hi = 1.0 - 1.0 / n_phases
    if lhs(hi) <= rhs:
        return hi
    lo = 0.0
    for _ in range(_FANO_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if lhs(mid) < rhs:
            lo = mid
        else:
            hi = mid
        if hi - lo < _FANO_TOL:
            break
    return 0.5 * (lo + hi)


def p_in_upper_bound(p_err: float, p_in0: float, max_pair: float) -> float:
    """Ceiling on the attacked in-bin probability: (1-p_err)*p_in0 + p_err*max_pair."""
    for name, value in (("p_err", p_err), ("p_in0", p_in0), ("max_pair", max_pair)):
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    if max_pair > p_in0:
        raise ValueError(
            f"max_pair = {max_pair} exceeds p_in0 = {p_in0}; ordering violated"
        )
    return (1.0 - p_err) * p_in0 + p_err * max_pair


def security_margin(
    ensemble: ProbeEnsemble,
    model: ResponseModel,
    det: DetectionConfig,
    epsilon: float = 1e-3,
) -> SecurityReport:
    """Detectability margin D of the emulation attack, with all intermediates.

    D = p_err_low * (p_in0 - max_pair_prob).  The attack is guaranteed to push
    the observed in-bin frequency out of the acceptance window when D exceeds
    twice the acceptance half-width epsilon.
    """
    if ensemble.n_phases != model.n_phases:
        raise ValueError(
            f"ensemble has {ensemble.n_phases} phases but response model has "
            f"{model.n_phases}"
        )
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon!r}")
    chi = holevo_bound(ensemble)
    p_err_low = fano_error_lower_bound(chi, ensemble.n_phases)
    p_in0 = p_in_honest(det)
    max_prob, pair = max_pair_probability(model, det)
    margin = p_err_low * (p_in0 - max_prob)
    return SecurityReport(
        chi=chi,
        p_err_low=p_err_low,
        p_in0=p_in0,
        max_pair_prob=max_prob,
        max_pair=pair,
        margin_d=margin,
        epsilon=epsilon,
        secure=margin > 2.0 * epsilon,
    )


def min_sample_size(epsilon: float, zeta: float) -> int:
    """Sample size 3*ln(2/zeta)/epsilon^2 (nearest integer) for the in-bin test.

    With at least this many queries the observed in-bin frequency lies within
    epsilon of its expectation except with probability zeta.
    """
    if not (math.isfinite(epsilon) and 0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon!r}")
    if not (math.isfinite(zeta) and 0.0 < zeta < 1.0):
        raise ValueError(f"zeta must be in (0, 1), got {zeta!r}")
    return int(math.floor(3.0 * math.log(2.0 / zeta) / epsilon**2 + 0.5))
