"""Uniform phase-shift-keyed coherent-state ensembles and their mixing entropy.

The probe alphabet is the set of N coherent states sqrt(mu_p) * exp(i*2*pi*k/N),
k = 0..N-1, drawn uniformly.  The average state of the alphabet commutes with a
photon-number rotation by 2*pi/N, so its spectrum is the Poisson(mu_p) photon
statistics aggregated by residue class of the photon number mod N.  That gives
an exact O(cutoff) route to the von Neumann entropy (the Holevo quantity for a
pure-state ensemble); a dense Fock-basis eigendecomposition is kept alongside
as an independent cross-check.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .common import ValidityWarning

# Tail mass the resolved Fock cutoff must leave behind.
TRUNCATION_TOLERANCE = 1e-12

# Eigenvalues below this are dropped from the entropy sum (0*log 0 := 0).
_EIGENVALUE_FLOOR = 1e-300

_METHODS = ("fast", "dense-oracle")


class TruncationError(ValueError):
    """The Fock cutoff leaves too much Poisson tail mass behind."""


def default_fock_cutoff(mu_p: float) -> int:
    """Default truncation index: Poisson tail below 1e-12 for mu_p <= 2000."""
    return math.ceil(mu_p + 12.0 * math.sqrt(mu_p) + 25.0)


@dataclass(frozen=True)
class ProbeEnsemble:
    """N coherent states of mean photon number mu_p at phases 2*pi*k/N.

    Attributes:
        mu_p: mean photon number of every probe state (> 0).
        n_phases: alphabet size N (>= 2).
    """

    mu_p: float
    n_phases: int

    def __post_init__(self):
        if not (isinstance(self.n_phases, int) and self.n_phases >= 2):
            raise ValueError(f"n_phases must be an integer >= 2, got {self.n_phases!r}")
        if not (math.isfinite(self.mu_p) and self.mu_p > 0):
            raise ValueError(f"mu_p must be positive and finite, got {self.mu_p!r}")

    def phase(self, k: int) -> float:
        """Probe phase 2*pi*k/N, computed directly (no accumulated rounding)."""
        self._check_index(k)
        return 2.0 * math.pi * k / self.n_phases

    def alpha(self, k: int) -> complex:
        """Coherent amplitude sqrt(mu_p) * exp(i * phase(k))."""
        return math.sqrt(self.mu_p) * cmath.exp(1j * self.phase(k))

    def _check_index(self, k: int) -> None:
        if not (0 <= k < self.n_phases):
            raise ValueError(f"index {k} out of range [0, {self.n_phases})")


@dataclass(frozen=True)
class EigenSpectrum:
    """Spectrum of the ensemble-average state on a truncated Fock space.

    Attributes:
        eigenvalues: non-negative weights; residue-class order for the fast
            path (length min(N, cutoff+1)), descending for the dense oracle
            (length cutoff+1).
        cutoff_used: Fock truncation index.
        truncation_mass: Poisson probability mass beyond the cutoff.
    """

    eigenvalues: np.ndarray
    cutoff_used: int
    truncation_mass: float


def coherent_overlap(ensemble: ProbeEnsemble, j: int, k: int) -> complex:
    """Overlap <alpha_j|alpha_k> = exp(mu_p * (exp(i*dphi) - 1)).

    dphi is 2*pi*((k - j) mod N)/N, so the value depends on (k - j) mod N only.
    """
    ensemble._check_index(j)
    ensemble._check_index(k)
    d = (k - j) % ensemble.n_phases
    dphi = 2.0 * math.pi * d / ensemble.n_phases
    return cmath.exp(ensemble.mu_p * (cmath.exp(1j * dphi) - 1.0))


def _resolve_cutoff(ensemble: ProbeEnsemble, cutoff: int | None) -> tuple[int, float]:
    """Resolve the truncation index and check the remaining tail mass."""
    c = default_fock_cutoff(ensemble.mu_p) if cutoff is None else int(cutoff)
    if c < 0:
        raise ValueError(f"cutoff must be non-negative, got {cutoff!r}")
    mass = float(poisson.sf(c, ensemble.mu_p))
    if mass >= TRUNCATION_TOLERANCE:
        raise TruncationError(
            f"Fock cutoff {c} leaves tail mass {mass:.3e} "
            f">= {TRUNCATION_TOLERANCE:.0e}; raise the cutoff"
        )
    return c, mass


def _log_poisson_pmf(mu_p: float, cutoff: int) -> np.ndarray:
    # log-space to survive mu_p ~ 1000 where mu^n/n! overflows long before n ~ 1400
    n = np.arange(cutoff + 1)
    return -mu_p + n * math.log(mu_p) - gammaln(n + 1.0)


def eigenspectrum(
    ensemble: ProbeEnsemble, method: str = "fast", cutoff: int | None = None
) -> EigenSpectrum:
    """Spectrum of the average state rho = (1/N) sum_k |alpha_k><alpha_k|.

    Args:
        ensemble: the probe alphabet.
        method: "fast" aggregates Poisson(mu_p) mass by photon-number residue
            class mod N (exact, uses the phase symmetry of the alphabet);
            "dense-oracle" assembles the truncated density matrix from the
            state vectors and diagonalizes it (no symmetry assumed).
        cutoff: Fock truncation index; default leaves tail mass < 1e-12.

    Raises:
        TruncationError: the resolved cutoff leaves too much tail mass.
    """
    if method not in _METHODS:
        raise ValueError(f"method must be one of {_METHODS}, got {method!r}")
    c, mass = _resolve_cutoff(ensemble, cutoff)
    n_ph = ensemble.n_phases

    if method == "fast":
        p = np.exp(_log_poisson_pmf(ensemble.mu_p, c))
        residues = np.arange(c + 1) % n_ph
        lam = np.bincount(residues, weights=p, minlength=min(n_ph, c + 1))
        return EigenSpectrum(eigenvalues=lam, cutoff_used=c, truncation_mass=mass)

    # dense oracle: rho[n, n'] = (1/N) sum_k <n|alpha_k><alpha_k|n'>
    n = np.arange(c + 1)
    log_amp = 0.5 * (-ensemble.mu_p + n * math.log(ensemble.mu_p) - gammaln(n + 1.0))
    phases = 2.0 * math.pi * np.arange(n_ph) / n_ph
    vecs = np.exp(log_amp[None, :] + 1j * np.outer(phases, n))  # (N, c+1)
    rho = vecs.T @ vecs.conj() / n_ph
    lam = np.linalg.eigvalsh(rho)[::-1]
    if lam.min() < -1e-12:
        raise ValueError(f"dense spectrum has eigenvalue {lam.min():.3e} < -1e-12")
    lam = np.clip(lam, 0.0, None)
    return EigenSpectrum(eigenvalues=lam, cutoff_used=c, truncation_mass=mass)


def holevo_bound(
    ensemble: ProbeEnsemble, method: str = "fast", cutoff: int | None = None
) -> float:
    """Accessible-information ceiling S(rho) of the alphabet, in bits.

    Equals the von Neumann entropy of the average state because the alphabet
    consists of pure states.  Both methods must agree (see the test suite).
    """
    spec = eigenspectrum(ensemble, method=method, cutoff=cutoff)
    lam = spec.eigenvalues[spec.eigenvalues > _EIGENVALUE_FLOOR]
    entropy = float(-np.sum(lam * np.log2(lam)))
    return max(entropy, 0.0)


def entropy_continuous_limit(mu_p: float) -> float:
    """Large-N limit of the alphabet entropy: 0.5 * log2(2*pi*e*mu_p) bits.

    This is the Gaussian approximation to the Poisson photon-number entropy;
    it is trusted for mu_p >= 10 and a ValidityWarning is emitted below that.
    """
    if not (math.isfinite(mu_p) and mu_p > 0):
        raise ValueError(f"mu_p must be positive and finite, got {mu_p!r}")
    if mu_p < 10:
        warnings.warn(
            f"continuous-limit entropy is only accurate for mu_p >= 10 (got {mu_p})",
            ValidityWarning,
            stacklevel=2,
        )
    return 0.5 * math.log2(2.0 * math.pi * math.e * mu_p)
