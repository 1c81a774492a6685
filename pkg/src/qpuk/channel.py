"""Loss and enhancement model of the optical chain between probe and detector.

The whole chain (input fiber, interrogation chamber with wavefront shaping,
output fiber) collapses into a single scalar power coupling |F|^2 and a net
mean response photon number mu_R = E * |F|^2 * mu_P.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .common import ValidityWarning


@dataclass(frozen=True)
class OpticalChannel:
    """Power transmissions and wavefront-shaping gain of the fixed set-up.

    Attributes:
        tau_a: power transmission of the input fiber, in [0, 1].
        tau_b: power transmission of the output fiber, in [0, 1].
        tau_ic: power transmission of the interrogation chamber, in [0, 1].
        n_modes: number of spatial modes the wavefront shaper controls (>= 1).
        enhancement: intensity gain at the target mode; values above the ideal
            pi*n_modes/4 only warn.
        mean_free_path_ratio: l/L of the scattering slab, in [0, 1).
        arg_f: global phase the chain imprints on every response (radians).
    """

    tau_a: float
    tau_b: float
    tau_ic: float
    n_modes: int
    enhancement: float
    mean_free_path_ratio: float = 0.0
    arg_f: float = 0.0

    def __post_init__(self):
        for name in ("tau_a", "tau_b", "tau_ic"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {value!r}")
        if not (isinstance(self.n_modes, int) and self.n_modes >= 1):
            raise ValueError(f"n_modes must be an integer >= 1, got {self.n_modes!r}")
        if not (math.isfinite(self.enhancement) and self.enhancement >= 0.0):
            raise ValueError(
                f"enhancement must be non-negative and finite, got {self.enhancement!r}"
            )
        if not (0.0 <= self.mean_free_path_ratio < 1.0):
            raise ValueError(
                f"mean_free_path_ratio must be in [0, 1), got {self.mean_free_path_ratio!r}"
            )
        if not math.isfinite(self.arg_f):
            raise ValueError(f"arg_f must be finite, got {self.arg_f!r}")
        ideal = math.pi * self.n_modes / 4.0
        if self.enhancement > ideal:
            warnings.warn(
                f"enhancement {self.enhancement} exceeds the ideal "
                f"pi*n_modes/4 = {ideal:.4g}",
                ValidityWarning,
                stacklevel=2,
            )
        if self.f_squared() == 1.0 / self.n_modes:
            warnings.warn(
                "channel is idealized lossless (|F|^2 == 1/n_modes)",
                ValidityWarning,
                stacklevel=2,
            )

    def f_squared(self) -> float:
        """Net power coupling |F|^2 = tau_b*tau_ic*tau_a*(1/n_modes)*(1 - l/L)."""
        return (
            self.tau_b
            * self.tau_ic
            * self.tau_a
            * (1.0 / self.n_modes)
            * (1.0 - self.mean_free_path_ratio)
        )

    def mu_a(self, mu_p: float) -> float:
        """Mean photon number at the exit of the input fiber."""
        _check_mu_p(mu_p)
        return self.tau_a * mu_p

    def mu_b(self, mu_p: float) -> float:
        """Mean photon number collected at the entrance of the output fiber."""
        return (
            self.tau_ic
            * self.enhancement
            * (1.0 / self.n_modes)
            * (1.0 - self.mean_free_path_ratio)
            * self.mu_a(mu_p)
        )

    def mu_response(self, mu_p: float) -> float:
        """Mean response photon number mu_R = enhancement * |F|^2 * mu_p."""
        _check_mu_p(mu_p)
        return self.enhancement * self.f_squared() * mu_p


def _check_mu_p(mu_p: float) -> None:
    if not (math.isfinite(mu_p) and mu_p > 0):
        raise ValueError(f"mu_p must be positive and finite, got {mu_p!r}")


def mu_response(channel: OpticalChannel, mu_p: float) -> float:
    """Mean response photon number for a probe of mean photon number mu_p."""
    return channel.mu_response(mu_p)


def slab_validity_warnings(
    wavelength: float, mean_free_path: float, thickness: float, absorption_length: float
) -> list[str]:
    """Check the diffusive-slab length hierarchy wavelength << l << L << L_abs.

    Each ratio should be well below 1; any ratio above 0.1 yields a message and
    a ValidityWarning.  The lengths affect no computed quantity here; the check
    exists so a set-up description can be sanity-checked in one call.
    """
    for name, value in (
        ("wavelength", wavelength),
        ("mean_free_path", mean_free_path),
        ("thickness", thickness),
        ("absorption_length", absorption_length),
    ):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")
    checks = (
        ("wavelength/mean_free_path", wavelength / mean_free_path),
        ("mean_free_path/thickness", mean_free_path / thickness),
        ("thickness/absorption_length", thickness / absorption_length),
    )
    messages = []
    for label, ratio in checks:
        if ratio > 0.1:
            messages.append(f"{label} = {ratio:.3g} exceeds 0.1; diffusive model is strained")
    for msg in messages:
        warnings.warn(msg, ValidityWarning, stacklevel=2)
    return messages
