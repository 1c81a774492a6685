"""End-to-end simulation: enrolment, binned homodyne verification, attackers.

A session draws M independent challenges (probe index k, measurement angle
theta), samples Gaussian homodyne outcomes around the recorded response of the
token (or around whatever an interposed attacker sent back), counts outcomes
inside the expected bins and applies the frequency acceptance rule.  Queries
are independent, so sampling is batched; randomness is split into one named,
seedable stream per role so strategies can be swapped without perturbing the
other streams.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import (
    THETA_X,
    THETA_Y,
    DetectionConfig,
    ResponseModel,
    SecurityReport,
    min_sample_size,
    p_in_honest,
    security_margin,
)
from .channel import OpticalChannel
from .common import thread_count
from .ensemble import ProbeEnsemble

CRP_FORMAT_VERSION = 1

_STRATEGY_KINDS = ("none", "oracle", "fixed-error", "heterodyne")
_WRONG_K_MODES = ("uniform", "adjacent")
_RNG_ROLES = ("challenge", "verifier", "adversary")

_DEFAULT_QUERY_CHUNK = 1_000_000


class CrpFormatError(ValueError):
    """A challenge-response table file is malformed."""


def _fmt17(x: float) -> str:
    # canonical float rendering: 17 significant digits round-trip doubles exactly
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class CrpTable:
    """Recorded challenge-response pairs: per-k quadrature means (x, y).

    entries[k] holds (<X_k>, <Y_k>).  mask_id is an opaque identifier of the
    wavefront-shaping mask the table was recorded with.
    """

    n_phases: int
    entries: tuple[tuple[float, float], ...]
    mask_id: str
    mu_r: float
    arg_f: float

    def __post_init__(self):
        if not (isinstance(self.n_phases, int) and self.n_phases >= 2):
            raise ValueError(f"n_phases must be an integer >= 2, got {self.n_phases!r}")
        if len(self.entries) != self.n_phases:
            raise ValueError(
                f"expected {self.n_phases} entries, got {len(self.entries)}"
            )
        for k, entry in enumerate(self.entries):
            if len(entry) != 2 or not all(math.isfinite(v) for v in entry):
                raise ValueError(f"entry {k} must be a finite (x, y) pair, got {entry!r}")
        if not (math.isfinite(self.mu_r) and self.mu_r >= 0):
            raise ValueError(f"mu_r must be non-negative and finite, got {self.mu_r!r}")
        if not math.isfinite(self.arg_f):
            raise ValueError(f"arg_f must be finite, got {self.arg_f!r}")

    def mean_for(self, k: int, theta: float) -> float:
        """Recorded quadrature mean for challenge (k, theta)."""
        x, y = self.entries[k]
        if theta == THETA_X:
            return x
        if theta == THETA_Y:
            return y
        raise ValueError(f"theta must be 0 or pi/2, got {theta!r}")

    def quadrature_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Entries as (x_means, y_means) arrays for batched lookups."""
        arr = np.asarray(self.entries, dtype=float)
        return arr[:, 0].copy(), arr[:, 1].copy()

    def response_model(self) -> ResponseModel:
        """The analytic response model this table realizes when noiseless."""
        return ResponseModel(mu_r=self.mu_r, arg_f=self.arg_f, n_phases=self.n_phases)


@dataclass(frozen=True)
class Challenge:
    """One verification query: probe index k and measurement angle theta."""

    k: int
    theta: float

    def __post_init__(self):
        if not (isinstance(self.k, int) and self.k >= 0):
            raise ValueError(f"k must be a non-negative integer, got {self.k!r}")
        if self.theta not in (THETA_X, THETA_Y):
            raise ValueError(f"theta must be 0 or pi/2, got {self.theta!r}")


@dataclass(frozen=True)
class VerificationPolicy:
    """Sample count and acceptance window of one verification session.

    A paper-faithful policy must use at least min_sample_size(epsilon, zeta)
    queries; desk-scale policies may use fewer queries with a widened epsilon.
    """

    m: int
    epsilon: float
    zeta: float
    paper_faithful: bool = False

    def __post_init__(self):
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon!r}")
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta must be in (0, 1), got {self.zeta!r}")
        if self.paper_faithful and self.m < min_sample_size(self.epsilon, self.zeta):
            raise ValueError(
                f"paper-faithful policy needs m >= {min_sample_size(self.epsilon, self.zeta)}, "
                f"got {self.m}"
            )

    @classmethod
    def for_error_budget(
        cls, epsilon: float, zeta: float, paper_faithful: bool = False
    ) -> "VerificationPolicy":
        """Policy with the minimal sample size for the given error budget."""
        return cls(
            m=min_sample_size(epsilon, zeta),
            epsilon=epsilon,
            zeta=zeta,
            paper_faithful=paper_faithful,
        )


@dataclass(frozen=True)
class AdversaryStrategy:
    """Interception strategy: how the attacker guesses k from the probe.

    kinds:
        none        honest run, no interception.
        oracle      always guesses right (sanity ceiling).
        fixed-error wrong with probability error_rate; the wrong guess is
                    uniform over the other indices, or adjacent-only.
        heterodyne  measures both quadratures at once (one extra unit of
                    vacuum noise per quadrature) and rounds the outcome's
                    phase to the nearest alphabet phase.
    """

    kind: str
    error_rate: float | None = None
    wrong_k_mode: str = "uniform"
    response_scale: float = 1.0
    rng_stream: str = "adversary"

    def __post_init__(self):
        if self.kind not in _STRATEGY_KINDS:
            raise ValueError(f"kind must be one of {_STRATEGY_KINDS}, got {self.kind!r}")
        if self.kind == "fixed-error":
            if self.error_rate is None or not (0.0 <= self.error_rate <= 1.0):
                raise ValueError(
                    f"fixed-error strategy needs error_rate in [0, 1], got {self.error_rate!r}"
                )
        elif self.error_rate is not None:
            raise ValueError(f"error_rate is only meaningful for fixed-error strategies")
        if self.wrong_k_mode not in _WRONG_K_MODES:
            raise ValueError(
                f"wrong_k_mode must be one of {_WRONG_K_MODES}, got {self.wrong_k_mode!r}"
            )
        if not (math.isfinite(self.response_scale) and self.response_scale >= 0):
            raise ValueError(
                f"response_scale must be non-negative, got {self.response_scale!r}"
            )

    @classmethod
    def honest(cls) -> "AdversaryStrategy":
        return cls(kind="none")

    @classmethod
    def oracle(cls) -> "AdversaryStrategy":
        return cls(kind="oracle")

    @classmethod
    def fixed_error(cls, error_rate: float, wrong_k_mode: str = "uniform") -> "AdversaryStrategy":
        return cls(kind="fixed-error", error_rate=error_rate, wrong_k_mode=wrong_k_mode)

    @classmethod
    def heterodyne(cls) -> "AdversaryStrategy":
        return cls(kind="heterodyne")

    @property
    def active(self) -> bool:
        return self.kind != "none"


@dataclass(frozen=True)
class SessionResult:
    """Outcome of one verification session."""

    m: int
    m_in: int
    f_in: float
    accepted: bool
    p_err_empirical: float | None
    per_theta_counts: dict = field(compare=False)


@dataclass(frozen=True)
class RngStreams:
    """One seedable generator per protocol role.

    The layout (root seed, session index, fixed role order challenge/verifier/
    adversary) is part of the determinism contract: identical seeds and layout
    reproduce sessions bit for bit, and swapping the adversary never perturbs
    the challenge or verifier streams.
    """

    challenge: np.random.Generator
    verifier: np.random.Generator
    adversary: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int, session: int = 0) -> "RngStreams":
        gens = {
            role: np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(session, i))
            )
            for i, role in enumerate(_RNG_ROLES)
        }
        return cls(**gens)


def enroll(
    channel: OpticalChannel | ResponseModel,
    ensemble: ProbeEnsemble,
    mask_id: str = "mask-0",
    enrolment_noise_sd: float = 0.0,
    rng: np.random.Generator | None = None,
) -> CrpTable:
    """Record the expected quadrature means for every probe index.

    Enrolment is noiseless by default (the enroller is granted much better
    accuracy than a single verification query); enrolment_noise_sd > 0 adds
    independent Gaussian error to every recorded mean as a stress knob.

    Args:
        channel: the optical chain, or directly a ResponseModel carrying
            (mu_r, arg_f, n_phases).
        ensemble: the probe alphabet (sets N and, via the channel, mu_r).
    """
    if isinstance(channel, ResponseModel):
        if channel.n_phases != ensemble.n_phases:
            raise ValueError(
                f"response model has {channel.n_phases} phases, ensemble has "
                f"{ensemble.n_phases}"
            )
        mu_r, arg_f = channel.mu_r, channel.arg_f
    else:
        mu_r = channel.mu_response(ensemble.mu_p)
        arg_f = channel.arg_f
    n = ensemble.n_phases
    amp = math.sqrt(2.0 * mu_r)
    psi = arg_f + 2.0 * np.pi * np.arange(n) / n
    x = amp * np.cos(psi)
    y = amp * np.sin(psi)
    if enrolment_noise_sd > 0.0:
        if rng is None:
            raise ValueError("enrolment noise requested but no rng supplied")
        x = x + enrolment_noise_sd * rng.standard_normal(n)
        y = y + enrolment_noise_sd * rng.standard_normal(n)
    entries = tuple((float(xi), float(yi)) for xi, yi in zip(x, y))
    return CrpTable(n_phases=n, entries=entries, mask_id=mask_id, mu_r=mu_r, arg_f=arg_f)


def honest_sample(
    crp: CrpTable, ch: Challenge, det: DetectionConfig, rng: np.random.Generator
) -> float:
    """One homodyne outcome of the authentic token: N(table mean, sigma^2)."""
    if not (0 <= ch.k < crp.n_phases):
        raise ValueError(f"challenge index {ch.k} out of range [0, {crp.n_phases})")
    mean = crp.mean_for(ch.k, ch.theta)
    return float(mean + det.sigma() * rng.standard_normal())


def bin_check(crp: CrpTable, ch: Challenge, det: DetectionConfig, outcome: float) -> bool:
    """Whether the outcome lies in the closed bin of width Delta at the table mean."""
    mean = crp.mean_for(ch.k, ch.theta)
    half = 0.5 * det.bin_width()
    return (mean - half) <= outcome <= (mean + half)


def _infer_batch(
    strategy: AdversaryStrategy,
    true_k: np.ndarray,
    ensemble: ProbeEnsemble | None,
    rng: np.random.Generator,
    n_phases: int,
) -> np.ndarray:
    """Vectorized attacker inference of the probe indices."""
    m = true_k.shape[0]
    if strategy.kind == "oracle":
        return true_k.copy()
    if strategy.kind == "fixed-error":
        wrong = rng.random(m) < strategy.error_rate
        if strategy.wrong_k_mode == "uniform":
            offsets = rng.integers(1, n_phases, size=m)
        else:  # adjacent: offset 1 or N-1 with equal probability
            offsets = 1 + rng.integers(0, 2, size=m) * (n_phases - 2)
        return np.where(wrong, (true_k + offsets) % n_phases, true_k)
    if strategy.kind == "heterodyne":
        if ensemble is None:
            raise ValueError("heterodyne inference needs the probe ensemble")
        if ensemble.n_phases != n_phases:
            raise ValueError(
                f"ensemble has {ensemble.n_phases} phases, table has {n_phases}"
            )
        amp = math.sqrt(2.0 * ensemble.mu_p)
        phi = 2.0 * np.pi * true_k / n_phases
        zx = amp * np.cos(phi) + rng.standard_normal(m)
        zy = amp * np.sin(phi) + rng.standard_normal(m)
        est = np.rint(n_phases * np.arctan2(zy, zx) / (2.0 * np.pi)).astype(np.int64)
        return est % n_phases
    raise ValueError(f"strategy {strategy.kind!r} does not infer")


def adversary_infer(
    strategy: AdversaryStrategy,
    true_k: int,
    ensemble: ProbeEnsemble,
    rng: np.random.Generator,
) -> int:
    """Attacker's estimate of the probe index for a single query."""
    if not strategy.active:
        raise ValueError("honest strategy performs no inference")
    if not (0 <= true_k < ensemble.n_phases):
        raise ValueError(f"index {true_k} out of range [0, {ensemble.n_phases})")
    batch = _infer_batch(
        strategy, np.array([true_k]), ensemble, rng, ensemble.n_phases
    )
    return int(batch[0])


def adversary_respond(crp: CrpTable, k_tilde: int, scale: float = 1.0) -> tuple[float, float]:
    """Quadrature means of the response the attacker fabricates for guess k_tilde.

    scale != 1 models loss tampering (the fabricated amplitude misses the
    recorded one by that factor).
    """
    if not (0 <= k_tilde < crp.n_phases):
        raise ValueError(f"index {k_tilde} out of range [0, {crp.n_phases})")
    x, y = crp.entries[k_tilde]
    return (scale * x, scale * y)


def run_session(
    crp: CrpTable,
    det: DetectionConfig,
    policy: VerificationPolicy,
    strategy: AdversaryStrategy,
    rng: RngStreams | int,
    ensemble: ProbeEnsemble | None = None,
    query_chunk: int = _DEFAULT_QUERY_CHUNK,
) -> SessionResult:
    """Run one verification session of policy.m queries.

    Challenges are drawn uniformly and independently; under an active strategy
    the verifier samples around the fabricated response while binning against
    the recorded one.  Queries are processed in fixed-size batches (they are
    i.i.d., so batching changes nothing but speed).

    Args:
        rng: an RngStreams bundle, or an integer seed for session 0.
        ensemble: probe alphabet; required for heterodyne strategies.
    """
    streams = RngStreams.from_seed(rng) if isinstance(rng, int) else rng
    n = crp.n_phases
    x_means, y_means = crp.quadrature_arrays()
    if strategy.response_scale != 1.0 and strategy.active:
        resp_x, resp_y = strategy.response_scale * x_means, strategy.response_scale * y_means
    else:
        resp_x, resp_y = x_means, y_means
    sigma = det.sigma()
    half = 0.5 * det.bin_width()
    p_in0 = p_in_honest(det)

    m_total = policy.m
    m_in = 0
    n_errors = 0
    theta_counts = {THETA_X: [0, 0], THETA_Y: [0, 0]}  # [queries, in_bin]

    done = 0
    while done < m_total:
        m = min(query_chunk, m_total - done)
        k = streams.challenge.integers(0, n, size=m)
        is_y = streams.challenge.integers(0, 2, size=m).astype(bool)

        if strategy.active:
            k_resp = _infer_batch(strategy, k, ensemble, streams.adversary, n)
            n_errors += int(np.count_nonzero(k_resp != k))
            means = np.where(is_y, resp_y[k_resp], resp_x[k_resp])
        else:
            means = np.where(is_y, y_means[k], x_means[k])

        outcomes = means + sigma * streams.verifier.standard_normal(m)
        centers = np.where(is_y, y_means[k], x_means[k])
        in_bin = (outcomes >= centers - half) & (outcomes <= centers + half)

        m_in += int(np.count_nonzero(in_bin))
        n_y = int(np.count_nonzero(is_y))
        theta_counts[THETA_Y][0] += n_y
        theta_counts[THETA_X][0] += m - n_y
        in_y = int(np.count_nonzero(in_bin & is_y))
        theta_counts[THETA_Y][1] += in_y
        theta_counts[THETA_X][1] += int(np.count_nonzero(in_bin)) - in_y
        done += m

    f_in = m_in / m_total
    return SessionResult(
        m=m_total,
        m_in=m_in,
        f_in=f_in,
        accepted=abs(f_in - p_in0) < policy.epsilon,
        p_err_empirical=(n_errors / m_total) if strategy.active else None,
        per_theta_counts={
            "theta=0": tuple(theta_counts[THETA_X]),
            "theta=pi/2": tuple(theta_counts[THETA_Y]),
        },
    )


@dataclass(frozen=True)
class ExperimentSummary:
    """Aggregate of independent sessions plus the analytic prediction."""

    n_sessions: int
    m: int
    accept_rate: float
    mean_f_in: float
    p_in0: float
    p_err_empirical: float | None
    report: SecurityReport
    predicted_detectable: bool

    def to_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "m": self.m,
            "accept_rate": self.accept_rate,
            "mean_f_in": self.mean_f_in,
            "p_in0": self.p_in0,
            "p_err_empirical": self.p_err_empirical,
            "analytic": self.report.to_dict(),
            "predicted_detectable": self.predicted_detectable,
        }


def detection_experiment(
    ensemble: ProbeEnsemble,
    channel: OpticalChannel | ResponseModel,
    det: DetectionConfig,
    policy: VerificationPolicy,
    strategy: AdversaryStrategy,
    n_sessions: int,
    seed: int,
    threads: int | None = None,
) -> ExperimentSummary:
    """Run independent sessions and compare against the analytic condition.

    Sessions own disjoint RNG streams (root seed, session index), so they can
    run in parallel; results are gathered in session order, which keeps the
    summary deterministic regardless of scheduling.
    """
    if n_sessions < 1:
        raise ValueError(f"n_sessions must be >= 1, got {n_sessions}")
    crp = enroll(channel, ensemble)
    report = security_margin(ensemble, crp.response_model(), det, epsilon=policy.epsilon)

    def one(session: int) -> SessionResult:
        streams = RngStreams.from_seed(seed, session=session)
        return run_session(crp, det, policy, strategy, streams, ensemble=ensemble)

    workers = thread_count() if threads is None else threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_sessions)))
    else:
        results = [one(i) for i in range(n_sessions)]

    accept_rate = sum(r.accepted for r in results) / n_sessions
    mean_f_in = sum(r.f_in for r in results) / n_sessions
    if strategy.active:
        p_err = sum(r.p_err_empirical for r in results) / n_sessions
    else:
        p_err = None
    return ExperimentSummary(
        n_sessions=n_sessions,
        m=policy.m,
        accept_rate=accept_rate,
        mean_f_in=mean_f_in,
        p_in0=p_in_honest(det),
        p_err_empirical=p_err,
        report=report,
        predicted_detectable=report.secure,
    )


# ---------------------------------------------------------------------------
# CRP table persistence: versioned JSON, floats at 17 significant digits
# ---------------------------------------------------------------------------

def crp_table_to_json(table: CrpTable) -> str:
    """Canonical JSON rendering of a table (stable bytes, exact floats)."""
    lines = [
        "{",
        f'  "version": {CRP_FORMAT_VERSION},',
        f'  "n_phases": {table.n_phases},',
        f'  "mu_r": {_fmt17(table.mu_r)},',
        f'  "arg_f": {_fmt17(table.arg_f)},',
        f'  "mask_id": {json.dumps(table.mask_id)},',
        '  "entries": [',
    ]
    last = table.n_phases - 1
    for k, (x, y) in enumerate(table.entries):
        comma = "," if k != last else ""
        lines.append(f"    [{k}, {_fmt17(x)}, {_fmt17(y)}]{comma}")
    lines += ["  ]", "}", ""]
    return "\n".join(lines)


def save_crp_table(table: CrpTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(crp_table_to_json(table))


def crp_table_from_json(text: str) -> CrpTable:
    """Parse and validate a table document, naming the offending field on error."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CrpFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CrpFormatError("top-level value must be an object")
    for fieldname in ("version", "n_phases", "mu_r", "arg_f", "mask_id", "entries"):
        if fieldname not in doc:
            raise CrpFormatError(f"missing field '{fieldname}'")
    if doc["version"] != CRP_FORMAT_VERSION:
        raise CrpFormatError(
            f"unsupported version {doc['version']!r} (expected {CRP_FORMAT_VERSION})"
        )
    n = doc["n_phases"]
    if not isinstance(n, int) or n < 2:
        raise CrpFormatError(f"field 'n_phases' must be an integer >= 2, got {n!r}")
    entries_doc = doc["entries"]
    if not isinstance(entries_doc, list) or len(entries_doc) != n:
        raise CrpFormatError(
            f"field 'entries' must list exactly {n} triples, got "
            f"{len(entries_doc) if isinstance(entries_doc, list) else type(entries_doc).__name__}"
        )
    entries: list[tuple[float, float]] = []
    for i, row in enumerate(entries_doc):
        if not (isinstance(row, list) and len(row) == 3):
            raise CrpFormatError(f"entries[{i}] must be a [k, x_mean, y_mean] triple")
        k, x, y = row
        if k != i:
            raise CrpFormatError(f"entries[{i}] has k = {k!r}, expected {i}")
        try:
            entries.append((float(x), float(y)))
        except (TypeError, ValueError) as exc:
            raise CrpFormatError(f"entries[{i}] has non-numeric means") from exc
    try:
        return CrpTable(
            n_phases=n,
            entries=tuple(entries),
            mask_id=str(doc["mask_id"]),
            mu_r=float(doc["mu_r"]),
            arg_f=float(doc["arg_f"]),
        )
    except (TypeError, ValueError) as exc:
        raise CrpFormatError(str(exc)) from exc


def load_crp_table(path) -> CrpTable:
    with open(path, "r", encoding="utf-8") as fh:
        return crp_table_from_json(fh.read())
