"""Shared warning category and small helpers used across the package."""

import os


class ValidityWarning(UserWarning):
    """Parameters are outside the regime the model is trusted in.

    The computation still runs; the warning flags that the result should be
    interpreted with care (e.g. a bin ratio outside the recommended window,
    or an enhancement factor above the ideal wavefront-shaping limit).
    """


def thread_count(default: int | None = None) -> int:
    """Worker count for parallel section, capped by the QPUK_THREADS env var."""
    env = os.environ.get("QPUK_THREADS")
    if env is not None:
        n = int(env)
        if n < 1:
            raise ValueError("QPUK_THREADS must be a positive integer")
        return n
    if default is not None:
        return default
    return min(4, os.cpu_count() or 1)
