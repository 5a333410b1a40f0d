"""Kink-margin instrumentation for the gradient checker.

Finite differences are unreliable when the forward path runs close to a
non-smooth point (a max-pool tie or a ReLU preactivation near zero).  While
a probe is active, those operations record how far they are from their kink;
the gradient checker refuses instances whose margin is too small.
"""

from __future__ import annotations

from contextlib import contextmanager

_sink: dict[str, float] | None = None


def active() -> bool:
    return _sink is not None


def note(kind: str, margin: float) -> None:
    if _sink is not None:
        _sink[kind] = min(_sink.get(kind, float("inf")), margin)


@contextmanager
def record_kink_margins():
    """Collect {"max_pool": m, "relu": m} minimum margins during forwards.

    Not reentrant and not thread-safe; only the gradient checker uses it.
    """
    global _sink
    prev = _sink
    _sink = {}
    try:
        yield _sink
    finally:
        _sink = prev
