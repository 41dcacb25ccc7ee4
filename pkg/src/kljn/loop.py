"""The ideal Kirchhoff loop seen from the wire.

Alice connects ``R_A`` with noise source ``V_A``, Bob connects ``R_B`` with
``V_B``.  Eve measures, per sample::

    V_E = (V_A * R_B + V_B * R_A) / (R_A + R_B)
    I_E = (V_B - V_A) / (R_A + R_B)

so positive current flows from Bob towards Alice.  Units are plain floats:
volts, amps, ohms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ._rng import SeedLike, make_rng
from ._validation import check_count, check_positive
from .noise import NoiseAssignment, sample_noise

CSV_HEADER = "index,v_volts,i_amps"


@dataclass(frozen=True)
class ResistorPair:
    r_low: float
    r_high: float
    degenerate: bool = field(default=False, repr=False)

    def __post_init__(self):
        r_low = check_positive(self.r_low, "r_low")
        r_high = check_positive(self.r_high, "r_high")
        if self.degenerate:
            if r_low > r_high:
                raise ValueError(f"r_low must not exceed r_high, got {r_low} > {r_high}")
        elif not r_low < r_high:
            raise ValueError(f"need 0 < r_low < r_high, got r_low={r_low}, r_high={r_high}")
        object.__setattr__(self, "r_low", r_low)
        object.__setattr__(self, "r_high", r_high)

    @classmethod
    def degenerate_pair(cls, r_low: float, r_high: float | None = None) -> "ResistorPair":
        """Pair allowing ``r_low == r_high``; for tests only, refused by the protocol."""
        return cls(r_low, r_low if r_high is None else r_high, degenerate=True)

    def resistance(self, level: str) -> float:
        if level == "L":
            return self.r_low
        if level == "H":
            return self.r_high
        raise ValueError(f"level must be 'L' or 'H', got {level!r}")

    def to_dict(self) -> dict:
        return {"r_low": self.r_low, "r_high": self.r_high}


class LoopState(str, enum.Enum):
    """Joint resistor choice; first letter is Alice's level, second is Bob's."""

    LL = "LL"
    LH = "LH"
    HL = "HL"
    HH = "HH"

    @property
    def alice(self) -> str:
        return self.value[0]

    @property
    def bob(self) -> str:
        return self.value[1]

    @property
    def is_mixed(self) -> bool:
        return self.alice != self.bob

    @classmethod
    def from_levels(cls, alice: str, bob: str) -> "LoopState":
        return cls(alice + bob)

    def __str__(self) -> str:
        return self.value


def _as_state(state) -> LoopState:
    try:
        return LoopState(state)
    except ValueError:
        raise ValueError(f"unknown loop state {state!r}; expected LL, LH, HL or HH") from None


@dataclass(frozen=True, eq=False)
class WireTrace:
    """Samples of (V_E, I_E) from one bit period.

    The generating state is deliberately not stored here.
    """

    v: np.ndarray
    i: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        i = np.array(self.i, dtype=float)
        if v.ndim != 1 or i.ndim != 1 or v.shape != i.shape:
            raise ValueError(f"v and i must be 1-d with equal length, got {v.shape} and {i.shape}")
        if v.size == 0:
            raise ValueError("a trace needs at least one sample")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
            raise ValueError("trace contains non-finite values")
        v.flags.writeable = False
        i.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "i", i)

    @property
    def n(self) -> int:
        return self.v.size

    def __len__(self) -> int:
        return self.v.size

    def pairs(self) -> np.ndarray:
        return np.column_stack([self.v, self.i])

    def equals(self, other: "WireTrace") -> bool:
        return np.array_equal(self.v, other.v) and np.array_equal(self.i, other.i)


def simulate_state(
    state,
    pair: ResistorPair,
    assignment: NoiseAssignment,
    n: int,
    rng: SeedLike = None,
    *,
    alice_source=None,
    bob_source=None,
) -> WireTrace:
    """Simulate ``n`` wire samples for ``state``.

    Alice's source is drawn first, then Bob's, from the same stream.
    ``alice_source`` / ``bob_source`` replace the random draw of that party
    with a given scalar or length-``n`` array, which makes the loop
    arithmetic testable without statistics.
    """
    state = _as_state(state)
    n = check_count(n, "n")
    seed = rng if isinstance(rng, int) else None
    rng = make_rng(rng)

    def source(level, override):
        if override is None:
            return sample_noise(assignment.model_for(level), n, rng)
        return np.broadcast_to(np.asarray(override, dtype=float), (n,))

    v_a = source(state.alice, alice_source)
    v_b = source(state.bob, bob_source)
    r_a = pair.resistance(state.alice)
    r_b = pair.resistance(state.bob)
    total = r_a + r_b
    v = (v_a * r_b + v_b * r_a) / total
    i = (v_b - v_a) / total
    return WireTrace(v, i, meta={"pair": pair.to_dict(), "seed": seed, "sample_count": n})


def mirror(trace: WireTrace) -> WireTrace:
    """Same voltage, negated current."""
    return WireTrace(trace.v, -trace.i, meta=dict(trace.meta))


def lukacs_king_residual(a1, a2, b1, b2, var1, var2) -> float:
    """Signed ``a1 b1 var1 + a2 b2 var2``.

    For independent ``X1, X2`` the linear forms ``a1 X1 + a2 X2`` and
    ``b1 X1 + b2 X2`` can only be independent when this vanishes (and the
    sources are Gaussian).
    """
    if var1 < 0 or var2 < 0:
        raise ValueError("variances must be non-negative")
    return a1 * b1 * var1 + a2 * b2 * var2


def _mixed(state) -> LoopState:
    state = _as_state(state)
    if not state.is_mixed:
        raise ValueError(f"independence analysis is defined for LH and HL only, got {state}")
    return state


def kljn_coefficients(state, pair: ResistorPair) -> tuple[float, float, float, float]:
    """Coefficients ``(a1, a2, b1, b2)`` taking (Alice noise, Bob noise) to the
    numerators of (V_E, I_E)."""
    state = _mixed(state)
    r_a = pair.resistance(state.alice)
    r_b = pair.resistance(state.bob)
    return (r_b, r_a, -1.0, 1.0)


def theoretical_cov(state, pair: ResistorPair, var_alice: float, var_bob: float) -> float:
    """Cov(V_E, I_E) = (R_A var_B - R_B var_A) / (R_A + R_B)**2."""
    state = _mixed(state)
    a1, a2, b1, b2 = kljn_coefficients(state, pair)
    total = pair.resistance(state.alice) + pair.resistance(state.bob)
    return lukacs_king_residual(a1, a2, b1, b2, var_alice, var_bob) / total**2


def theoretical_moments(state, pair: ResistorPair, var_alice: float, var_bob: float) -> dict[str, float]:
    """Var(V_E), Var(I_E), Cov(V_E, I_E) and correlation for finite source variances."""
    state = _as_state(state)
    r_a = pair.resistance(state.alice)
    r_b = pair.resistance(state.bob)
    total = r_a + r_b
    var_v = (r_b**2 * var_alice + r_a**2 * var_bob) / total**2
    var_i = (var_alice + var_bob) / total**2
    cov = (r_a * var_bob - r_b * var_alice) / total**2
    return {"var_v": var_v, "var_i": var_i, "cov": cov, "corr": cov / math.sqrt(var_v * var_i)}


def write_trace_csv(trace: WireTrace, path) -> None:
    lines = [CSV_HEADER]
    lines.extend(f"{k},{v:.17g},{i:.17g}" for k, (v, i) in enumerate(zip(trace.v.tolist(), trace.i.tolist())))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def read_trace_csv(path) -> WireTrace:
    text = Path(path).read_text(encoding="ascii")
    header, *rows = text.splitlines()
    if header != CSV_HEADER:
        raise ValueError(f"unexpected trace header {header!r}")
    data = np.array([row.split(",")[1:] for row in rows if row], dtype=float).reshape(-1, 2)
    return WireTrace(data[:, 0], data[:, 1])
