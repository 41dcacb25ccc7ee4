"""Key-exchange sessions over the ideal loop.

Each bit period Alice and Bob pick a level uniformly at random and the loop
runs for ``samples_per_bit`` samples.  Both parties see the same wire and
infer the other side's resistor from the current variance:
``Var(I_E) = c / (R_A + R_B)`` under Johnson scaling with public thermal
constant ``c`` (``sigma**2 = c * R``).  Same-level periods are discarded;
a kept period carries bit 1 iff Alice holds ``R_H``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import clone

from ._rng import CALIBRATION, PERIOD, derive_rng
from ._validation import check_count, check_positive
from .eve import Distinguisher, RefMatchDistinguisher
from .loop import LoopState, ResistorPair, WireTrace, simulate_state
from .noise import NoiseAssignment, SymmetricStable

LEVELS = ("L", "H")
R_SUM_CLASSES = ("LL", "mixed", "HH")
PERIOD_CSV_HEADER = "period,alice_level,bob_level,kept,bit,eve_guess"


class PeriodCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    pair: ResistorPair
    assignment: NoiseAssignment
    thermal_constant: float
    bits_requested: int
    samples_per_bit: int = 4096
    master_seed: int = 0
    eve_distinguisher: Distinguisher | None = None

    def __post_init__(self):
        if self.pair.degenerate:
            raise ValueError("sessions need distinct resistors")
        if isinstance(self.assignment.low, SymmetricStable):
            raise ValueError("sessions need a finite-variance noise family (gaussian or uniform)")
        check_positive(self.thermal_constant, "thermal_constant")
        check_count(self.bits_requested, "bits_requested")
        check_count(self.samples_per_bit, "samples_per_bit", minimum=256)
        if self.assignment.scaling_tag == "johnson":
            c = self.thermal_constant
            for level in LEVELS:
                var = self.assignment.model_for(level).variance
                expected = c * self.pair.resistance(level)
                if abs(var - expected) > 1e-9 * expected:
                    raise ValueError(
                        f"thermal constant {c} inconsistent with the {level} noise variance {var}"
                    )

    def expected_current_variance(self, alice: str, bob: str) -> float:
        """Public expectation of Var(I_E) for a level combination."""
        r_sum = self.pair.resistance(alice) + self.pair.resistance(bob)
        if self.assignment.scaling_tag == "johnson":
            return self.thermal_constant / r_sum
        var = self.assignment.model_for(alice).variance + self.assignment.model_for(bob).variance
        return var / r_sum**2

    def to_dict(self) -> dict:
        eve = self.eve_distinguisher
        return {
            "pair": self.pair.to_dict(),
            "assignment": self.assignment.to_dict(),
            "thermal_constant": self.thermal_constant,
            "bits_requested": self.bits_requested,
            "samples_per_bit": self.samples_per_bit,
            "master_seed": self.master_seed,
            "eve_distinguisher": None if eve is None else eve.describe(),
        }


def johnson_session_assignment(pair: ResistorPair, family: str, thermal_constant: float) -> NoiseAssignment:
    """Johnson-scaled assignment whose variances equal ``c * R``."""
    from .noise import johnson_scaling

    var_high = thermal_constant * pair.r_high
    if family == "gaussian":
        magnitude = math.sqrt(var_high)
    elif family == "uniform":
        magnitude = math.sqrt(3.0 * var_high)
    else:
        raise ValueError(f"sessions support gaussian or uniform noise, got {family!r}")
    return johnson_scaling(pair, family, magnitude)


def _current_variance(trace: WireTrace) -> float:
    var = float(np.var(trace.i, ddof=1))
    if not math.isfinite(var) or var <= 0:
        raise ValueError(f"current variance estimate is not usable: {var}")
    return var


def classify_r_sum(
    trace: WireTrace, pair: ResistorPair, c: float, centres: dict[str, float] | None = None
) -> str:
    """Classify the loop's total resistance as ``LL``, ``mixed`` or ``HH``.

    ``c / Var(I_E)`` is compared against ``2 R_L``, ``R_L + R_H`` and
    ``2 R_H`` with thresholds at the log-domain midpoints.  ``centres``
    overrides the expected current variance per class, for assignments
    that do not follow Johnson scaling.
    """
    if trace.n < 256:
        raise ValueError(f"classification needs at least 256 samples, got {trace.n}")
    log_var = math.log(_current_variance(trace))
    if centres is None:
        c = check_positive(c, "c")
        centres = {
            "LL": c / (2 * pair.r_low),
            "mixed": c / (pair.r_low + pair.r_high),
            "HH": c / (2 * pair.r_high),
        }
    return min(R_SUM_CLASSES, key=lambda k: abs(log_var - math.log(centres[k])))


def _infer_other(config: SessionConfig, own: str, var_i: float) -> str:
    pair = config.pair
    if config.assignment.scaling_tag == "johnson":
        r_other = config.thermal_constant / var_i - pair.resistance(own)
        return min(LEVELS, key=lambda lv: abs(r_other - pair.resistance(lv)))
    log_var = math.log(var_i)
    return min(LEVELS, key=lambda lv: abs(log_var - math.log(config.expected_current_variance(own, lv))))


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    alice_level: str
    bob_level: str
    alice_infers: str
    bob_infers: str
    kept: bool
    bit: int | None
    bob_bit: int | None
    eve_class: str
    eve_guess: int | None


def _bits_to_hex(bits) -> str:
    if len(bits) == 0:
        return ""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


@dataclass(frozen=True)
class KeyExchangeResult:
    alice_key: tuple[int, ...]
    bob_key: tuple[int, ...]
    kept_periods: int
    discarded_periods: int
    inference_drops: int
    agreement_rate: float
    party_inference_errors: int
    eve_state_classification: tuple[str, ...]
    eve_bit_guesses: tuple[int, ...] | None
    eve_accuracy: float | None
    periods: tuple[PeriodRecord, ...] = field(repr=False, default=())
    config: dict = field(default_factory=dict)

    @property
    def total_periods(self) -> int:
        return len(self.periods)

    @property
    def discard_fraction(self) -> float:
        return self.discarded_periods / self.total_periods

    def to_dict(self) -> dict:
        return {
            "alice_key_hex": _bits_to_hex(self.alice_key),
            "bob_key_hex": _bits_to_hex(self.bob_key),
            "key_bits": len(self.alice_key),
            "kept_periods": self.kept_periods,
            "discarded_periods": self.discarded_periods,
            "inference_drops": self.inference_drops,
            "total_periods": self.total_periods,
            "agreement_rate": self.agreement_rate,
            "party_inference_errors": self.party_inference_errors,
            "eve_state_classification": list(self.eve_state_classification),
            "eve_bit_guesses_hex": None if self.eve_bit_guesses is None else _bits_to_hex(self.eve_bit_guesses),
            "eve_accuracy": self.eve_accuracy,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_periods_csv(self, path) -> None:
        def cell(x):
            return "" if x is None else str(int(x))

        lines = [PERIOD_CSV_HEADER]
        for p in self.periods:
            lines.append(
                f"{p.period},{p.alice_level},{p.bob_level},{int(p.kept)},{cell(p.bit)},{cell(p.eve_guess)}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def run_key_exchange(config: SessionConfig) -> KeyExchangeResult:
    """Run bit periods until ``bits_requested`` bits are kept.

    Raises :class:`PeriodCapExceeded` after ``4 * bits_requested`` periods.
    Period ``k`` draws both levels and the trace from the stream derived
    from ``(master_seed, 2, k)``; Eve's distinguisher is calibrated once
    from ``(master_seed, 1)``.
    """
    pair, n = config.pair, config.samples_per_bit
    centres = None
    if config.assignment.scaling_tag != "johnson":
        centres = {
            "LL": config.expected_current_variance("L", "L"),
            "mixed": config.expected_current_variance("L", "H"),
            "HH": config.expected_current_variance("H", "H"),
        }

    eve = None
    if config.eve_distinguisher is not None:
        eve = clone(config.eve_distinguisher)
        cal_rng = derive_rng(config.master_seed, CALIBRATION)
        if isinstance(eve, RefMatchDistinguisher):
            eve.calibrate(pair, config.assignment, rng=cal_rng)
        else:
            eve.calibrate(pair, config.assignment, n, cal_rng)

    records: list[PeriodRecord] = []
    kept = 0
    cap = 4 * config.bits_requested
    while kept < config.bits_requested:
        k = len(records)
        if k >= cap:
            raise PeriodCapExceeded(f"only {kept} of {config.bits_requested} bits kept after {cap} periods")
        rng = derive_rng(config.master_seed, PERIOD, k)
        alice, bob = LEVELS[int(rng.integers(2))], LEVELS[int(rng.integers(2))]
        trace = simulate_state(LoopState.from_levels(alice, bob), pair, config.assignment, n, rng)

        var_i = _current_variance(trace)
        alice_infers = _infer_other(config, alice, var_i)
        bob_infers = _infer_other(config, bob, var_i)
        keep = alice_infers != alice and bob_infers != bob
        eve_class = classify_r_sum(trace, pair, config.thermal_constant, centres)
        eve_guess = None
        if keep and eve is not None:
            eve_guess = int(eve.predict(trace)[0] == "HL")
        records.append(
            PeriodRecord(
                period=k,
                alice_level=alice,
                bob_level=bob,
                alice_infers=alice_infers,
                bob_infers=bob_infers,
                kept=keep,
                bit=int(alice == "H") if keep else None,
                # Bob's view of Alice's level is the opposite of his own
                bob_bit=int(bob == "L") if keep else None,
                eve_class=eve_class,
                eve_guess=eve_guess,
            )
        )
        kept += keep

    kept_records = [r for r in records if r.kept]
    alice_key = tuple(r.bit for r in kept_records)
    bob_key = tuple(r.bob_bit for r in kept_records)
    agreement = float(np.mean(np.equal(alice_key, bob_key)))
    errors = sum(r.alice_infers != r.bob_level or r.bob_infers != r.alice_level for r in records)
    alice_keeps = [r.alice_infers != r.alice_level for r in records]
    bob_keeps = [r.bob_infers != r.bob_level for r in records]
    discarded = sum(not a and not b for a, b in zip(alice_keeps, bob_keeps))
    drops = sum(a != b for a, b in zip(alice_keeps, bob_keeps))

    guesses = accuracy = None
    if eve is not None:
        guesses = tuple(r.eve_guess for r in kept_records)
        accuracy = float(np.mean(np.equal(guesses, alice_key)))

    return KeyExchangeResult(
        alice_key=alice_key,
        bob_key=bob_key,
        kept_periods=len(kept_records),
        discarded_periods=discarded,
        inference_drops=drops,
        agreement_rate=agreement,
        party_inference_errors=errors,
        eve_state_classification=tuple(r.eve_class for r in records),
        eve_bit_guesses=guesses,
        eve_accuracy=accuracy,
        periods=tuple(records),
        config=config.to_dict(),
    )
