"""Bandwidth accounting: per-cut counters, rates, and reduction ratios.

A cut is a named group of channels whose traffic is summed. Counters
are exact (every event is counted with its wire size; no sampling), so
identical runs produce identical reports. Rates use simulated time:
bits_per_second = bytes * 8 / (duration_cycles / clock_hz), kept as an
exact rational and rendered as a float for output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .errors import ZeroDuration


@dataclass(frozen=True)
class CutCounter:
    name: str
    events: int
    bytes: int


@dataclass(frozen=True)
class CutRate:
    name: str
    events: int
    bytes: int
    bits_per_second: Fraction | None  # None when no duration is known

    @property
    def bps_float(self) -> float | None:
        return None if self.bits_per_second is None else float(self.bits_per_second)


@dataclass(frozen=True)
class RatioEntry:
    name: str
    numerator: str
    denominator: str
    value: Fraction | None  # None when the denominator cut is empty


@dataclass(frozen=True)
class BandwidthReport:
    cuts: tuple[CutRate, ...]
    ratios: tuple[RatioEntry, ...]
    duration_cycles: int | None
    clock_hz: int
    full_trace_estimate_bits: int | None = None

    def cut(self, name: str) -> CutRate:
        for c in self.cuts:
            if c.name == name:
                return c
        raise KeyError(name)

    def ratio(self, name: str) -> RatioEntry:
        for r in self.ratios:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        doc = {
            "cuts": [
                {
                    "name": c.name,
                    "events": c.events,
                    "bytes": c.bytes,
                    "bps": c.bps_float,
                }
                for c in self.cuts
            ],
            "ratios": [
                {
                    "name": r.name,
                    "value": None if r.value is None else float(r.value),
                }
                for r in self.ratios
            ],
        }
        if self.full_trace_estimate_bits is not None:
            doc["full_trace_estimate_bits"] = self.full_trace_estimate_bits
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def format_table(self) -> str:
        lines = [f"{'cut':<14} {'events':>10} {'bytes':>12} {'bits/s':>14}"]
        for c in self.cuts:
            bps = f"{c.bps_float:,.1f}" if c.bps_float is not None else "-"
            lines.append(f"{c.name:<14} {c.events:>10} {c.bytes:>12} {bps:>14}")
        if self.ratios:
            lines.append("")
            lines.append(f"{'ratio':<28} {'value':>10}")
            for r in self.ratios:
                value = f"{float(r.value):.4f}" if r.value is not None else "-"
                lines.append(f"{r.name:<28} {value:>10}")
        if self.full_trace_estimate_bits is not None:
            lines.append("")
            lines.append(
                f"estimated upper-bound conventional trace: "
                f"{self.full_trace_estimate_bits:,} bits"
            )
            if self.duration_cycles:
                est_bps = Fraction(self.full_trace_estimate_bits * self.clock_hz,
                                   self.duration_cycles)
                lines.append(f"  (= {float(est_bps):,.1f} bits/s over the run)")
        return "\n".join(lines)


def compute_rates(counters, duration_cycles: int | None, clock_hz: int, *,
                  ratios: dict[str, tuple[str, str]] | None = None,
                  full_trace_estimate_bits: int | None = None) -> BandwidthReport:
    """Derive rates and requested byte ratios from exact counters.

    duration_cycles=None produces a counts-only report (event-log
    replays have no simulated clock); otherwise it must be positive.
    ratios maps a ratio name to (numerator cut, denominator cut).
    """
    if clock_hz <= 0:
        raise ZeroDuration("clock_hz must be positive")
    if duration_cycles is not None and duration_cycles <= 0:
        raise ZeroDuration("simulated duration must be positive")

    by_name = {c.name: c for c in counters}
    cuts = []
    for c in counters:
        if duration_cycles is None:
            bps = None
        else:
            bps = Fraction(c.bytes * 8 * clock_hz, duration_cycles)
        cuts.append(CutRate(c.name, c.events, c.bytes, bps))

    ratio_entries = []
    for name, (num, den) in (ratios or {}).items():
        if num not in by_name or den not in by_name:
            missing = num if num not in by_name else den
            raise KeyError(f"ratio {name!r}: unknown cut {missing!r}")
        den_bytes = by_name[den].bytes
        value = None if den_bytes == 0 else Fraction(by_name[num].bytes, den_bytes)
        ratio_entries.append(RatioEntry(name, num, den, value))

    return BandwidthReport(
        cuts=tuple(cuts),
        ratios=tuple(ratio_entries),
        duration_cycles=duration_cycles,
        clock_hz=clock_hz,
        full_trace_estimate_bits=full_trace_estimate_bits,
    )
