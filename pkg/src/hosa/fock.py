"""Number-state superposition spectrum analyzer.

A superposition of phonon number states |n1>, |n2> accumulates relative phase
at the rate (n1 - n2) * Delta(t), so a programmable integer staircase
delta_n(t) = n1 - n2 realizes a piecewise-constant sensitivity function for
oscillator-frequency noise.  Staircases are built from pulses on a
three-level system: ``down`` (the bright, detected state), ``up``, and an
``aux`` shelf.  Sideband pulses couple (down, n) <-> (up, n -+ 1) and move one
superposition branch along the number ladder; microwave pulses couple
(up, n) <-> (aux, n) and park or swap branches without changing delta_n.

Four layers: the pulse-sequence representation with JSON serialization, the
derived sensitivity staircase and accumulated phase, a deterministic optimizer
fitting a staircase to a Hann-windowed sinusoid target, and a full numerical
propagator including detuned-pulse dynamics and Rabi-rate mismatch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .filters import PiecewiseSensitivity, piecewise_frequency_filter, piecewise_values
from .noise import WhiteBandNoise, sample_realization
from .numerics import TimeGrid, rng_stream

STATES = ("down", "up", "aux")
STATE_INDEX = {s: i for i, s in enumerate(STATES)}
SIDEBAND_KINDS = ("RSB", "BSB")
PULSE_KINDS = SIDEBAND_KINDS + ("MW", "delay")

# sin^2(phi/2) tracks phi^2/4 to a few percent only up to here
QUADRATIC_PHASE_LIMIT = math.pi / 4


def _ladder_level(m: int) -> tuple[str, int]:
    """Walker level holding m phonons: (up, m) for even m, (down, m) for odd."""
    return ("up", m) if m % 2 == 0 else ("down", m)


def _coerce_level(level) -> tuple[str, int]:
    state, n = level
    state = str(state)
    n = int(n)
    if state not in STATES:
        raise ValueError(f"unknown internal state {state!r}")
    if n < 0:
        raise ValueError("phonon number must be non-negative")
    return (state, n)


@dataclass(frozen=True)
class Pulse:
    """One sequence element: a sideband or microwave rotation, or a delay.

    ``source`` and ``target`` name the addressed pair of |state, n> levels;
    for a transfer pulse the moving branch sits at ``source``.  Delays carry
    no levels.  ``duration == 0`` marks an idealized instantaneous rotation.
    """

    kind: str
    duration: float
    phase: float = 0.0
    source: tuple[str, int] | None = None
    target: tuple[str, int] | None = None

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError("pulse duration must be finite and non-negative")
        if not math.isfinite(self.phase):
            raise ValueError("pulse phase must be finite")
        if self.kind == "delay":
            if self.source is not None or self.target is not None:
                raise ValueError("delays do not address levels")
            return
        if self.source is None or self.target is None:
            raise ValueError(f"{self.kind} pulse needs source and target levels")
        src = _coerce_level(self.source)
        tgt = _coerce_level(self.target)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        states = {src[0], tgt[0]}
        by_state = {src[0]: src[1], tgt[0]: tgt[1]}
        if self.kind == "MW":
            if states != {"up", "aux"} or src[1] != tgt[1]:
                raise ValueError("MW pulses couple (up, n) <-> (aux, n)")
        else:
            if states != {"down", "up"}:
                raise ValueError("sideband pulses couple down <-> up")
            step = by_state["down"] - by_state["up"]
            if self.kind == "RSB" and step != 1:
                raise ValueError("RSB couples (down, n+1) <-> (up, n)")
            if self.kind == "BSB" and step != -1:
                raise ValueError("BSB couples (down, n) <-> (up, n+1)")


@dataclass(frozen=True, eq=False)
class PulseSequence:
    """Ordered pulses plus the calibrated Rabi rate (rad/s) per pulse kind.

    The first and last non-delay pulses are the pi/2 sideband pulses that
    open and close the superposition; every other sideband or microwave pulse
    acts as a full transfer.  Rotation angles follow from rate * duration;
    zero-duration pulses are ideal rotations of their nominal angle and are
    therefore immune to detuning and rate mismatch.
    """

    pulses: tuple[Pulse, ...]
    rabi_rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        pulses = tuple(self.pulses)
        rates = {str(k): float(v) for k, v in dict(self.rabi_rates).items()}
        for kind, rate in rates.items():
            if kind not in PULSE_KINDS[:3]:
                raise ValueError(f"Rabi rate given for unknown kind {kind!r}")
            if not rate > 0:
                raise ValueError("Rabi rates must be positive")
        object.__setattr__(self, "pulses", pulses)
        object.__setattr__(self, "rabi_rates", rates)
        nd = self._non_delay_indices
        if len(nd) < 2:
            raise ValueError("sequence needs opening and closing pulses")
        for i in (nd[0], nd[-1]):
            p = pulses[i]
            if p.kind not in SIDEBAND_KINDS:
                raise ValueError("sequence must open and close with sideband pulses")
        for i, p in enumerate(pulses):
            if p.kind == "delay" or p.duration == 0.0:
                continue
            rate = rates.get(p.kind)
            if rate is None or not math.isfinite(rate):
                raise ValueError(f"missing Rabi rate for {p.kind} pulses")
            want = 0.5 * math.pi if i in (nd[0], nd[-1]) else None
            if want is not None and abs(rate * p.duration - want) > 1e-6:
                raise ValueError("opening and closing pulses must have pi/2 area")

    @property
    def _non_delay_indices(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.pulses) if p.kind != "delay")

    @property
    def total_duration(self) -> float:
        return float(sum(p.duration for p in self.pulses))

    @property
    def max_phonon(self) -> int:
        ns = [lv[1] for p in self.pulses if p.kind != "delay" for lv in (p.source, p.target)]
        return max(ns)

    def pulse_angle(self, index: int, rabi_scale: float = 1.0) -> float:
        """Rotation angle of pulse ``index``; ``rabi_scale`` rescales sidebands.

        Zero-duration pulses keep their nominal angle (pi/2 at the sequence
        ends, pi elsewhere) regardless of the scale.
        """
        p = self.pulses[index]
        if p.kind == "delay":
            return 0.0
        nd = self._non_delay_indices
        if p.duration == 0.0:
            return 0.5 * math.pi if index in (nd[0], nd[-1]) else math.pi
        scale = rabi_scale if p.kind in SIDEBAND_KINDS else 1.0
        return self.rabi_rates[p.kind] * scale * p.duration


def sequence_to_json(seq: PulseSequence) -> str:
    """Serialize to a JSON array of {kind, duration_s, phase_rad, from, to}."""
    rows = []
    for p in seq.pulses:
        rows.append(
            {
                "kind": p.kind,
                "duration_s": p.duration,
                "phase_rad": p.phase,
                "from": None if p.source is None else list(p.source),
                "to": None if p.target is None else list(p.target),
            }
        )
    return json.dumps(rows, indent=2)


def sequence_from_json(text: str) -> PulseSequence:
    """Inverse of sequence_to_json.

    Calibrated Rabi rates are rebuilt from the stored durations: interior
    pulses are pi rotations, the first and last non-delay pulses pi/2.
    Inconsistent durations within one kind are rejected.
    """
    rows = json.loads(text)
    if not isinstance(rows, list):
        raise ValueError("sequence JSON must be an array of pulses")
    pulses = []
    for row in rows:
        pulses.append(
            Pulse(
                kind=row["kind"],
                duration=float(row["duration_s"]),
                phase=float(row["phase_rad"]),
                source=None if row["from"] is None else tuple(row["from"]),
                target=None if row["to"] is None else tuple(row["to"]),
            )
        )
    nd = [i for i, p in enumerate(pulses) if p.kind != "delay"]
    if len(nd) < 2:
        raise ValueError("sequence needs opening and closing pulses")
    rates: dict[str, float] = {}
    for i in nd:
        p = pulses[i]
        if p.duration == 0.0:
            continue
        angle = 0.5 * math.pi if i in (nd[0], nd[-1]) else math.pi
        rate = angle / p.duration
        prev = rates.get(p.kind)
        if prev is None:
            rates[p.kind] = rate
        elif abs(rate - prev) > 1e-6 * prev:
            raise ValueError(f"inconsistent {p.kind} pulse durations in sequence JSON")
    return PulseSequence(tuple(pulses), rates)


def write_sequence(path, seq: PulseSequence) -> None:
    with open(path, "w") as fh:
        fh.write(sequence_to_json(seq))
        fh.write("\n")


def read_sequence(path) -> PulseSequence:
    with open(path) as fh:
        return sequence_from_json(fh.read())


# ---------------------------------------------------------------------------
# branch bookkeeping: from pulse records to the delta_n staircase


def _walk_branches(seq: PulseSequence):
    """Track both superposition branches through the sequence.

    Returns a list aligned with ``seq.pulses`` of tuples
    (pulse, t0, t1, pair_before, pair_after) where pair = (n1, n2) gives the
    phonon numbers of branch 1 (the component transferred by the opening
    pulse) and branch 2 (the component left behind).  Raises on sequences
    whose pulses do not address occupied levels.
    """
    nd = seq._non_delay_indices
    opener, closer = nd[0], nd[-1]
    p_open, p_close = seq.pulses[opener], seq.pulses[closer]
    pair_idle = (p_open.source[1], p_open.source[1])
    pair_done = (p_close.target[1], p_close.target[1])
    b1 = b2 = None
    records = []
    t = 0.0
    for i, p in enumerate(seq.pulses):
        t0, t1 = t, t + p.duration
        if p.kind == "delay":
            pair = pair_idle if b1 is None else pair_done if b1 == "done" else (b1[1], b2[1])
            records.append((p, t0, t1, pair, pair))
            t = t1
            continue
        if i == opener:
            before = pair_idle
            b1, b2 = p.target, p.source
        elif i == closer:
            before = (b1[1], b2[1])
            if {b1, b2} != {p.source, p.target}:
                raise ValueError("closing pulse does not address both superposition branches")
            b1 = b2 = "done"
        else:
            before = (b1[1], b2[1])
            at1, at2 = b1 == p.source, b2 == p.source
            to1, to2 = b1 == p.target, b2 == p.target
            if at1 and to2:
                b1, b2 = p.target, p.source
            elif at2 and to1:
                b1, b2 = p.source, p.target
            elif at1:
                b1 = p.target
            elif at2:
                b2 = p.target
            else:
                raise ValueError(f"pulse {i} ({p.kind}) addresses no occupied level")
            if b1 == b2:
                raise ValueError(f"pulse {i} ({p.kind}) collapses the two branches onto one level")
        after = pair_done if b1 == "done" else (b1[1], b2[1])
        records.append((p, t0, t1, before, after))
        t = t1
    return records


def sensitivity_from_sequence(
    seq: PulseSequence, pulse_convention: str = "half_value"
) -> PiecewiseSensitivity:
    """Staircase delta_n(t) of a sequence, centered on [-T/2, T/2].

    ``half_value``: each pulse interval carries the mean of the delta_n values
    before and after it.  ``ignore``: pulses switch instantaneously at their
    midpoints.  Microwave pulses never change delta_n.
    """
    if pulse_convention not in ("half_value", "ignore"):
        raise ValueError("pulse_convention must be 'half_value' or 'ignore'")
    breaks = [0.0]
    vals: list[float] = []

    def emit(t_new, value):
        value = float(value)
        if t_new <= breaks[-1]:
            return
        if vals and vals[-1] == value:
            breaks[-1] = t_new
        else:
            breaks.append(t_new)
            vals.append(value)

    for p, t0, t1, before, after in _walk_branches(seq):
        dn0 = before[0] - before[1]
        dn1 = after[0] - after[1]
        if dn0 == dn1:
            emit(t1, dn0)
        elif pulse_convention == "half_value":
            emit(t1, 0.5 * (dn0 + dn1))
        else:
            emit(0.5 * (t0 + t1), dn0)
            emit(t1, dn1)
    if not vals:
        raise ValueError("sequence has zero total duration")
    shift = 0.5 * seq.total_duration
    return PiecewiseSensitivity(np.asarray(breaks) - shift, vals)


@dataclass(frozen=True)
class PathInterval:
    """One stretch of constant superposition |n1>, |n2>."""

    t_start: float
    t_end: float
    n1: int
    n2: int

    @property
    def delta_n(self) -> int:
        return self.n1 - self.n2


@dataclass(frozen=True, eq=False)
class SuperpositionPath:
    """Contiguous intervals of number-state pairs; delta_n = n1 - n2."""

    intervals: tuple[PathInterval, ...]

    def __post_init__(self):
        iv = tuple(self.intervals)
        if not iv:
            raise ValueError("path needs at least one interval")
        for a in iv:
            if not a.t_end > a.t_start:
                raise ValueError("path intervals must have positive length")
        tol = 1e-9 * (iv[-1].t_end - iv[0].t_start)
        for a, b in zip(iv, iv[1:]):
            if abs(b.t_start - a.t_end) > tol:
                raise ValueError("path intervals must be contiguous")
        object.__setattr__(self, "intervals", iv)

    @property
    def duration(self) -> float:
        return self.intervals[-1].t_end - self.intervals[0].t_start

    def piecewise(self) -> PiecewiseSensitivity:
        breaks = [a.t_start for a in self.intervals] + [self.intervals[-1].t_end]
        return PiecewiseSensitivity(breaks, [a.delta_n for a in self.intervals])


def superposition_path(seq: PulseSequence) -> SuperpositionPath:
    """Idealized path of the sequence: pulses switch at their midpoints."""
    segs: list[list] = []
    cursor = [0.0]

    def emit(t_new, pair):
        if t_new <= cursor[0]:
            return
        if segs and (segs[-1][2], segs[-1][3]) == pair:
            segs[-1][1] = t_new
        else:
            segs.append([cursor[0], t_new, pair[0], pair[1]])
        cursor[0] = t_new

    for p, t0, t1, before, after in _walk_branches(seq):
        if before == after:
            emit(t1, before)
        else:
            emit(0.5 * (t0 + t1), before)
            emit(t1, after)
    shift = 0.5 * seq.total_duration
    return SuperpositionPath(
        tuple(PathInterval(a - shift, b - shift, n1, n2) for a, b, n1, n2 in segs)
    )


def phase_accumulation(path, grid: TimeGrid, delta: np.ndarray) -> float:
    """phi = integral delta_n(t) * Delta(t) dt accumulated over the path.

    ``path`` is a SuperpositionPath or a PiecewiseSensitivity; ``delta``
    samples Delta(t) on ``grid``, which must cover the path span.
    """
    pw = path.piecewise() if isinstance(path, SuperpositionPath) else path
    t = grid.times
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (grid.n,):
        raise ValueError("delta must be sampled on the grid")
    bp = pw.breakpoints
    tol = 1e-9 * max(grid.duration, pw.duration)
    if bp[0] < t[0] - tol or bp[-1] > t[-1] + tol:
        raise ValueError("noise series does not cover the path span")
    accum = cumulative_trapezoid(delta, t, initial=0.0)
    at_breaks = np.interp(bp, t, accum)
    return float(np.dot(pw.values, np.diff(at_breaks)))


def readout_probability(phi):
    """Bright-state probability sin^2(phi/2) after the closing pulse.

    Proportional to phi^2 only while |phi| stays below about
    QUADRATIC_PHASE_LIMIT.
    """
    return np.square(np.sin(0.5 * np.asarray(phi, dtype=float)))


# ---------------------------------------------------------------------------
# sequence synthesis: fit a staircase to a Hann-windowed sinusoid target


@dataclass(frozen=True)
class SequenceConstraints:
    """Experimental limits for sequence synthesis.

    ``min_duration`` maps a pulse kind to the duration of its fastest full pi
    rotation in seconds; zero marks the transition as idealized and
    instantaneous.  ``max_phonon`` caps the number states either branch may
    visit.
    """

    min_duration: Mapping[str, float]
    max_phonon: int

    def __post_init__(self):
        durs = {k: 0.0 for k in PULSE_KINDS[:3]}
        for k, v in dict(self.min_duration).items():
            if k not in durs:
                raise ValueError(f"unknown pulse kind {k!r} in constraints")
            v = float(v)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("minimum durations must be finite and non-negative")
            durs[k] = v
        if int(self.max_phonon) < 1 or self.max_phonon != int(self.max_phonon):
            raise ValueError("max_phonon must be a positive integer")
        object.__setattr__(self, "min_duration", durs)
        object.__setattr__(self, "max_phonon", int(self.max_phonon))


@dataclass(frozen=True)
class SequenceTarget:
    """Smooth sensitivity target A * hann(t) * sin(2 pi f0 t) on [-t_w, t_w].

    ``t_w`` is the Hann half-duration, hann(t) = 0.5 * (1 + cos(pi t / t_w)).
    The window must hold at least one full oscillation and the amplitude must
    be reachable within the phonon cap.
    """

    f0: float
    t_w: float
    amplitude: float
    constraints: SequenceConstraints

    def __post_init__(self):
        if not (self.f0 > 0 and self.t_w > 0 and self.amplitude > 0):
            raise ValueError("f0, t_w and amplitude must be positive")
        if 2.0 * self.f0 * self.t_w < 1.0 - 1e-9:
            raise ValueError("window must span at least one full oscillation of f0")
        if self.amplitude > self.constraints.max_phonon + 1e-12:
            raise ValueError("target amplitude exceeds the reachable |delta_n|")

    def value(self, t):
        """Target sensitivity, zero outside the window."""
        t = np.asarray(t, dtype=float)
        env = 0.5 * (1.0 + np.cos(np.pi * t / self.t_w))
        out = self.amplitude * env * np.sin(2.0 * np.pi * self.f0 * t)
        return np.where(np.abs(t) <= self.t_w, out, 0.0)


def reference_target(
    f0: float,
    *,
    cycles: float = 1.5,
    amplitude: float = 3.0,
    max_phonon: int = 3,
    sideband_pi: float = 16e-6,
    mw_pi: float = 0.0,
) -> SequenceTarget:
    """Target with apparatus-scale pulse constraints for a given center f0.

    Defaults give a window of 1.5 oscillations, rungs up to |delta_n| = 3 and
    16 us sideband pi times with idealized microwave transfers.
    """
    constraints = SequenceConstraints(
        {"RSB": sideband_pi, "BSB": sideband_pi, "MW": mw_pi}, max_phonon
    )
    return SequenceTarget(f0, cycles / f0, amplitude, constraints)


@dataclass(frozen=True, eq=False)
class SequenceOptimization:
    """Optimizer output: the sequence plus fit and filter summaries.

    ``residual`` is the relative L2 mismatch between the achieved half-value
    staircase and the target; ``center_hz`` and ``rbw_hz`` summarize the
    achieved frequency-domain filter.
    """

    sequence: PulseSequence
    residual: float
    center_hz: float
    rbw_hz: float

    @property
    def rbw_over_f0(self) -> float:
        return self.rbw_hz / self.center_hz


class _Synth:
    """Internal staircase state shared by the optimizer passes."""

    def __init__(self, target: SequenceTarget):
        self.target = target
        c = target.constraints
        self.w_pi = dict(c.min_duration)
        self.w_step = [0.0]  # width of the ladder transition m-1 <-> m, index m
        for m in range(1, c.max_phonon + 1):
            kind = "RSB" if m % 2 else "BSB"
            self.w_step.append(self.w_pi[kind])
        w_max = max(self.w_pi["RSB"], self.w_pi["BSB"])
        if w_max > 0.5 / target.f0:
            raise ValueError("minimum pulse durations exceed a half-period of f0")
        self.lobes = self._find_lobes()
        if not any(r > 0 for _, _, _, r in self.lobes):
            raise ValueError("no staircase rung fits the target amplitude")
        # antiderivative of the target for exact L2 integrals
        A, f0, tw = target.amplitude, target.f0, target.t_w
        self._w0 = 2.0 * np.pi * f0
        self._wp = self._w0 + np.pi / tw
        self._wm = self._w0 - np.pi / tw
        tt = np.linspace(-tw, tw, 40001)
        g = target.value(tt)
        self.gsq = float(np.trapezoid(g * g, tt))
        self.times: list[list[float]] = [self._seed_lobe(i) for i in range(len(self.lobes))]

    def _find_lobes(self):
        """Half-period spans of the target with sign and seeded rung count."""
        f0, tw, A = self.target.f0, self.target.t_w, self.target.amplitude
        half = 0.5 / f0
        m_lo = int(math.ceil(-tw / half - 1e-9))
        m_hi = int(math.floor(tw / half + 1e-9))
        edges = sorted({-tw, tw, *(m * half for m in range(m_lo, m_hi + 1) if -tw < m * half < tw)})
        lobes = []
        cap = self.target.constraints.max_phonon
        for lo, hi in zip(edges, edges[1:]):
            if hi - lo < 1e-12 * tw:
                continue
            tt = np.linspace(lo, hi, 513)
            g = self.target.value(tt)
            peak = float(np.max(np.abs(g)))
            sign = 1 if g[np.argmax(np.abs(g))] >= 0 else -1
            r = min(int(math.floor(peak + 0.5)), cap)
            lobes.append((lo, hi, sign, r))
        return lobes

    def _seed_lobe(self, i: int, r: int | None = None) -> list[float]:
        """Step times from the half-integer crossings of the target in lobe i."""
        lo, hi, sign, r_cur = self.lobes[i]
        r = r_cur if r is None else r
        if r == 0:
            return []
        tt = np.linspace(lo, hi, 2049)
        y = sign * self.target.value(tt)
        ip = int(np.argmax(y))
        ypk = y[ip]
        ups, downs = [], []
        for m in range(1, r + 1):
            level = m - 0.5
            w = self.w_step[min(m, len(self.w_step) - 1)]
            if level < ypk:
                j = int(np.searchsorted(y[: ip + 1], level))
                j = min(max(j, 1), ip)
                frac = (level - y[j - 1]) / max(y[j] - y[j - 1], 1e-300)
                ups.append(tt[j - 1] + frac * (tt[j] - tt[j - 1]))
                yd = y[ip:]
                j = int(np.searchsorted(-yd, -level))
                j = min(max(j, 1), yd.size - 1)
                frac = (yd[j - 1] - level) / max(yd[j - 1] - yd[j], 1e-300)
                downs.append(tt[ip + j - 1] + frac * (tt[ip + j] - tt[ip + j - 1]))
            else:
                ups.append(tt[ip] - 0.3 * max(w, (hi - lo) / 16))
                downs.append(tt[ip] + 0.3 * max(w, (hi - lo) / 16))
        return sorted(ups) + sorted(downs, reverse=True)

    def _flatten(self, times=None):
        """Global step arrays (tau, width, v_after, min gaps) from lobe times."""
        times = self.times if times is None else times
        tau, widths, v_after, lobe_of = [], [], [], []
        for i, ((lo, hi, sign, r), ts) in enumerate(zip(self.lobes, times)):
            r_eff = len(ts) // 2
            levels = list(range(1, r_eff + 1)) + list(range(r_eff - 1, -1, -1))
            before = 0
            for k, t in enumerate(ts):
                after = levels[k]
                m = max(before, after)
                tau.append(t)
                widths.append(self.w_step[m])
                v_after.append(sign * after)
                lobe_of.append(i)
                before = after
        if not tau:
            return None
        widths[0] *= 0.5
        widths[-1] *= 0.5
        tau = np.asarray(tau)
        widths = np.asarray(widths)
        v_after = np.asarray(v_after, dtype=float)
        # microwave bookkeeping: swaps where the sign flips between lobes
        w_mw = self.w_pi["MW"]
        extra = np.zeros(max(len(tau) - 1, 0))
        swaps = []
        for j in range(len(tau) - 1):
            if lobe_of[j] != lobe_of[j + 1]:
                s_prev = self.lobes[lobe_of[j]][2]
                s_next = self.lobes[lobe_of[j + 1]][2]
                if s_prev != s_next:
                    swaps.append(j)
                    extra[j] += w_mw
        if swaps:
            extra[0] += w_mw
            extra[-1] += w_mw
        min_gap = 0.5 * (widths[:-1] + widths[1:]) + extra
        return tau, widths, v_after, np.asarray(lobe_of), min_gap, swaps

    def _repair(self, tau, min_gap):
        """Shove overlapping steps apart, then recenter the uniform shift."""
        fixed = tau.copy()
        for j in range(1, fixed.size):
            need = fixed[j - 1] + min_gap[j - 1]
            if fixed[j] < need:
                fixed[j] = need
        fixed -= np.mean(fixed - tau)
        for j in range(1, fixed.size):  # recentering may reintroduce overlap
            need = fixed[j - 1] + min_gap[j - 1]
            if fixed[j] < need:
                fixed[j] = need
        return fixed

    def _antideriv(self, t):
        A, tw = self.target.amplitude, self.target.t_w
        tc = np.clip(t, -tw, tw)
        out = np.cos(self._w0 * tc) / (2.0 * self._w0) + np.cos(self._wp * tc) / (4.0 * self._wp)
        if abs(self._wm) > 1e-9 * self._w0:
            out = out + np.cos(self._wm * tc) / (4.0 * self._wm)
        return -A * out

    def distance(self, tau, widths, v_after):
        """Exact integral of (staircase - target)^2 with half-value plateaus."""
        n = tau.size
        breaks = np.empty(2 * n)
        breaks[0::2] = tau - 0.5 * widths
        breaks[1::2] = tau + 0.5 * widths
        # evaluate in the frame the assembled sequence will occupy: span centered
        breaks -= 0.5 * (breaks[0] + breaks[-1])
        v_before = np.concatenate(([0.0], v_after[:-1]))
        vals = np.empty(2 * n - 1)
        vals[0::2] = 0.5 * (v_before + v_after)
        vals[1::2] = v_after[:-1]
        dt = np.diff(breaks)
        cross = np.sum(vals * np.diff(self._antideriv(breaks)))
        return float(np.sum(vals * vals * np.clip(dt, 0.0, None)) - 2.0 * cross + self.gsq)

    def _descend(self, subset=None, max_sweeps=40, rtol=1e-12):
        """Coordinate descent over step times; deterministic Brent per axis."""
        flat = self._flatten()
        tau, widths, v_after, lobe_of, min_gap, _ = flat
        tw = self.target.t_w
        span = max(np.max(widths), 0.25 / self.target.f0)
        lo_edge, hi_edge = -tw - 3 * span, tw + 3 * span
        xatol = 2e-4 / self.target.f0
        order = (
            range(tau.size)
            if subset is None
            else [j for j in range(tau.size) if int(lobe_of[j]) in subset]
        )
        best = self.distance(tau, widths, v_after)
        for _ in range(max_sweeps):
            start = best
            for j in order:
                lo = tau[j - 1] + min_gap[j - 1] if j > 0 else lo_edge
                hi = tau[j + 1] - min_gap[j] if j < tau.size - 1 else hi_edge
                if hi - lo <= xatol:
                    continue
                keep = tau[j]

                def f(x, j=j):
                    tau[j] = x
                    return self.distance(tau, widths, v_after)

                res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
                if res.fun < best:
                    tau[j] = float(res.x)
                    best = float(res.fun)
                else:
                    tau[j] = keep
            if start - best <= rtol * max(start, self.gsq):
                break
        self._store(tau, lobe_of)
        return best

    def _store(self, tau, lobe_of):
        times = [[] for _ in self.lobes]
        for t, i in zip(tau, lobe_of):
            times[int(i)].append(float(t))
        self.times = times

    def optimize(self):
        flat = self._flatten()
        tau, widths, v_after, lobe_of, min_gap, _ = flat
        self._store(self._repair(tau, min_gap), lobe_of)
        best = self._descend()
        cap = self.target.constraints.max_phonon
        for _ in range(6):
            changed = False
            for i in range(len(self.lobes)):
                for dr in (-1, 1):
                    lo, hi, sign, r = self.lobes[i]
                    r_new = r + dr
                    if not 0 <= r_new <= cap:
                        continue
                    saved_lobes = list(self.lobes)
                    saved_times = [list(ts) for ts in self.times]
                    saved_best = best
                    self.lobes[i] = (lo, hi, sign, r_new)
                    self.times[i] = self._seed_lobe(i, r_new)
                    flat = self._flatten()
                    if flat is None:
                        self.lobes, self.times = saved_lobes, saved_times
                        continue
                    tau2, _, _, lobe2, gap2, _ = flat
                    self._store(self._repair(tau2, gap2), lobe2)
                    trial = self._descend(subset={i}, max_sweeps=4)
                    # ties go to the smaller sequence
                    if dr < 0:
                        accept = trial <= best * (1 + 1e-12) + 1e-30
                    else:
                        accept = trial < best * (1 - 1e-9)
                    if accept:
                        best = trial
                        changed = True
                    else:
                        self.lobes, self.times = saved_lobes, saved_times
                        best = saved_best
            if not changed:
                break
        return self._descend(max_sweeps=60)


def _assemble(synth: _Synth) -> PulseSequence:
    """Emit the pulse list for the optimized staircase, dark at zero noise."""
    flat = synth._flatten()
    tau, widths, v_after, lobe_of, min_gap, swaps = flat
    n = tau.size
    v_before = np.concatenate(([0.0], v_after[:-1]))
    w_mw = synth.w_pi["MW"]
    first_sign = 1 if v_after[0] >= 0 else -1

    events = []  # (t_start, Pulse) before delays are inserted
    for j in range(n):
        m0, m1 = int(round(abs(v_before[j]))), int(round(abs(v_after[j])))
        m = max(m0, m1)
        kind = "RSB" if m % 2 else "BSB"
        src, tgt = _ladder_level(m0), _ladder_level(m1)
        if j == 0 and first_sign < 0:
            src, tgt = tgt, src
        if j == 0 or j == n - 1:
            phase = 0.0  # closing phase fixed afterwards
        else:
            phase = 0.5 * math.pi if m1 > m0 else 1.5 * math.pi
        events.append((tau[j] - 0.5 * widths[j], Pulse(kind, widths[j], phase, src, tgt)))
        t_end = tau[j] + 0.5 * widths[j]
        if swaps and j == 0:
            events.append((t_end, Pulse("MW", w_mw, 0.5 * math.pi, ("up", 0), ("aux", 0))))
        if j in swaps:
            mid = 0.5 * (t_end + (tau[j + 1] - 0.5 * widths[j + 1]))
            events.append((mid - 0.5 * w_mw, Pulse("MW", w_mw, 0.5 * math.pi, ("up", 0), ("aux", 0))))
        if swaps and j == n - 2:
            t_next = tau[j + 1] - 0.5 * widths[j + 1]
            events.append((t_next - w_mw, Pulse("MW", w_mw, 1.5 * math.pi, ("aux", 0), ("up", 0))))

    pulses: list[Pulse] = []
    cursor = events[0][0]
    for t_start, p in events:
        gap = t_start - cursor
        if gap > 1e-15 * synth.target.t_w:
            pulses.append(Pulse("delay", gap))
            cursor = t_start
        pulses.append(p)
        cursor += p.duration

    rates = {}
    for kind in SIDEBAND_KINDS:
        if synth.w_pi[kind] > 0:
            rates[kind] = math.pi / synth.w_pi[kind]
    if w_mw > 0:
        rates["MW"] = math.pi / w_mw

    # closing phase: track branch amplitudes through ideal rotations at
    # Delta = 0, then rotate the recombined dark axis onto the bright level
    f1 = f2 = 1.0 + 0.0j
    b1 = b2 = None
    nd = [i for i, p in enumerate(pulses) if p.kind != "delay"]
    for i in nd[:-1]:
        p = pulses[i]
        if i == nd[0]:
            b1, b2 = p.target, p.source
            f1 *= -1j * np.exp(1j * p.phase)
            continue
        if b1 == p.source and b2 == p.target:
            f1 *= -1j * np.exp(1j * p.phase)
            f2 *= -1j * np.exp(-1j * p.phase)
            b1, b2 = b2, b1
        elif b2 == p.source and b1 == p.target:
            f2 *= -1j * np.exp(1j * p.phase)
            f1 *= -1j * np.exp(-1j * p.phase)
            b1, b2 = b2, b1
        elif b1 == p.source:
            f1 *= -1j * np.exp(1j * p.phase)
            b1 = p.target
        elif b2 == p.source:
            f2 *= -1j * np.exp(1j * p.phase)
            b2 = p.target
        else:
            raise RuntimeError("assembled pulse addresses no occupied level")
    closer = pulses[nd[-1]]
    f_src = f1 if b1 == closer.source else f2
    f_tgt = f1 if b1 == closer.target else f2
    bright_is_target = closer.target[0] == "down"
    if bright_is_target:
        chi = math.atan2(f_tgt.imag, f_tgt.real) - math.atan2(f_src.imag, f_src.real) - 0.5 * math.pi
    else:
        chi = math.atan2(f_tgt.imag, f_tgt.real) - math.atan2(f_src.imag, f_src.real) + 0.5 * math.pi
    pulses[nd[-1]] = replace(closer, phase=chi % (2.0 * math.pi))
    return PulseSequence(tuple(pulses), rates)


def optimize_sequence(target: SequenceTarget) -> SequenceOptimization:
    """Fit a pulse sequence to the target sensitivity.

    Deterministic: seeds the staircase by rounding the target to integers,
    then runs coordinate descent over the step times and rung counts per
    lobe, breaking ties toward fewer pulses.  Raises if the constraints leave
    no feasible sequence.
    """
    synth = _Synth(target)
    synth.optimize()
    seq = _assemble(synth)
    pw = sensitivity_from_sequence(seq, "half_value")
    lo = min(-target.t_w, pw.breakpoints[0])
    hi = max(target.t_w, pw.breakpoints[-1])
    tt = np.linspace(lo, hi, 32001)
    diff = piecewise_values(pw, tt) - target.value(tt)
    g = target.value(tt)
    residual = math.sqrt(float(np.trapezoid(diff * diff, tt)) / float(np.trapezoid(g * g, tt)))
    filt = piecewise_frequency_filter(pw)
    return SequenceOptimization(seq, residual, filt.f0, filt.rbw)


# ---------------------------------------------------------------------------
# full numerical propagation


def _rotation(theta: float, phase: float, detuning_z: float, common: float, dt: float):
    """2x2 step propagator exp(-i H dt) for the addressed pair.

    H = common * I + 0.5 * detuning_z * sigma_z
      + 0.5 * theta/dt * (cos(phase) sigma_x + sin(phase) sigma_y)
    in the (source, target) basis.
    """
    ax = 0.5 * theta / dt * math.cos(phase)
    ay = 0.5 * theta / dt * math.sin(phase)
    az = 0.5 * detuning_z
    w = math.sqrt(ax * ax + ay * ay + az * az)
    c = math.cos(w * dt)
    s = dt * np.sinc(w * dt / math.pi)
    g = np.exp(-1j * common * dt)
    return (
        g * (c - 1j * s * az),
        g * (-1j * s * (ax - 1j * ay)),
        g * (-1j * s * (ax + 1j * ay)),
        g * (c + 1j * s * az),
    )


def propagate_sequence_numeric(
    seq: PulseSequence,
    grid: TimeGrid,
    delta: np.ndarray,
    n_max: int,
    rabi_scale: float = 1.0,
) -> float:
    """Bright-state probability of the full three-level, (n_max+1)-phonon model.

    The sequence is laid out from ``grid.t_start``; ``delta`` samples the
    frequency noise Delta(t) on the grid.  Delays phase each |state, n> by
    n * integral(Delta); pulses rotate the addressed pair at the calibrated
    rate with the instantaneous n-dependent detuning included, while
    spectator levels keep accumulating their phases.  ``rabi_scale`` rescales
    the sideband Rabi rates to model a global mismatch.
    """
    if n_max < seq.max_phonon + 3:
        raise ValueError("n_max must exceed the highest addressed level by at least 3")
    t = grid.times
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (grid.n,):
        raise ValueError("delta must be sampled on the grid")
    total = seq.total_duration
    if total > grid.duration * (1 + 1e-9):
        raise ValueError("grid does not cover the sequence duration")
    accum = cumulative_trapezoid(delta, t, initial=0.0)

    def integral(a, b):
        return np.interp(b, t, accum) - np.interp(a, t, accum)

    nd = seq._non_delay_indices
    opener = seq.pulses[nd[0]]
    psi = np.zeros((3, n_max + 1), dtype=complex)
    psi[STATE_INDEX[opener.source[0]], opener.source[1]] = 1.0
    ns = np.arange(n_max + 1, dtype=float)
    cursor = t[0]
    for i, p in enumerate(seq.pulses):
        t0, t1 = cursor, cursor + p.duration
        cursor = t1
        if p.kind == "delay":
            if p.duration > 0:
                psi *= np.exp(-1j * ns * integral(t0, t1))[None, :]
            continue
        (ss, sn), (ts, tn) = p.source, p.target
        si, ti = (STATE_INDEX[ss], sn), (STATE_INDEX[ts], tn)
        theta = seq.pulse_angle(i, rabi_scale)
        if p.duration == 0.0:
            u00 = math.cos(0.5 * theta)
            u01 = -1j * math.sin(0.5 * theta) * np.exp(-1j * p.phase)
            a, b = psi[si], psi[ti]
            psi[si] = u00 * a + u01 * b
            psi[ti] = -np.conj(u01) * a + u00 * b
            continue
        m = max(8, int(math.ceil(2.0 * p.duration / grid.dt)))
        tt_sub = np.linspace(t0, t1, m + 1)
        d_sub = np.interp(tt_sub, t, delta)
        d_mid = 0.5 * (d_sub[:-1] + d_sub[1:])
        dt_sub = (t1 - t0) / m
        phase_all = np.exp(-1j * ns * integral(t0, t1))
        a, b = psi[si], psi[ti]
        theta_sub = theta / m
        for dm in d_mid:
            u00, u01, u10, u11 = _rotation(
                theta_sub, p.phase, (sn - tn) * dm, 0.5 * (sn + tn) * dm, dt_sub
            )
            a, b = u00 * a + u01 * b, u10 * a + u11 * b
        psi *= phase_all[None, :]
        psi[si] = a
        psi[ti] = b
    norm = float(np.sum(np.abs(psi) ** 2))
    if abs(norm - 1.0) > 1e-8:
        raise RuntimeError(f"propagation lost unitarity: norm {norm!r}")
    leak = float(np.sum(np.abs(psi[:, n_max - 1 :]) ** 2))
    if leak > 1e-4:
        raise ValueError(f"truncation leakage {leak:.2e} exceeds 1e-4; raise n_max")
    return float(np.sum(np.abs(psi[STATE_INDEX["down"], :]) ** 2))


def rabi_mismatch_sensitivity(
    seq: PulseSequence,
    band: tuple[float, float] | None = None,
    *,
    epsilon: float = 0.02,
    reps: int = 64,
    seed: int = 71828,
    phase_variance: float = 0.4,
    n_max: int | None = None,
    oversample: float = 8.0,
) -> float:
    """d(P_bright)/P_bright per fractional sideband Rabi-rate offset.

    White noise spanning ``band`` (default [0.2 f0, 2 f0] around the filter
    passband, with its level set so the ensemble phase variance is
    ``phase_variance``) drives the sequence; the derivative is a central
    finite difference of propagation ensembles sharing the same noise draws.
    """
    pw = sensitivity_from_sequence(seq, "half_value")
    filt = piecewise_frequency_filter(pw)
    f0 = filt.f0
    if band is None:
        band = (0.2 * f0, 2.0 * f0)
    f_lo, f_hi = float(band[0]), float(band[1])
    if not 0 <= f_lo < f_hi:
        raise ValueError("band must satisfy 0 <= f_lo < f_hi")
    pos = (filt.f_grid >= f_lo) & (filt.f_grid <= f_hi)
    band_integral = 2.0 * float(np.trapezoid(filt.magnitude_sq[pos], filt.f_grid[pos]))
    if band_integral <= 0:
        raise ValueError("filter has no support inside the band")
    model = WhiteBandNoise(phase_variance / band_integral, f_lo, f_hi)
    total = seq.total_duration
    n = max(65, int(math.ceil(total * 2.0 * f_hi * oversample)) + 1)
    grid = TimeGrid(-0.5 * total, 0.5 * total, n)
    if n_max is None:
        n_max = seq.max_phonon + 3
    p_minus = p_mid = p_plus = 0.0
    for r in range(reps):
        delta = sample_realization(model, grid, rng_stream(seed, r))
        p_minus += propagate_sequence_numeric(seq, grid, delta, n_max, 1.0 - epsilon)
        p_mid += propagate_sequence_numeric(seq, grid, delta, n_max, 1.0)
        p_plus += propagate_sequence_numeric(seq, grid, delta, n_max, 1.0 + epsilon)
    return float((p_plus - p_minus) / (2.0 * epsilon * p_mid))
