"""Measures on the cube, coset entropies, e-values and the entropy checker.

The central quantity is the coset entropy H_nu(W): the Shannon entropy (in
nats) of the distribution that a finitely supported measure nu induces on the
cosets of a subspace W.  A system couples a flag with descending thresholds
c_1 >= ... >= c_{r+1} and measures mu_1..mu_r supported on V_i /\\ {0,1}^k;
its e-value on a subflag weighs coset entropies against dimension increments.
The checker evaluates the e-value over an enumerated universe of subflags and
certifies the sign of every slack e(V') - e(V).

Coset grouping is exact (rational arithmetic); only the entropy itself is
floating point.  0*log(0) is taken to be 0.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from . import qlinalg
from .errors import DimensionMismatchError
from .flags import (
    SUBFLAG_UNIVERSE_TAG,
    Flag,
    Subflag,
    basic_subflag,
    enumerate_subflags,
)
from .qlinalg import Subspace, coset_key, contains

MASS_TOL = 1e-12
#: |slack| below this band is reported as "tight" rather than pass/fail.
TIGHT_BAND = 1e-9


@dataclass(frozen=True)
class Measure:
    """A finitely supported probability measure on {0,1}^k.

    Weights may be floats or Fractions; they must be nonnegative and sum to 1
    (exactly for all-Fraction weights, within 1e-12 otherwise).
    """

    ambient_dim: int
    weights: dict

    def __post_init__(self):
        for p, w in self.weights.items():
            if len(p) != self.ambient_dim:
                raise DimensionMismatchError("support point of wrong dimension")
            if any(x not in (0, 1) for x in p):
                raise ValueError(f"support point not in the cube: {p}")
            if w < 0:
                raise ValueError("negative weight")
        if all(isinstance(w, (int, Fraction)) for w in self.weights.values()):
            total = sum(self.weights.values())
            if total != 1:
                raise ValueError(f"weights sum to {total}, expected exactly 1")
        else:
            total = math.fsum(self.weights.values())
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"weights sum to {total!r}, expected 1 within {MASS_TOL}")

    def support(self) -> list[tuple]:
        return sorted(p for p, w in self.weights.items() if w > 0)

    def mass(self, point) -> float:
        return self.weights.get(tuple(point), 0)

    @staticmethod
    def uniform(points: Sequence[tuple]) -> "Measure":
        pts = [tuple(p) for p in points]
        w = Fraction(1, len(pts))
        return Measure(len(pts[0]), {p: w for p in pts})


def coset_entropy(nu: Measure, W: Subspace) -> float:
    """H_nu(W): entropy of the coset masses of W under nu, natural log."""
    if W.ambient_dim != nu.ambient_dim:
        raise DimensionMismatchError("measure and subspace dimensions differ")
    masses: dict = {}
    for p, w in nu.weights.items():
        if w > 0:
            key = coset_key(W, p)
            masses[key] = masses.get(key, 0) + w
    return -math.fsum(float(m) * math.log(m) for m in masses.values() if m > 0)


def submodularity_defect(nu: Measure, W1: Subspace, W2: Subspace) -> float:
    """H(W1) + H(W2) - H(W1 /\\ W2) - H(W1 + W2); nonnegative in exact arithmetic."""
    return (
        coset_entropy(nu, W1)
        + coset_entropy(nu, W2)
        - coset_entropy(nu, qlinalg.subspace_intersect(W1, W2))
        - coset_entropy(nu, qlinalg.subspace_sum(W1, W2))
    )


@dataclass(frozen=True)
class System:
    """A flag with thresholds 1 >= c_1 >= ... >= c_{r+1} >= 0 and measures."""

    flag: Flag
    thresholds: tuple[float, ...]
    measures: tuple[Measure, ...]

    def __post_init__(self):
        r = self.flag.order
        if len(self.thresholds) != r + 1:
            raise ValueError(f"need {r + 1} thresholds, got {len(self.thresholds)}")
        if len(self.measures) != r:
            raise ValueError(f"need {r} measures, got {len(self.measures)}")
        c = self.thresholds
        if c[0] > 1 + MASS_TOL or c[-1] < -MASS_TOL:
            raise ValueError("thresholds must lie in [0, 1]")
        if any(a < b - MASS_TOL for a, b in zip(c, c[1:])):
            raise ValueError("thresholds must be descending")
        for i, mu in enumerate(self.measures, start=1):
            V = self.flag.spaces[i]
            for p in mu.support():
                if not contains(V, p):
                    raise ValueError(f"supp(mu_{i}) not contained in V_{i}")


def e_value(system: System, sf: Subflag) -> float:
    """sum_j (c_j - c_{j+1}) H_{mu_j}(V'_j) + sum_j c_j dim(V'_j / V'_{j-1})."""
    if sf.parent != system.flag:
        raise ValueError("subflag belongs to a different flag")
    c = system.thresholds
    r = system.flag.order
    ent = math.fsum(
        (c[j - 1] - c[j]) * coset_entropy(system.measures[j - 1], sf.spaces[j])
        for j in range(1, r + 1)
    )
    dims = math.fsum(
        c[j - 1] * (sf.spaces[j].dim - sf.spaces[j - 1].dim) for j in range(1, r + 1)
    )
    return ent + dims


@dataclass(frozen=True)
class EEntry:
    id: int
    label: str
    dims: tuple[int, ...]
    e_value: float
    slack: float
    is_full: bool
    basic_m: Optional[int]  # m if this is the basic(m) subflag


@dataclass(frozen=True)
class EReport:
    """Outcome of evaluating the e-value over an enumerated subflag universe."""

    e_full: float
    entries: tuple[EEntry, ...]
    min_slack: float  # over proper subflags
    argmin: int
    universe: str
    tight_ids: tuple[int, ...]  # |slack| <= TIGHT_BAND, proper subflags
    holds: bool  # every proper slack >= -TIGHT_BAND
    holds_strict_off_tight: bool  # every proper slack either tight or > TIGHT_BAND

    def to_json_dict(self) -> dict:
        return {
            "schema": "cubeflags.ereport.v1",
            "e_full": self.e_full,
            "min_slack": self.min_slack,
            "argmin": self.argmin,
            "universe": self.universe,
            "holds": self.holds,
            "tight_ids": list(self.tight_ids),
            "entries": [
                {
                    "id": e.id,
                    "label": e.label,
                    "dims": list(e.dims),
                    "e_value": e.e_value,
                    "slack": e.slack,
                    "basic_m": e.basic_m,
                }
                for e in self.entries
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "e_value", "slack"])
        for e in self.entries:
            writer.writerow([e.id, f"{e.e_value:.16g}", f"{e.slack:.16g}"])
        return buf.getvalue()


def _label_subflag(sf: Subflag) -> tuple[str, Optional[int]]:
    parent = sf.parent
    r = parent.order
    for m in range(r + 1):
        if sf.spaces == tuple(parent.spaces[min(m, i)] for i in range(r + 1)):
            return (f"basic({m})" if m < r else "full", m if m < r else None)
    return ("dims=" + ",".join(str(W.dim) for W in sf.spaces), None)


def check_entropy_condition(
    system: System, workers: int = 1, cap: int = 10**6
) -> EReport:
    """Evaluate e over the enumerated subflags plus all basic subflags.

    Entries are sorted by their deterministic enumeration id, so the report
    does not depend on worker scheduling; argmin ties break to the lowest id.
    """
    flag = system.flag
    subflags = list(enumerate_subflags(flag, cap))
    known = {sf.spaces for sf in subflags}
    for m in range(flag.order + 1):
        b = basic_subflag(flag, m)
        if b.spaces not in known:
            subflags.append(b)
            known.add(b.spaces)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda sf: e_value(system, sf), subflags))
    else:
        values = [e_value(system, sf) for sf in subflags]

    e_full = math.fsum(
        system.thresholds[j - 1] * (flag.spaces[j].dim - flag.spaces[j - 1].dim)
        for j in range(1, flag.order + 1)
    )
    entries = []
    for idx, (sf, val) in enumerate(zip(subflags, values)):
        label, basic_m = _label_subflag(sf)
        entries.append(
            EEntry(idx, label, sf.dims(), val, val - e_full, sf.is_full(), basic_m)
        )
    proper = [e for e in entries if not e.is_full]
    if proper:
        best = min(proper, key=lambda e: (e.slack, e.id))
        min_slack, argmin = best.slack, best.id
    else:
        min_slack, argmin = 0.0, entries[0].id if entries else -1
    tight = tuple(e.id for e in proper if abs(e.slack) <= TIGHT_BAND)
    return EReport(
        e_full=e_full,
        entries=tuple(entries),
        min_slack=min_slack,
        argmin=argmin,
        universe=SUBFLAG_UNIVERSE_TAG,
        tight_ids=tight,
        holds=all(e.slack >= -TIGHT_BAND for e in proper),
        holds_strict_off_tight=all(
            e.slack > TIGHT_BAND or abs(e.slack) <= TIGHT_BAND for e in proper
        ),
    )


def perturb_thresholds(c: Sequence[float], eps: float) -> tuple[float, ...]:
    """Shift c_j by -(1/2) sum_{l<j} eps^l; keeps c_1 and strictifies descent."""
    out = [c[0]]
    for j in range(2, len(c) + 1):
        shift = 0.5 * math.fsum(eps**l for l in range(1, j))
        out.append(c[j - 1] - shift)
    return tuple(out)
