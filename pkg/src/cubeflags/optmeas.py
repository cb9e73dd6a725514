"""Extremal measures and thresholds for a flag, and the certificate builder.

Once the fixed-point parameters rho of a flag are solved, a distinguished
measure mu* on the cube is obtained by telescoping the ratio

    mu*(C') / mu*(C) = f^{C'}(rho)^{rho_{i-1}} / f^C(rho)

down the cell tree from mu*(Gamma_r) = 1, splitting the bottom cell {0, 1}
by the convention mu*(1) = 0 (harmless: 0 and 1 share a coset of every
subflag space, so no entropy ever sees the split).  Its restrictions mu*_j
to Gamma_j and the threshold vector c* that makes every basic subflag's
e-value tie with the full flag assemble into a system whose entropy
condition can then be checked over the enumerated subflag universe.

certify_system runs the whole pipeline and reports: basic-subflag tightness,
positivity of all other enumerated slacks, the two entropy-gap inequality
families, an exhaustive search for invariant intermediate subspaces (small
binary flags), and a re-check under perturbed thresholds, which is the
regime where every proper slack must become strictly positive.  Certificates
never claim more than their enumeration universe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import log
from typing import Optional, Sequence

from .entropy import (
    TIGHT_BAND,
    EReport,
    Measure,
    System,
    check_entropy_condition,
    coset_entropy,
    perturb_thresholds,
)
from .errors import DegenerateParametersError
from .flags import (
    Flag,
    Genotype,
    automorphism_generators,
    cell_tree,
    contains_subspace,
    level_universe,
    permute_subspace,
)
from .rho import (
    F_genotype,
    RhoSolution,
    solve_flag_rhos,
    solve_rho_chain,
)

DEGENERATE_PIVOT_TOL = 1e-12
NONBASIC_SLACK_MIN = 1e-6
PERTURB_EPSILONS = (1e-3, 1e-4)


@dataclass
class OptimalData:
    """The solved measure/threshold data attached to a flag."""

    flag: Flag
    rho: RhoSolution
    mu_star: Measure
    restrictions: tuple[Measure, ...]  # mu*_1 .. mu*_r
    gamma_masses: tuple[float, ...]  # mu*(Gamma_j), j = 0..r
    entropy: Optional[tuple[tuple[float, ...], ...]] = None  # H[j][m], j=1..r
    c_star: Optional[tuple[float, ...]] = None


def optimal_measure(flag: Flag, sol: Optional[RhoSolution] = None) -> OptimalData:
    """Build mu* and its restrictions by telescoping down the cell tree."""
    if sol is None:
        sol = solve_rho_chain(flag.order - 1)[0] if flag.kind == "binary" else solve_flag_rhos(flag)
    if len(sol.rhos) < flag.order - 1:
        raise ValueError("rho solution does not cover the flag order")
    tree = cell_tree(flag)
    r = flag.order
    rhos = sol.rhos

    # one bottom-up sweep evaluates f on every cell
    f_val: dict[tuple[int, int], float] = {}
    for idx in range(len(tree.levels[0])):
        f_val[(0, idx)] = 1.0
    for level in range(1, r + 1):
        rho = 0.0 if level == 1 else rhos[level - 2]
        for idx in range(len(tree.levels[level])):
            f_val[(level, idx)] = math.fsum(
                f_val[(level - 1, j)] ** rho for j in tree.child_ids[level][idx]
            )

    top_idx = next(
        i for i, c in enumerate(tree.levels[r]) if c.members[0] == (0,) * flag.ambient_dim
    )
    mass: dict[tuple[int, int], float] = {(r, top_idx): 1.0}
    for level in range(r, 0, -1):
        rho = 0.0 if level == 1 else rhos[level - 2]
        for idx in range(len(tree.levels[level])):
            m = mass.get((level, idx), 0.0)
            if m == 0.0:
                continue
            fc = f_val[(level, idx)]
            for j in tree.child_ids[level][idx]:
                mass[(level - 1, j)] = mass.get((level - 1, j), 0.0) + m * (
                    f_val[(level - 1, j)] ** rho
                ) / fc

    k = flag.ambient_dim
    one = (1,) * k
    weights: dict[tuple, float] = {}
    for idx, cell in enumerate(tree.levels[0]):
        m = mass.get((0, idx), 0.0)
        if m == 0.0:
            continue
        if cell.size == 2:  # the cell {0, 1}: all of its mass goes to 0
            weights[(0,) * k] = m
            weights[one] = 0.0
        else:
            weights[cell.members[0]] = m
    total = math.fsum(weights.values())
    weights = {p: w / total for p, w in weights.items()}
    mu_star = Measure(k, weights)

    gammas = [tree.gamma(j) for j in range(r + 1)]
    gamma_masses = []
    restrictions = []
    for j in range(r + 1):
        pts = set(gammas[j].members)
        gm = math.fsum(w for p, w in weights.items() if p in pts)
        gamma_masses.append(gm)
        if j >= 1:
            sub = {p: w / gm for p, w in weights.items() if p in pts}
            restrictions.append(Measure(k, sub))
    return OptimalData(flag, sol, mu_star, tuple(restrictions), tuple(gamma_masses))


def entropy_matrix(data: OptimalData) -> tuple[tuple[float, ...], ...]:
    """H[j][m] = H_{mu*_j}(V_m) for 1 <= j <= r, 0 <= m <= r (direct route)."""
    if data.entropy is None:
        flag = data.flag
        r = flag.order
        H = tuple(
            tuple(
                0.0 if m >= j else coset_entropy(data.restrictions[j - 1], flag.spaces[m])
                for m in range(r + 1)
            )
            for j in range(1, r + 1)
        )
        data.entropy = H
    return data.entropy


def entropy_matrix_genotype(r: int, sol: RhoSolution) -> tuple[tuple[float, ...], ...]:
    """The same matrix for the order-r binary flag, by genotype-path DP.

    Cells with a common genotype path carry equal mass, so it suffices to
    push (sum of count*mass, sum of count*mass*log mass) through the
    genotype transition counts 2^{|g|-|g*|-|g'|}; no cube materialization.
    """
    rhos = sol.rhos
    out = []
    for j in range(1, r + 1):
        row = []
        for m in range(r + 1):
            if m >= j:
                row.append(0.0)
                continue
            s0 = {Genotype.full(j).mask: 1.0}
            s1 = {Genotype.full(j).mask: 0.0}
            for level in range(j, m, -1):
                rho = 0.0 if level == 1 else rhos[level - 2]
                shift = 1 << (level - 1)
                lowmask = (1 << shift) - 1
                n0: dict[int, float] = {}
                n1: dict[int, float] = {}
                for gmask, v0 in s0.items():
                    v1 = s1[gmask]
                    fg = F_genotype(Genotype(level, gmask), rhos)
                    gstar = gmask & lowmask & (gmask >> shift)
                    base = gmask.bit_count() - gstar.bit_count()
                    # iterate submasks g' of g*
                    sub = gstar
                    while True:
                        child = Genotype(level - 1, sub)
                        ratio = F_genotype(child, rhos) ** rho / fg
                        count = 1 << (base - sub.bit_count())
                        w = count * ratio
                        n0[sub] = n0.get(sub, 0.0) + v0 * w
                        n1[sub] = n1.get(sub, 0.0) + (v1 + v0 * log(ratio)) * w
                        if sub == 0:
                            break
                        sub = (sub - 1) & gstar
                s0, s1 = n0, n1
            row.append(-math.fsum(s1.values()))
        out.append(tuple(row))
    return tuple(out)


def optimal_parameters(data: OptimalData) -> tuple[float, ...]:
    """Thresholds tying every basic subflag's e-value to the full flag's.

    Solved by downward back-substitution from a provisional c_{r+1} = 1,
    then rescaled so c_1 = 1.  Raises DegenerateParametersError on a
    near-zero pivot H[m+1][m] - dim(V_{m+1}/V_m) or a non-descending or
    non-positive solution.
    """
    flag = data.flag
    r = flag.order
    d = [W.dim for W in flag.spaces]
    H = entropy_matrix(data)
    c = [0.0] * (r + 2)  # 1-indexed: c[1..r+1]
    c[r + 1] = 1.0
    for m in range(r - 1, -1, -1):
        pivot = H[m][m] - (d[m + 1] - d[m])  # H[m+1][m] in 1-indexed j
        if abs(pivot) < DEGENERATE_PIVOT_TOL:
            raise DegenerateParametersError(
                f"degenerate pivot at m={m}: H_(mu_{m+1})(V_{m}) = {H[m][m]!r} "
                f"matches dim(V_{m+1}/V_{m}) = {d[m + 1] - d[m]}"
            )
        rhs = math.fsum(
            (c[j] - c[j + 1]) * ((d[j] - d[m]) - H[j - 1][m]) for j in range(m + 2, r + 1)
        ) + c[r + 1] * (d[r] - d[m])
        gap = rhs / pivot
        if gap <= 0.0:
            raise DegenerateParametersError(
                f"non-descending thresholds: gap c_{m + 1} - c_{m + 2} = {gap!r} <= 0"
            )
        c[m + 1] = c[m + 2] + gap
    scale = c[1]
    out = tuple(x / scale for x in c[1:])
    if not all(a > b > 0.0 for a, b in zip(out, out[1:])):
        raise DegenerateParametersError(f"thresholds not strictly descending: {out}")
    data.c_star = out
    return out


def optimal_system(flag: Flag, sol: Optional[RhoSolution] = None) -> tuple[System, OptimalData]:
    data = optimal_measure(flag, sol)
    c = optimal_parameters(data)
    return System(flag, c, data.restrictions), data


# ---------------------------------------------------------------------------
# Certification


@dataclass(frozen=True)
class GapCheck:
    label: str
    value: float
    bound: float
    ok: bool


@dataclass
class Certificate:
    """Full verification record for a flag's extremal system."""

    flag_kind: str
    order: int
    ambient_dim: int
    rho: tuple[float, ...]
    c_star: tuple[float, ...]
    ereport: Optional[EReport]
    basic_slacks: dict
    basic_tight_ok: bool
    nonbasic_min_slack: Optional[float]
    nonbasic_ok: bool
    gap_checks: list
    gap_ok: bool
    invariant_intermediate: Optional[dict]
    perturbed: dict  # eps -> {"min_slack":..., "ok":...}
    perturbed_ok: bool
    universe: str
    failures: list
    ok: bool

    def to_json_dict(self) -> dict:
        return {
            "schema": "cubeflags.certificate.v1",
            "flag": {
                "kind": self.flag_kind,
                "order": self.order,
                "ambient_dim": self.ambient_dim,
            },
            "rho": list(self.rho),
            "c_star": list(self.c_star),
            "universe": self.universe,
            "claim": (
                "entropy condition certified over the stated enumeration "
                "universe only; tight (non-strict) at basic subflags, strict "
                "after threshold perturbation"
            ),
            "basic_slacks": {str(k): v for k, v in self.basic_slacks.items()},
            "basic_tight_ok": self.basic_tight_ok,
            "nonbasic_min_slack": self.nonbasic_min_slack,
            "nonbasic_ok": self.nonbasic_ok,
            "gap_checks": [
                {"label": g.label, "value": g.value, "bound": g.bound, "ok": g.ok}
                for g in self.gap_checks
            ],
            "gap_ok": self.gap_ok,
            "invariant_intermediate": self.invariant_intermediate,
            "perturbed": {str(k): v for k, v in self.perturbed.items()},
            "perturbed_ok": self.perturbed_ok,
            "failures": self.failures,
            "ok": self.ok,
            "entropy_report": self.ereport.to_json_dict() if self.ereport else None,
        }


def certify_system(
    flag: Flag,
    sol: Optional[RhoSolution] = None,
    eps_list: Sequence[float] = PERTURB_EPSILONS,
    workers: int = 1,
    cap: int = 10**6,
) -> tuple[Optional[System], Certificate]:
    """Build the extremal system for a flag and verify everything checkable.

    Failures are collected in the certificate rather than raised, so a
    failing flag still yields a complete diagnostic record.
    """
    failures: list[str] = []
    if sol is None:
        if flag.kind == "binary":
            sol = solve_rho_chain(max(flag.order - 1, 1))[0]
        else:
            sol = solve_flag_rhos(flag)

    try:
        data = optimal_measure(flag, sol)
        c_star = optimal_parameters(data)
        system = System(flag, c_star, data.restrictions)
    except DegenerateParametersError as exc:
        failures.append(f"optimal parameters do not exist: {exc}")
        cert = Certificate(
            flag_kind=flag.kind,
            order=flag.order,
            ambient_dim=flag.ambient_dim,
            rho=sol.rhos,
            c_star=(),
            ereport=None,
            basic_slacks={},
            basic_tight_ok=False,
            nonbasic_min_slack=None,
            nonbasic_ok=False,
            gap_checks=[],
            gap_ok=False,
            invariant_intermediate=None,
            perturbed={},
            perturbed_ok=False,
            universe="",
            failures=failures,
            ok=False,
        )
        return None, cert

    r = flag.order
    d = [W.dim for W in flag.spaces]
    H = entropy_matrix(data)

    report = check_entropy_condition(system, workers=workers, cap=cap)

    basic_slacks = {
        e.basic_m: e.slack for e in report.entries if e.basic_m is not None
    }
    basic_tight_ok = len(basic_slacks) == r and all(
        abs(s) <= TIGHT_BAND for s in basic_slacks.values()
    )
    if not basic_tight_ok:
        failures.append(f"basic subflag slacks not tight within {TIGHT_BAND}: {basic_slacks}")

    nonbasic = [
        e for e in report.entries if not e.is_full and e.basic_m is None
    ]
    nonbasic_min = min((e.slack for e in nonbasic), default=None)
    nonbasic_ok = nonbasic_min is None or nonbasic_min > NONBASIC_SLACK_MIN
    if not nonbasic_ok:
        failures.append(
            f"non-basic enumerated slack {nonbasic_min} <= {NONBASIC_SLACK_MIN}"
        )

    gap_checks: list[GapCheck] = []
    for m in range(r):
        val = H[m][m]
        bound = float(d[m + 1] - d[m])
        gap_checks.append(
            GapCheck(f"H(mu_{m + 1}, V_{m}) > dim(V_{m + 1}/V_{m})", val, bound, val > bound)
        )
    for i in range(2, r + 1):
        for m in range(1, i):
            val = H[i - 1][m - 1] - H[i - 1][m]
            bound = float(d[m] - d[m - 1])
            gap_checks.append(
                GapCheck(
                    f"H(mu_{i}, V_{m - 1}) - H(mu_{i}, V_{m}) < dim(V_{m}/V_{m - 1})",
                    val,
                    bound,
                    val < bound,
                )
            )
    gap_ok = all(g.ok for g in gap_checks)
    if not gap_ok:
        failures.append("entropy gap inequality failed: " + "; ".join(
            g.label for g in gap_checks if not g.ok
        ))

    invariant_info = None
    if flag.kind == "binary" and r <= 2:
        gens = automorphism_generators(flag)
        offenders = []
        scanned = 0
        for i in range(1, r + 1):
            for W in level_universe(flag.spaces[i], cap, i):
                if W.dim <= flag.spaces[i - 1].dim or W.dim >= flag.spaces[i].dim:
                    continue
                if not contains_subspace(W, flag.spaces[i - 1]):
                    continue
                scanned += 1
                if all(permute_subspace(g, W) == W for g in gens):
                    offenders.append((i, W.basis))
        invariant_info = {
            "scanned": scanned,
            "invariant_intermediate_found": len(offenders),
            "ok": not offenders,
        }
        if offenders:
            failures.append("invariant intermediate subspace found (gap hypothesis broken)")

    perturbed = {}

    def _run_perturbed(eps: float) -> Optional[bool]:
        c_tilde = perturb_thresholds(c_star, eps)
        if c_tilde[-1] <= 0.0:
            # the shift exceeds c_{r+1}: this epsilon is too coarse here
            perturbed[eps] = {"min_slack": None, "ok": None, "infeasible": True}
            return None
        rep = check_entropy_condition(
            System(flag, c_tilde, data.restrictions), workers=workers, cap=cap
        )
        ok = rep.min_slack > 0.0
        perturbed[eps] = {"min_slack": rep.min_slack, "ok": ok}
        return ok

    outcomes = [_run_perturbed(eps) for eps in eps_list]
    if all(o is None for o in outcomes):
        # every requested epsilon was infeasible; strictness still needs a
        # witness, so shrink until the perturbation fits under c_{r+1}
        eps = c_star[-1] / 10.0
        while _run_perturbed(eps) is None:
            eps /= 10.0
        outcomes.append(perturbed[eps]["ok"])
    perturbed_ok = all(o for o in outcomes if o is not None)
    if not perturbed_ok:
        failures.append("perturbed thresholds did not yield strictly positive slacks")

    cert = Certificate(
        flag_kind=flag.kind,
        order=r,
        ambient_dim=flag.ambient_dim,
        rho=sol.rhos,
        c_star=c_star,
        ereport=report,
        basic_slacks=basic_slacks,
        basic_tight_ok=basic_tight_ok,
        nonbasic_min_slack=nonbasic_min,
        nonbasic_ok=nonbasic_ok,
        gap_checks=gap_checks,
        gap_ok=gap_ok,
        invariant_intermediate=invariant_info,
        perturbed=perturbed,
        perturbed_ok=perturbed_ok,
        universe=report.universe,
        failures=failures,
        ok=not failures,
    )
    return system, cert


def measures_json_dict(data: OptimalData) -> dict:
    """Machine dump of mu*, c*, and the entropy matrix."""
    from .flags import point_to_string

    flag = data.flag
    H = entropy_matrix(data)
    c = data.c_star if data.c_star is not None else optimal_parameters(data)
    return {
        "schema": "cubeflags.measures.v1",
        "flag": {"kind": flag.kind, "order": flag.order, "ambient_dim": flag.ambient_dim},
        "rho": list(data.rho.rhos),
        "c_star": list(c),
        "mu_star": {
            point_to_string(p): float(w) for p, w in sorted(data.mu_star.weights.items())
        },
        "gamma_masses": [float(x) for x in data.gamma_masses],
        "entropy_matrix": [[float(x) for x in row] for row in H],
    }
