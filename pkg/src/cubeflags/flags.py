"""Flags of rational subspaces on {0,1}^k and their cell/genotype structure.

A flag is a nested chain <1> = V_0 <= V_1 <= ... <= V_r of subspaces of Q^k,
each spanned by the all-ones vector together with cube vectors.  Intersecting
the cosets of V_i with the cube partitions {0,1}^k into "cells"; cells at
consecutive levels form a tree.  For the binary family (k = 2^r, coordinates
indexed by subsets of [r]) a cell at level i is classified up to tree
isomorphism by its genotype: the set of positions A subset [i] at which its
i-blocks are constant, encoded as a 2^i-bit mask via A -> sum(2^(a-1)).

Cube points are tuples of 0/1 ints; coordinates are ordered by the reverse
binary order f(S) = sum(2^(r-s) for s in S), so printed strings reproduce the
block structure directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Iterator, Optional, Sequence

from . import qlinalg
from .errors import (
    CapacityError,
    DimensionMismatchError,
    EnumerationLimitError,
    InvalidChildError,
)
from .qlinalg import Subspace, contains, contains_subspace, cube_points, ones, span

MAX_FLAG_ORDER = 4
MAX_CELL_AMBIENT_DIM = 16
MAX_GENOTYPE_LEVEL = 24
SUBFLAG_SPACE_CAP = 10**6

CubePoint = tuple


def subset_index(subset: frozenset, r: int) -> int:
    """Coordinate position of S inside Q^{P[r]}: the reverse binary order."""
    return sum(1 << (r - s) for s in subset)


def all_subsets(r: int) -> list[frozenset]:
    """Subsets of [r] = {1..r}, listed in reverse binary coordinate order."""
    out: list[frozenset] = [frozenset()] * (1 << r)
    for bits in range(1 << r):
        s = frozenset(i for i in range(1, r + 1) if bits & (1 << (r - i)))
        out[bits] = s
    return out


def point_to_string(p: Sequence[int]) -> str:
    return "".join(str(int(x)) for x in p)


def string_to_point(s: str) -> tuple[int, ...]:
    if any(ch not in "01" for ch in s):
        raise ValueError(f"not a 0/1 string: {s!r}")
    return tuple(int(ch) for ch in s)


# ---------------------------------------------------------------------------
# Genotypes


@dataclass(frozen=True)
class Genotype:
    """Positions of constant blocks of a binary-flag cell, as a bitmask.

    A level-i genotype is a subset g of the power set P[i]; the subset
    A <= [i] occupies mask bit sum(2^(a-1) for a in A).  With this indexing
    the consolidation g* is a single AND of the mask's low and high halves.
    """

    level: int
    mask: int

    def __post_init__(self):
        if self.level > MAX_GENOTYPE_LEVEL:
            raise CapacityError(f"genotype level {self.level} > {MAX_GENOTYPE_LEVEL}")
        if not 0 <= self.mask < (1 << (1 << self.level)):
            raise ValueError("mask out of range for level")

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def subsets(self) -> list[frozenset]:
        """The members A <= [i] of this genotype."""
        out = []
        for n in range(1 << self.level):
            if self.mask >> n & 1:
                out.append(frozenset(a for a in range(1, self.level + 1) if n >> (a - 1) & 1))
        return out

    @staticmethod
    def from_subsets(level: int, subsets: Sequence[frozenset]) -> "Genotype":
        mask = 0
        for a_set in subsets:
            mask |= 1 << sum(1 << (a - 1) for a in a_set)
        return Genotype(level, mask)

    @staticmethod
    def full(level: int) -> "Genotype":
        return Genotype(level, (1 << (1 << level)) - 1)


def consolidate(g: Genotype) -> Genotype:
    """g* = {A <= [i-1] : A in g and A + {i} in g}; low-half AND high-half."""
    if g.level == 0:
        return Genotype(0, 0)
    half = 1 << (g.level - 1)
    low = g.mask & ((1 << half) - 1)
    return Genotype(g.level - 1, low & (g.mask >> half))


def defects(g: Genotype) -> tuple[int, ...]:
    """The exponent vector (D^1(g), ..., D^{i+1}(g)) of the product formula.

    D^m(g) = |g^(m-1)| - 2 |g^(m)| where g^(m) is the m-fold consolidation;
    every entry is >= 0, and D^{i+1}(g) = 1 iff g = P[i].
    """
    out = []
    cur = g
    for _ in range(g.level + 1):
        nxt = consolidate(cur)
        out.append(cur.size - 2 * nxt.size)
        cur = nxt
    return tuple(out)


def children_with_genotype_count(g: Genotype, g_child: Genotype) -> int:
    """Number of children with genotype g_child of a cell with genotype g."""
    gstar = consolidate(g)
    if g_child.level != g.level - 1 or (g_child.mask & ~gstar.mask) != 0:
        raise InvalidChildError(f"{g_child} is not dominated by the consolidation of {g}")
    return 1 << (g.size - gstar.size - g_child.size)


def children_count(g: Genotype) -> int:
    """Total number of children: 2^(|g|-2|g*|) 3^(|g*|)."""
    gstar = consolidate(g)
    return (1 << (g.size - 2 * gstar.size)) * 3**gstar.size


def cells_with_genotype_count(r: int, g: Genotype) -> int:
    """Number of level-i cells of the order-r binary flag with genotype g."""
    i = g.level
    return (2 ** (2 ** (r - i)) - 2) ** ((1 << i) - g.size)


# ---------------------------------------------------------------------------
# Flags


@dataclass(frozen=True)
class Flag:
    """A nested chain <1> = V_0 <= ... <= V_r of subspaces of Q^k."""

    ambient_dim: int
    spaces: tuple[Subspace, ...]
    kind: str  # "binary" | "maier_tenenbaum" | "custom"
    nondegenerate: bool

    @property
    def order(self) -> int:
        return len(self.spaces) - 1

    def dims(self) -> tuple[int, ...]:
        return tuple(W.dim for W in self.spaces)

    def __repr__(self):
        return f"Flag(kind={self.kind}, k={self.ambient_dim}, dims={self.dims()})"


def _is_nondegenerate(top: Subspace) -> bool:
    # degenerate iff V_r lies inside some hyperplane {x_i = x_j}
    k = top.ambient_dim
    for i in range(k):
        for j in range(i + 1, k):
            if all(row[i] == row[j] for row in top.basis):
                return False
    return True


def make_flag(spaces: Sequence[Subspace], kind: str, check: bool = True) -> Flag:
    """Assemble and validate a flag from its chain of spaces.

    Checks V_0 = <1>, nesting, and (for check=True) that every V_i is spanned
    by cube vectors together with the all-ones vector.
    """
    spaces = tuple(spaces)
    k = spaces[0].ambient_dim
    if spaces[0] != span([ones(k)]):
        raise ValueError("V_0 must be the line spanned by the all-ones vector")
    for lo, hi in zip(spaces, spaces[1:]):
        if lo.ambient_dim != k or hi.ambient_dim != k:
            raise DimensionMismatchError("all spaces must share one ambient dimension")
        if not contains_subspace(hi, lo):
            raise ValueError("flag spaces are not nested")
    if check:
        for W in spaces[1:]:
            gens = [ones(k)] + cube_points(W)
            if span(gens, k) != W:
                raise ValueError("flag space is not spanned by cube vectors and the all-ones vector")
    return Flag(k, spaces, kind, _is_nondegenerate(spaces[-1]))


def binary_flag(r: int) -> Flag:
    """The order-r flag on Q^{P[r]} with V_i = {x : x_S = x_{S/\\[i]}}.

    dim(V_i) = 2^i and V_r is the whole space, so the flag is nondegenerate.
    """
    if not 1 <= r <= MAX_FLAG_ORDER:
        raise CapacityError(f"binary flag order must be in 1..{MAX_FLAG_ORDER}")
    k = 1 << r
    subsets = all_subsets(r)
    spaces = [span([ones(k)])]
    for i in range(1, r + 1):
        gens = []
        for a_bits in range(1 << i):
            a_set = frozenset(a for a in range(1, i + 1) if a_bits >> (a - 1) & 1)
            vec = [1 if s & frozenset(range(1, i + 1)) == a_set else 0 for s in subsets]
            gens.append(tuple(vec))
        spaces.append(span(gens, k))
    return make_flag(spaces, "binary", check=False)


def mt_flag(r: int) -> Flag:
    """The order-r flag with V_i = span(1, w^1, ..., w^i), w^j_S = [j in S].

    dim(V_i) = i + 1; the top cell V_r /\\ {0,1}^k is {0, 1, w^j, 1-w^j}.
    """
    if not 1 <= r <= MAX_FLAG_ORDER:
        raise CapacityError(f"flag order must be in 1..{MAX_FLAG_ORDER}")
    k = 1 << r
    subsets = all_subsets(r)
    omega = [tuple(1 if j in s else 0 for s in subsets) for j in range(1, r + 1)]
    spaces = [span([ones(k)])]
    for i in range(1, r + 1):
        spaces.append(span([ones(k)] + omega[:i], k))
    return make_flag(spaces, "maier_tenenbaum", check=False)


# ---------------------------------------------------------------------------
# Cells and the cell tree


@dataclass(frozen=True)
class Cell:
    """Intersection of one V_i-coset with {0,1}^k."""

    level: int
    members: tuple[tuple[int, ...], ...]  # sorted cube points
    genotype: Optional[Genotype]  # binary flags only

    @property
    def size(self) -> int:
        return len(self.members)

    def __repr__(self):
        pts = " ".join(point_to_string(p) for p in self.members[:4])
        more = "..." if len(self.members) > 4 else ""
        return f"Cell(level={self.level}, size={self.size}, [{pts}{more}])"


def _genotype_of_members(members: Sequence[tuple[int, ...]], level: int, r: int) -> Genotype:
    # Block A at level i occupies the contiguous coordinate chunk with index
    # sum(2^(i-a) for a in A); the genotype mask bit for A is sum(2^(a-1)),
    # i.e. the i-bit reversal of the chunk index.
    p = members[0]
    width = 1 << (r - level)
    mask = 0
    for chunk in range(1 << level):
        block = p[chunk * width : (chunk + 1) * width]
        if all(x == block[0] for x in block):
            bit = 0
            for a in range(1, level + 1):
                if chunk >> (level - a) & 1:
                    bit |= 1 << (a - 1)
            mask |= 1 << bit
    return Genotype(level, mask)


def _iter_cube(k: int) -> Iterator[tuple[int, ...]]:
    return product((0, 1), repeat=k)


def cells_at_level(flag: Flag, i: int) -> list[Cell]:
    """The partition of {0,1}^k into cells of level i, sorted by least member."""
    k = flag.ambient_dim
    if k > MAX_CELL_AMBIENT_DIM:
        raise CapacityError(f"cell enumeration guard: ambient dim {k} > {MAX_CELL_AMBIENT_DIM}")
    W = flag.spaces[i]
    groups: dict = {}
    for p in _iter_cube(k):
        groups.setdefault(qlinalg.coset_key(W, p), []).append(p)
    cells = []
    is_binary = flag.kind == "binary"
    r = flag.order
    for pts in groups.values():
        pts = tuple(sorted(pts))
        gen = _genotype_of_members(pts, i, r) if is_binary else None
        cells.append(Cell(i, pts, gen))
    cells.sort(key=lambda c: c.members[0])
    return cells


def genotype_of(cell: Cell) -> Genotype:
    if cell.genotype is None:
        raise ValueError("genotype is defined only for cells of binary flags")
    return cell.genotype


@dataclass(frozen=True)
class CellTree:
    """All cells of a flag, with parent/child links between adjacent levels."""

    flag: Flag
    levels: tuple[tuple[Cell, ...], ...]  # levels[i] = cells at level i
    child_ids: tuple[tuple[tuple[int, ...], ...], ...]  # child_ids[i][c] at level i-1

    def cells(self, level: int) -> tuple[Cell, ...]:
        return self.levels[level]

    def children(self, level: int, idx: int) -> tuple[Cell, ...]:
        return tuple(self.levels[level - 1][j] for j in self.child_ids[level][idx])

    def gamma(self, level: int) -> Cell:
        """The cell at the given level containing the origin."""
        zero = (0,) * self.flag.ambient_dim
        for c in self.levels[level]:
            if c.members[0] == zero:
                return c
        raise AssertionError("no cell contains the origin")


@lru_cache(maxsize=32)
def cell_tree(flag: Flag) -> CellTree:
    levels = [tuple(cells_at_level(flag, i)) for i in range(flag.order + 1)]
    child_ids: list[tuple] = [()]
    for i in range(1, flag.order + 1):
        W = flag.spaces[i]
        by_parent: list[list[int]] = [[] for _ in levels[i]]
        parent_key = {qlinalg.coset_key(W, c.members[0]): j for j, c in enumerate(levels[i])}
        for j, c in enumerate(levels[i - 1]):
            pj = parent_key[qlinalg.coset_key(W, c.members[0])]
            by_parent[pj].append(j)
        child_ids.append(tuple(tuple(lst) for lst in by_parent))
    return CellTree(flag, tuple(levels), tuple(child_ids))


# ---------------------------------------------------------------------------
# Automorphisms of binary flags

Permutation = tuple  # sigma maps coordinate positions; (sigma x)_i = x_sigma(i)


def automorphism_generators(flag: Flag) -> list[Permutation]:
    """Block-swap coordinate permutations preserving every V_i (binary only).

    One generator per pair (j, A <= [j-1]); each swaps the adjacent j-blocks
    at positions A and A + {j} of every vector, and is an involution.
    """
    if flag.kind != "binary":
        raise ValueError("automorphism generators are provided for binary flags only")
    r = flag.order
    subsets = all_subsets(r)
    gens = []
    for j in range(1, r + 1):
        for a_bits in range(1 << (j - 1)):
            a_set = frozenset(a for a in range(1, j) if a_bits >> (a - 1) & 1)
            perm = []
            for s in subsets:
                img = s ^ frozenset({j}) if s & frozenset(range(1, j)) == a_set else s
                perm.append(subset_index(img, r))
            gens.append(tuple(perm))
    return gens


def permute_vector(perm: Permutation, v: Sequence) -> tuple:
    return tuple(v[perm[i]] for i in range(len(perm)))


def permute_subspace(perm: Permutation, W: Subspace) -> Subspace:
    return span([permute_vector(perm, row) for row in W.basis], W.ambient_dim)


# ---------------------------------------------------------------------------
# Subflags


@dataclass(frozen=True)
class Subflag:
    """A chain <1> = V'_0 <= ... <= V'_r with V'_i <= V_i for a parent flag."""

    parent: Flag
    spaces: tuple[Subspace, ...]

    def __post_init__(self):
        if len(self.spaces) != len(self.parent.spaces):
            raise ValueError("subflag must have one space per level")
        k = self.parent.ambient_dim
        if self.spaces[0] != span([ones(k)]):
            raise ValueError("V'_0 must be <1>")
        for i, (lo, hi) in enumerate(zip(self.spaces, self.spaces[1:]), start=1):
            if not contains_subspace(hi, lo):
                raise ValueError(f"subflag spaces not nested at level {i}")
        for i, (sub, sup) in enumerate(zip(self.spaces, self.parent.spaces)):
            if not contains_subspace(sup, sub):
                raise ValueError(f"V'_{i} is not contained in V_{i}")

    def dims(self) -> tuple[int, ...]:
        return tuple(W.dim for W in self.spaces)

    def is_full(self) -> bool:
        return self.spaces == self.parent.spaces


def basic_subflag(flag: Flag, m: int) -> Subflag:
    """The subflag with V'_i = V_{min(m, i)}."""
    spaces = tuple(flag.spaces[min(m, i)] for i in range(flag.order + 1))
    return Subflag(flag, spaces)


def apply_automorphism(perm: Permutation, sf: Subflag) -> Subflag:
    return Subflag(sf.parent, tuple(permute_subspace(perm, W) for W in sf.spaces))


def level_universe(W: Subspace, cap: int, level: int) -> list[Subspace]:
    """All distinct spans of <1> plus a subset of W /\\ {0,1}^k, sorted.

    Grown by closure: repeatedly extend known spaces by cube points they do
    not already contain.  The number of distinct spans is usually far below
    2^{#points}; the cap guards pathological growth.
    """
    k = W.ambient_dim
    pts = cube_points(W)
    base = span([ones(k)])
    seen = {base}
    frontier = [base]
    while frontier:
        nxt = []
        for U in frontier:
            for p in pts:
                if not contains(U, p):
                    U2 = span(list(U.basis) + [p], k)
                    if U2 not in seen:
                        seen.add(U2)
                        if len(seen) > cap:
                            raise EnumerationLimitError(level, len(seen), cap)
                        nxt.append(U2)
        frontier = nxt
    return sorted(seen, key=lambda U: (U.dim, U.basis))


def enumerate_subflags(flag: Flag, cap: int = SUBFLAG_SPACE_CAP) -> Iterator[Subflag]:
    """Yield one representative per distinct chain of cube-spanned subspaces.

    The universe at each level is every span of <1> together with cube points
    of V_i, deduplicated by canonical form; chains satisfy the nesting
    condition.  This covers all basic subflags.  The lattice of arbitrary
    rational subspaces is infinite, so any certificate built on this
    enumeration must state this universe.
    """
    universes = [
        level_universe(flag.spaces[i], cap, i) for i in range(1, flag.order + 1)
    ]
    k = flag.ambient_dim
    v0 = span([ones(k)])
    r = flag.order

    def rec(level: int, chosen: list[Subspace]) -> Iterator[Subflag]:
        if level > r:
            yield Subflag(flag, (v0, *chosen))
            return
        prev = chosen[-1] if chosen else v0
        for U in universes[level - 1]:
            if contains_subspace(U, prev):
                yield from rec(level + 1, chosen + [U])

    yield from rec(1, [])


SUBFLAG_UNIVERSE_TAG = "spans of the all-ones vector and cube points of each V_i"


# ---------------------------------------------------------------------------
# Text format and JSON dump


def parse_flag_text(text: str, kind: str = "custom") -> Flag:
    """Parse a flag from text: one line per level, 0/1 generator strings.

    Level i's space is the span of the all-ones vector and the generators on
    line i; '#' starts a comment.  Nesting is validated.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise ValueError("empty flag specification")
    gens_per_level = [[string_to_point(tok) for tok in line.split()] for line in lines]
    k = len(gens_per_level[0][0])
    for gens in gens_per_level:
        for g in gens:
            if len(g) != k:
                raise DimensionMismatchError("generator strings have mixed lengths")
    spaces = [span([ones(k)])]
    for gens in gens_per_level:
        spaces.append(span([ones(k)] + gens, k))
    return make_flag(spaces, kind, check=True)


def format_flag_text(flag: Flag) -> str:
    """Dump a flag as per-level cube generators (parse_flag_text inverse)."""
    out = [f"# flag kind={flag.kind} k={flag.ambient_dim} dims={flag.dims()}"]
    for i in range(1, flag.order + 1):
        W = flag.spaces[i]
        chosen: list[tuple[int, ...]] = []
        current = span([ones(flag.ambient_dim)])
        for p in cube_points(W):
            if not contains(current, p):
                chosen.append(p)
                current = span(list(current.basis) + [p], flag.ambient_dim)
                if current == W:
                    break
        if current != W:
            raise ValueError("flag space not spanned by cube points and 1")
        out.append(" ".join(point_to_string(p) for p in chosen))
    return "\n".join(out) + "\n"


def tree_json_dict(flag: Flag) -> dict:
    """Cell-tree dump: per level, each cell's genotype mask (hex) and members."""
    tree = cell_tree(flag)
    levels = []
    for i in range(flag.order + 1):
        cells = []
        for c in tree.cells(i):
            cells.append(
                {
                    "genotype_mask": format(c.genotype.mask, "x") if c.genotype else None,
                    "members": [point_to_string(p) for p in c.members],
                }
            )
        levels.append({"level": i, "cells": cells})
    return {
        "schema": "cubeflags.tree.v1",
        "kind": flag.kind,
        "ambient_dim": flag.ambient_dim,
        "order": flag.order,
        "dims": list(flag.dims()),
        "nondegenerate": flag.nondegenerate,
        "levels": levels,
    }
