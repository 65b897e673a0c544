"""PIT assignment: pairwise loss matrices, permutation solvers, switch tracking."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .signal import DB_CAP, StructuralError, _as_array, si_snr

BRUTE_FORCE_MAX_N = 8
# pit_loss hands off to the Hungarian solver above this size
CROSSOVER_N = 4


class CapabilityError(RuntimeError):
    """Requested operation exceeds what the chosen solver supports."""


@dataclass(frozen=True)
class Assignment:
    """``perm[i]`` is the target index paired with output ``i``."""

    perm: Tuple[int, ...]
    total_loss: float

    @property
    def digits(self) -> str:
        return "".join(str(p) for p in self.perm)


def negative_si_snr(est, ref) -> float:
    return -si_snr(est, ref)


def as_loss_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise StructuralError(f"loss matrix must be square and non-empty, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise StructuralError("loss matrix has non-finite entries")
    return m


def pairwise_loss_matrix(outputs: Sequence, targets: Sequence,
                         loss: Callable = negative_si_snr) -> np.ndarray:
    """``m[i, j] = loss(outputs[i], targets[j])``."""
    n = len(outputs)
    if n != len(targets):
        raise StructuralError(f"{n} outputs vs {len(targets)} targets")
    if n == 0:
        raise StructuralError("need at least one output")
    lengths = {_as_array(x).shape[-1] for x in [*outputs, *targets]}
    if len(lengths) != 1:
        raise StructuralError(f"unequal signal lengths {sorted(lengths)}")
    m = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            m[i, j] = loss(outputs[i], targets[j])
    return as_loss_matrix(m)


def _perm_cost(m: np.ndarray, perm) -> float:
    # fixed left-to-right summation so both solvers agree bitwise
    total = 0.0
    for i, j in enumerate(perm):
        total += float(m[i, j])
    return total


def best_assignment_bruteforce(m) -> Assignment:
    """Exhaustive search over all n! permutations, lexicographically first on ties."""
    m = as_loss_matrix(m)
    n = m.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise CapabilityError(
            f"brute force limited to n <= {BRUTE_FORCE_MAX_N} (got {n}); "
            "use best_assignment_hungarian")
    best, best_cost = None, np.inf
    # itertools.permutations yields in lexicographic order, so strict < keeps the first
    for perm in itertools.permutations(range(n)):
        c = _perm_cost(m, perm)
        if c < best_cost:
            best, best_cost = perm, c
    return Assignment(tuple(best), best_cost)


def _hungarian(m: np.ndarray):
    # O(n^3) shortest augmenting path with row/column potentials
    n = m.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)   # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = m[i0 - 1] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = [0] * n
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm, u[1:], v[1:]


def _tight_edges(m, u, v) -> np.ndarray:
    reduced = m - u[:, None] - v[None, :]
    tol = 1e-12 * max(1.0, float(np.abs(m).max())) * m.shape[0]
    return reduced <= tol


def _has_alternative(tight: np.ndarray, perm: list) -> bool:
    # another tight perfect matching exists iff the row graph i -> owner(col) has a cycle
    n = len(perm)
    owner = {j: i for i, j in enumerate(perm)}
    succ = [[owner[j] for j in np.flatnonzero(tight[i]) if owner[j] != i] for i in range(n)]
    state = [0] * n  # 0 new, 1 on stack, 2 done
    for root in range(n):
        if state[root]:
            continue
        stack = [(root, iter(succ[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                return True
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return False


def _lex_smallest_tight(tight: np.ndarray) -> list:
    # row by row, keep the smallest tight column that leaves a perfect completion
    n = tight.shape[0]
    fixed: list = []
    for i in range(n):
        used = set(fixed)
        for j in np.flatnonzero(tight[i]):
            if j in used:
                continue
            cols = [c for c in range(n) if c not in used and c != j]
            sub = tight[i + 1:][:, cols]
            if sub.shape[0] == 0 or _perfect(sub):
                fixed.append(int(j))
                break
    return fixed


def _perfect(adj: np.ndarray) -> bool:
    match = maximum_bipartite_matching(csr_matrix(adj.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))


def best_assignment_hungarian(m, break_ties: bool = True) -> Assignment:
    """Optimal assignment in O(n^3).

    With ``break_ties`` the lexicographically smallest optimal permutation is
    returned. Ties are found from the solver's dual potentials, so the extra
    work happens only when an alternative optimum actually exists.
    """
    m = as_loss_matrix(m)
    perm, u, v = _hungarian(m)
    cost = _perm_cost(m, perm)
    if break_ties and m.shape[0] > 1:
        tight = _tight_edges(m, u, v)
        if _has_alternative(tight, perm):
            alt = _lex_smallest_tight(tight)
            if len(alt) == len(perm) and _perm_cost(m, alt) <= cost:
                perm, cost = alt, _perm_cost(m, alt)
    return Assignment(tuple(int(j) for j in perm), cost)


def best_assignment(m) -> Assignment:
    m = as_loss_matrix(m)
    if m.shape[0] <= CROSSOVER_N:
        return best_assignment_bruteforce(m)
    return best_assignment_hungarian(m)


def pit_loss(outputs: Sequence, targets: Sequence,
             loss: Callable = negative_si_snr) -> Tuple[float, Assignment]:
    """Minimum over output->target permutations of the mean per-pair loss.

    Returns ``(mean_loss, assignment)``; ``assignment.total_loss`` is the sum.
    """
    m = pairwise_loss_matrix(outputs, targets, loss)
    a = best_assignment(m)
    return a.total_loss / m.shape[0], a


def pit_from_matrices(mats: np.ndarray) -> list:
    """Best assignment for each matrix in a stacked ``(batch, n, n)`` array."""
    return [best_assignment(m) for m in np.asarray(mats)]


@dataclass
class SwitchLog:
    """Per-epoch record of the permutation chosen for every example id."""

    epochs: Dict[int, Dict[str, Tuple[int, ...]]] = field(default_factory=dict)

    def record(self, epoch: int, example_id: str, perm: Iterable[int]):
        self.epochs.setdefault(epoch, {})[example_id] = tuple(int(p) for p in perm)

    def __contains__(self, epoch):
        return epoch in self.epochs

    def to_lines(self) -> list:
        lines = []
        for e in sorted(self.epochs):
            for ex_id in sorted(self.epochs[e]):
                digits = "".join(str(p) for p in self.epochs[e][ex_id])
                lines.append(f"{e}\t{ex_id}\t{digits}")
        return lines

    def dump(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for line in self.to_lines():
                f.write(line + "\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SwitchLog":
        log = cls()
        for k, raw in enumerate(lines, 1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3 or not parts[2].isdigit():
                raise StructuralError(f"switch log line {k}: malformed record {raw!r}")
            log.record(int(parts[0]), parts[1], (int(c) for c in parts[2]))
        return log

    @classmethod
    def load(cls, path) -> "SwitchLog":
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f)


def switch_percentage(log: SwitchLog, epoch_a: int, epoch_b: int) -> float:
    """Percent of examples whose permutation differs between two epochs."""
    for e in (epoch_a, epoch_b):
        if e not in log.epochs:
            raise StructuralError(f"epoch {e} not in switch log")
    a, b = log.epochs[epoch_a], log.epochs[epoch_b]
    if a.keys() != b.keys():
        raise StructuralError(f"epochs {epoch_a} and {epoch_b} cover different example ids")
    if not a:
        raise StructuralError("switch log epochs are empty")
    flips = sum(1 for k in a if a[k] != b[k])
    return 100.0 * flips / len(a)


__all__ = [
    "Assignment", "CapabilityError", "SwitchLog", "DB_CAP",
    "best_assignment", "best_assignment_bruteforce", "best_assignment_hungarian",
    "negative_si_snr", "pairwise_loss_matrix", "pit_from_matrices", "pit_loss",
    "switch_percentage",
]
