"""Collusion attacks and the constraint classes they must respect.

A coalition of K users holds rows x_1..x_K and emits one pirated sequence y.
Attack channels act per position (memoryless) unless explicitly wrapped; the
classes of interest are:

* marking: wherever all colluders agree, the output must copy them;
* interleaving: each position copies a uniformly chosen colluder;
* bounded distortion: the output stays close (under a letter cost d2) to a
  symmetric estimate f(x_1..x_K) of the original mark;
* fairness: the realized conditional law of y given the colluder symbols is
  invariant under renaming the colluders.

Every attack returns the pirated copy together with a feasibility report
that is recomputable from (x_K, y) alone.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetExceededError, ConfigError
from .types_core import JointType, count_table

__all__ = [
    "ChannelSpec",
    "AttackResult",
    "interleaving_channel",
    "interleave",
    "apply_memoryless",
    "check_marking",
    "check_distortion_attack",
    "permutation_average",
    "wrap_exchangeable",
    "is_permutation_invariant",
    "is_first_order_fair",
    "feasibility_report",
]

MAX_PERM_FANOUT = 8  # cap on K for anything that enumerates K! permutations

CHANNEL_CLASSES = ("explicit", "boneh_shaw", "interleaving", "distortion")


@dataclass(frozen=True)
class ChannelSpec:
    """Memoryless coalition channel p(y | x_1..x_K).

    ``table`` has shape (x_size,)*k + (y_size,); the trailing axis is a pmf
    for every colluder-symbol cell.  ``class_tag`` selects the structural
    validation run at construction: "boneh_shaw" checks the marking
    diagonal, "interleaving" checks the exact uniform-copy table,
    "distortion" additionally carries the estimator/cost data needed to
    audit realizations.
    """

    k: int
    x_size: int
    y_size: int
    table: np.ndarray
    class_tag: str = "explicit"
    estimator: np.ndarray | None = None
    d2: np.ndarray | None = None
    distortion_cap: float | None = None

    def __post_init__(self) -> None:
        if self.class_tag not in CHANNEL_CLASSES:
            raise ConfigError(f"unknown channel class {self.class_tag!r}")
        if self.k < 1 or self.x_size < 1 or self.y_size < 1:
            raise ConfigError("channel dimensions must be positive")
        table = np.asarray(self.table, dtype=float)
        want = (self.x_size,) * self.k + (self.y_size,)
        if table.shape != want:
            raise ConfigError(f"channel table shape {table.shape}, expected {want}")
        if np.any(table < -1e-15):
            raise ConfigError("channel table has negative entries")
        if np.max(np.abs(table.sum(axis=-1) - 1.0)) > 1e-12:
            raise ConfigError("channel rows must sum to one")
        table = np.clip(table, 0.0, None)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

        if self.class_tag == "boneh_shaw":
            if self.y_size < self.x_size:
                raise ConfigError("marking channels need inputs embedded in outputs")
            for u in range(self.x_size):
                cell = table[(u,) * self.k]
                if abs(cell[u] - 1.0) > 1e-12:
                    raise ConfigError(
                        f"marking violated: all-{u} cell does not copy symbol {u}"
                    )
        elif self.class_tag == "interleaving":
            if self.y_size != self.x_size:
                raise ConfigError("uniform-copy channels need matching alphabets")
            ref = _interleaving_table(self.k, self.x_size)
            if np.max(np.abs(table - ref)) > 1e-12:
                raise ConfigError("table is not the uniform-copy channel")
        elif self.class_tag == "distortion":
            if self.estimator is None or self.d2 is None or self.distortion_cap is None:
                raise ConfigError(
                    "distortion channels need estimator, d2 and distortion_cap"
                )
            est = np.asarray(self.estimator, dtype=np.int64)
            if est.shape != (self.x_size,) * self.k:
                raise ConfigError("estimator must map every colluder cell")
            _require_symmetric_estimator(est, self.k)
            d2 = np.asarray(self.d2, dtype=float)
            if d2.ndim != 2 or d2.shape[0] <= est.max() or d2.shape[1] != self.y_size:
                raise ConfigError("d2 shape incompatible with estimator/output")
            object.__setattr__(self, "estimator", est)
            object.__setattr__(self, "d2", d2)

    def expected_distortion(self, input_pmf: np.ndarray) -> float:
        """E d2(f(X_K), Y) under input_pmf and this channel."""
        if self.class_tag != "distortion":
            raise ConfigError("expected_distortion needs a distortion-class channel")
        p = np.asarray(input_pmf, dtype=float).reshape((self.x_size,) * self.k)
        cost = self.d2[self.estimator.ravel()].reshape(self.table.shape)
        return float(np.sum(self.table * p[..., None] * cost))

    def to_json(self) -> str:
        payload = {
            "k": self.k,
            "x_size": self.x_size,
            "y_size": self.y_size,
            "class": self.class_tag,
            "shape": list(self.table.shape),
            "table": self.table.ravel(order="C").tolist(),
        }
        if self.class_tag == "distortion":
            payload["estimator"] = self.estimator.ravel(order="C").tolist()
            payload["d2_shape"] = list(self.d2.shape)
            payload["d2"] = self.d2.ravel(order="C").tolist()
            payload["distortion_cap"] = self.distortion_cap
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "ChannelSpec":
        d = json.loads(text)
        shape = tuple(d["shape"])
        table = np.asarray(d["table"], dtype=float).reshape(shape)
        kw = {}
        if d["class"] == "distortion":
            kw["estimator"] = np.asarray(d["estimator"], dtype=np.int64).reshape(
                shape[:-1]
            )
            kw["d2"] = np.asarray(d["d2"], dtype=float).reshape(tuple(d["d2_shape"]))
            kw["distortion_cap"] = float(d["distortion_cap"])
        return cls(
            k=int(d["k"]),
            x_size=int(d["x_size"]),
            y_size=int(d["y_size"]),
            table=table,
            class_tag=d["class"],
            **kw,
        )


def _require_symmetric_estimator(est: np.ndarray, k: int) -> None:
    if k > MAX_PERM_FANOUT:
        raise BudgetExceededError(f"estimator symmetry check caps at K={MAX_PERM_FANOUT}")
    for perm in itertools.permutations(range(k)):
        if not np.array_equal(np.transpose(est, perm), est):
            raise ConfigError("estimator must be invariant to colluder order")


def _interleaving_table(k: int, q: int) -> np.ndarray:
    table = np.zeros((q,) * k + (q,))
    for cell in itertools.product(range(q), repeat=k):
        for sym in cell:
            table[cell + (sym,)] += 1.0 / k
    return table


def interleaving_channel(k: int, q: int) -> ChannelSpec:
    """Uniform-copy channel: each position outputs a random colluder's symbol."""
    table = _interleaving_table(k, q)
    return ChannelSpec(k=k, x_size=q, y_size=q, table=table, class_tag="interleaving")


@dataclass(frozen=True)
class AttackResult:
    """Pirated copy plus a feasibility report recomputable from (x_K, y)."""

    y: np.ndarray
    realized: JointType  # joint type of (x_1..x_K, y)
    marking_ok: bool
    distortion: float | None = None
    distortion_ok: bool | None = None


def feasibility_report(
    x_rows: np.ndarray,
    y: np.ndarray,
    y_size: int,
    x_size: int | None = None,
    estimator: np.ndarray | None = None,
    d2: np.ndarray | None = None,
    cap: float | None = None,
) -> AttackResult:
    """Audit a pirated copy against the marking and distortion rules."""
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
    y = np.asarray(y, dtype=np.int64)
    k, n = x_rows.shape
    if y.shape != (n,):
        raise ConfigError("pirated copy length mismatch")
    if x_size is None:
        x_size = int(x_rows.max()) + 1 if x_rows.size else 1
    sizes = (x_size,) * k + (y_size,)
    counts = count_table([*x_rows, y], sizes)
    realized = JointType(sizes, counts, n)
    marking_ok = check_marking(x_rows, y)
    distortion = None
    distortion_ok = None
    if estimator is not None:
        if d2 is None or cap is None:
            raise ConfigError("distortion audit needs estimator, d2 and cap together")
        distortion, distortion_ok = check_distortion_attack(x_rows, y, estimator, d2, cap)
    return AttackResult(y, realized, marking_ok, distortion, distortion_ok)


def interleave(
    x_rows: np.ndarray, rng: np.random.Generator, x_size: int | None = None
) -> AttackResult:
    """Position-wise uniform colluder copy."""
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
    k, n = x_rows.shape
    pick = rng.integers(0, k, size=n)
    y = x_rows[pick, np.arange(n)]
    if x_size is None:
        x_size = int(x_rows.max()) + 1
    return feasibility_report(x_rows, y, y_size=x_size, x_size=x_size)


def apply_memoryless(
    x_rows: np.ndarray, ch: ChannelSpec, rng: np.random.Generator
) -> AttackResult:
    """Drive colluder rows through a memoryless channel."""
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
    k, n = x_rows.shape
    if k != ch.k:
        raise ConfigError(f"channel expects {ch.k} colluders, got {k}")
    if x_rows.size and x_rows.max() >= ch.x_size:
        raise ConfigError("colluder symbols exceed the channel input alphabet")
    flat = ch.table.reshape(-1, ch.y_size)
    cells = np.ravel_multi_index(tuple(x_rows), (ch.x_size,) * k)
    cdf = np.cumsum(flat[cells], axis=1)
    u = rng.random(n)
    y = (u[:, None] > cdf).sum(axis=1).astype(np.int64)
    return feasibility_report(
        x_rows,
        y,
        y_size=ch.y_size,
        x_size=ch.x_size,
        estimator=ch.estimator,
        d2=ch.d2,
        cap=ch.distortion_cap,
    )


def check_marking(x_rows: np.ndarray, y: np.ndarray) -> bool:
    """True iff y copies the colluders wherever they all agree."""
    x_rows = np.atleast_2d(np.asarray(x_rows))
    y = np.asarray(y)
    agree = np.all(x_rows == x_rows[0], axis=0)
    return bool(np.all(y[agree] == x_rows[0][agree]))


def check_distortion_attack(
    x_rows: np.ndarray,
    y: np.ndarray,
    estimator: np.ndarray,
    d2: np.ndarray,
    cap: float,
) -> tuple[float, bool]:
    """Average cost d2(f(x_1..x_K), y) of a realization, with cap verdict.

    The estimator must be invariant to colluder order; the same audit then
    applies no matter how the coalition labels itself.
    """
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
    y = np.asarray(y, dtype=np.int64)
    estimator = np.asarray(estimator, dtype=np.int64)
    _require_symmetric_estimator(estimator, x_rows.shape[0])
    guess = estimator[tuple(x_rows)]
    value = float(np.asarray(d2, dtype=float)[guess, y].mean())
    return value, value <= cap + 1e-12


def permutation_average(ch: ChannelSpec) -> ChannelSpec:
    """Average the channel over all colluder relabelings.

    The result is permutation-invariant, and averaging an already invariant
    channel returns it unchanged.
    """
    if ch.k > MAX_PERM_FANOUT:
        raise BudgetExceededError(f"permutation average caps at K={MAX_PERM_FANOUT}")
    acc = np.zeros_like(ch.table)
    perms = list(itertools.permutations(range(ch.k)))
    for perm in perms:
        acc += np.transpose(ch.table, perm + (ch.k,))
    return ChannelSpec(
        k=ch.k,
        x_size=ch.x_size,
        y_size=ch.y_size,
        table=acc / len(perms),
        class_tag=ch.class_tag,
        estimator=ch.estimator,
        d2=ch.d2,
        distortion_cap=ch.distortion_cap,
    )


def is_permutation_invariant(ch: ChannelSpec, tol: float = 1e-12) -> bool:
    """True iff the table is unchanged by every colluder relabeling."""
    if ch.k > MAX_PERM_FANOUT:
        raise BudgetExceededError(f"invariance check caps at K={MAX_PERM_FANOUT}")
    for perm in itertools.permutations(range(ch.k)):
        if np.max(np.abs(np.transpose(ch.table, perm + (ch.k,)) - ch.table)) > tol:
            return False
    return True


def wrap_exchangeable(
    attack: Callable[[np.ndarray, np.random.Generator], AttackResult],
) -> Callable[[np.ndarray, np.random.Generator], AttackResult]:
    """Make any attack strongly exchangeable in the positions.

    The wrapper runs the base attack on a uniformly permuted view of the
    colluder rows and scatters the output back, so per-position pairings are
    preserved.  Conditioned on the realized joint type, the output is then
    uniform over the consistent sequences, whatever the base attack did with
    position order.
    """

    def wrapped(x_rows: np.ndarray, rng: np.random.Generator) -> AttackResult:
        x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
        n = x_rows.shape[1]
        pi = rng.permutation(n)
        base = attack(x_rows[:, pi], rng)
        y = np.empty(n, dtype=np.int64)
        y[pi] = base.y
        return feasibility_report(
            x_rows, y, y_size=base.realized.axes[-1], x_size=base.realized.axes[0]
        )

    return wrapped


def is_first_order_fair(x_rows: np.ndarray, y: np.ndarray, y_size: int | None = None) -> bool:
    """True iff the realized conditional type of y is colluder-symmetric.

    Cells of the colluder tuple that are permutations of one another must
    induce identical conditional laws for y; cells with no occurrences are
    unconstrained.  Comparison is exact (integer cross-multiplication).
    """
    x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.int64))
    y = np.asarray(y, dtype=np.int64)
    k, n = x_rows.shape
    if k > MAX_PERM_FANOUT:
        raise BudgetExceededError(f"fairness check caps at K={MAX_PERM_FANOUT}")
    x_size = int(x_rows.max()) + 1
    if y_size is None:
        y_size = int(y.max()) + 1
    counts = count_table([*x_rows, y], (x_size,) * k + (y_size,))
    totals = counts.sum(axis=-1)
    groups: dict[tuple, list[tuple]] = {}
    for cell in itertools.product(range(x_size), repeat=k):
        groups.setdefault(tuple(sorted(cell)), []).append(cell)
    for members in groups.values():
        live = [c for c in members if totals[c] > 0]
        for a, b in itertools.combinations(live, 2):
            # p(y|a) == p(y|b) exactly: counts[a]*totals[b] == counts[b]*totals[a]
            if np.any(
                counts[a].astype(object) * int(totals[b])
                != counts[b].astype(object) * int(totals[a])
            ):
                return False
    return True
