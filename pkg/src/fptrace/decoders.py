"""Universal decoders scored by empirical information.

Two decoders share one scoring currency, conditional empirical mutual
information against the side data (host sequence and effective time-sharing
sequence):

* threshold: accuse every user whose pairwise score beats rate + delta;
* joint: search coalitions and maximize the penalized multivariate score
  oI(x_A; y | s, w) - |A| (rate + delta), preferring larger coalitions on
  ties and lexicographically smaller ones within a size.

Neither decoder needs the attack channel; the penalty term is what makes
the scores comparable across coalition sizes.  The guilt indices and the
significance checks re-read a decode outcome and certify which inequalities
the returned coalition actually satisfies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Codebook
from .errors import (
    BudgetExceededError,
    ConfigError,
    InapplicableCheckError,
    StaleOutcomeError,
)
from .types_core import InfoQuery, JointType, count_table, entropy, multi_info

__all__ = [
    "DecodeConfig",
    "DecodeOutcome",
    "GuiltReport",
    "SignificanceReport",
    "threshold_decode",
    "mpmi_score",
    "mpmi_decode",
    "guilt_indices",
    "verify_significance",
]


@dataclass(frozen=True)
class DecodeConfig:
    """Decoder knobs.

    ``rate`` defaults to the codebook rate log2(M)/n.  ``budget`` caps the
    number of candidate coalitions an exhaustive search may enumerate.
    ``tie_tol`` is the score gap under which two candidates count as tied.
    """

    delta: float
    k_max: int = 3
    search: str = "exhaustive"
    rate: float | None = None
    budget: int = 2_000_000
    tie_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.k_max < 0:
            raise ConfigError("k_max must be nonnegative")
        if self.search not in ("exhaustive", "greedy"):
            raise ConfigError(f"unknown search mode {self.search!r}")

    def rate_for(self, cb: Codebook) -> float:
        return self.rate if self.rate is not None else cb.params.rate


@dataclass(frozen=True)
class DecodeOutcome:
    """Result of a decode: the accused set plus enough to audit it."""

    accused: tuple[int, ...]
    best_k: int
    score: float
    scores: dict
    exact: bool
    mode: str
    delta: float
    rate: float
    evaluated: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "accused", tuple(sorted(self.accused)))
        if self.best_k != len(self.accused):
            raise ConfigError("best_k must equal the accused-set size")


# ---------------------------------------------------------------------------
# scoring plumbing


def _side_arrays(cb: Codebook, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (cb.params.n,):
        raise ConfigError("pirated sequence length must match the blocklength")
    if y.min() < 0:
        raise ConfigError("pirated sequence has negative symbols")
    y_size = max(int(y.max()) + 1, cb.params.x_size)
    return y, cb.host, cb.effective_w(), y_size


def _coalition_type(
    cb: Codebook, members: tuple[int, ...], y: np.ndarray
) -> JointType:
    """Joint type over (x_m1..x_mk, y, s, w_eff); axes in that order."""
    p = cb.params
    y, s, w, y_size = _side_arrays(cb, y)
    arrays = [cb.row(m) for m in members] + [y, s, w]
    sizes = (p.x_size,) * len(members) + (y_size, p.s_size, p.w_size)
    return JointType(sizes, count_table(arrays, sizes), p.n)


def _row_entropy_given_side(cb: Codebook) -> float:
    """H(x | s, w) of every row, exact from the shared cell compositions."""
    p = cb.params
    comp = cb.cell_compositions()  # (S, W, X) counts
    jt = JointType((p.s_size, p.w_size, p.x_size), comp, p.n)
    return entropy(jt, InfoQuery((2,), cond=(0, 1)))


# ---------------------------------------------------------------------------
# threshold decoder


def threshold_decode(cb: Codebook, y: np.ndarray, cfg: DecodeConfig) -> DecodeOutcome:
    """Accuse every user whose score I(x_m; y | s, w) exceeds rate + delta.

    False accusations are controlled by the penalty alone: an innocent row
    is independent of y given the side data, so its score concentrates near
    zero and beats rate + delta only with exponentially small probability.
    """
    rate = cfg.rate_for(cb)
    bar = rate + cfg.delta
    scores: dict[int, float] = {}
    accused = []
    for m in range(cb.params.num_users):
        jt = _coalition_type(cb, (m,), y)
        # I(x; y | s, w): axes x=0, y=1, side=(2, 3)
        score = multi_info(jt, [(0,), (1,)], cond=(2, 3))
        scores[m] = score
        if score > bar:
            accused.append(m)
    return DecodeOutcome(
        accused=tuple(accused),
        best_k=len(accused),
        score=float(max(scores.values())) if scores else 0.0,
        scores=scores,
        exact=True,
        mode="threshold",
        delta=cfg.delta,
        rate=rate,
        evaluated=cb.params.num_users,
    )


# ---------------------------------------------------------------------------
# joint decoder


def mpmi_score(
    cb: Codebook, coalition: tuple[int, ...], y: np.ndarray, cfg: DecodeConfig
) -> float:
    """Penalized joint score of a candidate coalition.

    oI(x_A; y | s, w) - |A| (rate + delta), computed through the equivocation
    form |A| H(x|s,w) - H(x_A | y, s, w), which is exact because every row
    carries the same conditional composition.  The empty coalition scores 0.
    """
    coalition = tuple(sorted(set(coalition)))
    if not coalition:
        return 0.0
    k = len(coalition)
    jt = _coalition_type(cb, coalition, y)
    h_row = _row_entropy_given_side(cb)
    cond_axes = tuple(range(k, k + 3))  # y, s, w
    h_post = entropy(jt, InfoQuery(tuple(range(k)), cond=cond_axes))
    info = k * h_row - h_post
    return info - k * (cfg.rate_for(cb) + cfg.delta)


def _candidate_count(m: int, k_max: int) -> int:
    return sum(math.comb(m, k) for k in range(0, k_max + 1))


def mpmi_decode(cb: Codebook, y: np.ndarray, cfg: DecodeConfig) -> DecodeOutcome:
    """Maximize the penalized joint score over candidate coalitions.

    Exhaustive mode scans every coalition of size 0..k_max (subject to the
    budget cap) and resolves ties toward the larger coalition, then the
    lexicographically smallest set.  Greedy mode grows the coalition by the
    best single addition until no user improves the score; its outcome is
    marked inexact and is not eligible for the significance checks.
    """
    m = cb.params.num_users
    k_hi = min(cfg.k_max, m)
    if cfg.search == "exhaustive":
        total = _candidate_count(m, k_hi)
        if total > cfg.budget:
            raise BudgetExceededError(
                f"{total} candidate coalitions exceed the budget {cfg.budget}"
            )
        best = ((), 0, 0.0)  # coalition, k, score
        evaluated = 1
        size_best: dict[int, tuple[tuple[int, ...], float]] = {0: ((), 0.0)}
        for k in range(1, k_hi + 1):
            for cand in itertools.combinations(range(m), k):
                score = mpmi_score(cb, cand, y, cfg)
                evaluated += 1
                if k not in size_best or score > size_best[k][1] + cfg.tie_tol:
                    size_best[k] = (cand, score)
                if score > best[2] + cfg.tie_tol:
                    best = (cand, k, score)
                elif score > best[2] - cfg.tie_tol and k > best[1]:
                    # tie across sizes: keep the larger coalition
                    best = (cand, k, score)
                # ties within a size keep the first (lexicographically
                # smallest) candidate, which is the iteration order
        per_size = {c: s for c, s in size_best.values()}
        return DecodeOutcome(
            accused=best[0],
            best_k=best[1],
            score=best[2],
            scores=per_size,
            exact=True,
            mode="mpmi",
            delta=cfg.delta,
            rate=cfg.rate_for(cb),
            evaluated=evaluated,
        )

    # greedy forward selection
    current: tuple[int, ...] = ()
    current_score = 0.0
    trail: dict[tuple[int, ...], float] = {(): 0.0}
    evaluated = 1
    while len(current) < k_hi:
        best_add = None
        for u in range(m):
            if u in current:
                continue
            cand = tuple(sorted(current + (u,)))
            score = mpmi_score(cb, cand, y, cfg)
            evaluated += 1
            if best_add is None or score > best_add[1] + cfg.tie_tol:
                best_add = (cand, score)
        if best_add is None or best_add[1] <= current_score + cfg.tie_tol:
            break
        current, current_score = best_add
        trail[current] = current_score
    return DecodeOutcome(
        accused=current,
        best_k=len(current),
        score=current_score,
        scores=trail,
        exact=False,
        mode="mpmi-greedy",
        delta=cfg.delta,
        rate=cfg.rate_for(cb),
        evaluated=evaluated,
    )


# ---------------------------------------------------------------------------
# post-decode audits


@dataclass(frozen=True)
class GuiltReport:
    """Per-user and coalition-level excess scores over the rate."""

    coalition_index: float
    per_user: dict


def _group_score(
    cb: Codebook,
    group_a: tuple[int, ...],
    group_b: tuple[int, ...],
    y: np.ndarray,
) -> float:
    """oI(x_A ; y x_B | s, w): each A-member is its own part, y and the B
    rows merge into one part."""
    members = tuple(group_a) + tuple(group_b)
    jt = _coalition_type(cb, members, y)
    a = len(group_a)
    b = len(group_b)
    parts = [(i,) for i in range(a)]
    parts.append(tuple(range(a, a + b)) + (a + b,))  # x_B axes then y axis
    return multi_info(jt, parts, cond=(a + b + 1, a + b + 2))


def _recheck_outcome(cb: Codebook, y: np.ndarray, outcome: DecodeOutcome) -> DecodeConfig:
    cfg = DecodeConfig(
        delta=outcome.delta, k_max=max(outcome.best_k, 1), rate=outcome.rate
    )
    if outcome.mode == "threshold":
        bar = outcome.rate + outcome.delta
        jt_scores = []
        for m in range(cb.params.num_users):
            jt = _coalition_type(cb, (m,), y)
            jt_scores.append(multi_info(jt, [(0,), (1,)], cond=(2, 3)))
        accused = tuple(m for m, s in enumerate(jt_scores) if s > bar)
        if accused != outcome.accused:
            raise StaleOutcomeError("threshold outcome does not match its inputs")
    else:
        got = mpmi_score(cb, outcome.accused, y, cfg)
        if abs(got - outcome.score) > 1e-9:
            raise StaleOutcomeError(
                f"recorded score {outcome.score!r} != recomputed {got!r}"
            )
    return cfg


def guilt_indices(cb: Codebook, y: np.ndarray, outcome: DecodeOutcome) -> GuiltReport:
    """Excess empirical information of the accused set and every user.

    For the coalition: oI(x_acc; y | s, w) - |acc| * rate.  For an accused
    user m: oI(x_m; y x_rest | s, w) - rate, rest = other accused.  For an
    innocent-looking user: I(x_m; y x_acc | s, w) - rate.  Positive indices
    say the decoder's evidence exceeds what the code rate hands out for
    free; the outcome is first recomputed and a mismatch raises.
    """
    cfg = _recheck_outcome(cb, y, outcome)
    acc = outcome.accused
    rate = outcome.rate
    if acc:
        jt = _coalition_type(cb, acc, y)
        k = len(acc)
        parts = [(i,) for i in range(k)] + [(k,)]
        coalition_index = multi_info(jt, parts, cond=(k + 1, k + 2)) - k * rate
    else:
        coalition_index = 0.0
    per_user = {}
    for m in range(cb.params.num_users):
        if m in acc:
            rest = tuple(u for u in acc if u != m)
            idx = _group_score(cb, (m,), rest, y) - rate
        else:
            idx = _group_score(cb, (m,), acc, y) - rate
        per_user[m] = {"accused": m in acc, "index": idx}
    return GuiltReport(coalition_index=coalition_index, per_user=per_user)


@dataclass(frozen=True)
class SignificanceReport:
    """Outcome of the subset-wise optimality inequalities."""

    ok: bool
    inside: list  # (subset, lhs, bound, ok) over nonempty subsets of accused
    outside: list  # (subset, lhs, bound, ok) over disjoint candidate additions


def verify_significance(
    cb: Codebook,
    y: np.ndarray,
    outcome: DecodeOutcome,
    tol: float = 1e-9,
) -> SignificanceReport:
    """Certify the two families of inequalities an exact optimum satisfies.

    Every nonempty subset A of the accused coalition must carry enough
    joint evidence: oI(x_A; y x_rest | s, w) >= |A| (rate + delta), up to
    the tie tolerance.  Every disjoint subset A small enough to have been
    searched must not: oI(x_A; y x_acc | s, w) <= |A| (rate + delta).
    Requires an exhaustive outcome whose size was not clipped at k_max;
    anything else raises InapplicableCheckError.
    """
    if not outcome.exact or not outcome.mode.startswith("mpmi"):
        raise InapplicableCheckError("significance needs an exhaustive joint decode")
    _recheck_outcome(cb, y, outcome)
    # the per-size score trail records how far the search actually looked
    sizes_seen = [len(c) for c in outcome.scores] or [0]
    k_cap = max(max(sizes_seen), outcome.best_k)
    if outcome.best_k >= k_cap and outcome.best_k > 0:
        raise InapplicableCheckError(
            "optimum size reached the search cap; the unrestricted optimum "
            "may be larger, so the outside inequalities are not certifiable"
        )
    acc = outcome.accused
    bar = outcome.rate + outcome.delta
    inside = []
    for a in range(1, len(acc) + 1):
        for sub in itertools.combinations(acc, a):
            rest = tuple(u for u in acc if u not in sub)
            lhs = _group_score(cb, sub, rest, y)
            bound = a * bar
            inside.append((sub, lhs, bound, lhs > bound - tol))
    outside = []
    others = [u for u in range(cb.params.num_users) if u not in acc]
    room = k_cap - len(acc)
    budget = _candidate_count(len(others), min(room, len(others)))
    if budget > 2_000_000:
        raise BudgetExceededError("too many outside subsets to certify")
    for a in range(1, min(room, len(others)) + 1):
        for sub in itertools.combinations(others, a):
            lhs = _group_score(cb, sub, acc, y)
            bound = a * bar
            outside.append((sub, lhs, bound, lhs <= bound + tol))
    ok = all(r[3] for r in inside) and all(r[3] for r in outside)
    return SignificanceReport(ok=ok, inside=inside, outside=outside)
