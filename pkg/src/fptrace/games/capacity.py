"""Max-min capacity games at small alphabets.

The inner minimization over the channel polytope is Frank-Wolfe with exact
line search; the payoffs are convex in the channel, so the linearization
gap is a valid optimality certificate.  The outer maximization over the
input law is multistart gradient ascent on a softmax parameterization
(the payoff is generally nonconcave in the mark law, so local optima are
collected and the spread is reported rather than hidden).
"""

import itertools
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import minimize_scalar

from .. import rng as rngmod
from ..errors import ConfigError
from .problems import (
    GameProblem,
    GameSolution,
    InputLaw,
    law_tensors,
    payoff_value_grad,
)

__all__ = ["inner_min_channel", "solve_capacity", "solve_capacity_simple"]

_FD_STEP = 1e-4


def _coalition_input_pmf(problem, law):
    b, _ = law_tensors(problem, law)
    return b.reshape((-1,) + (problem.x_size,) * problem.coalition_size).sum(axis=0)


def _frank_wolfe(problem, law, objective, subset, user, fair, tol, max_iter):
    family = problem.channel_class
    k = problem.coalition_size
    q_x = _coalition_input_pmf(problem, law)

    def vg(c):
        return payoff_value_grad(c, problem, law, objective, subset=subset, user=user)

    c = family.start(k, problem.x_size, problem.y_size, q_x=q_x, fair=fair)
    value, grad = vg(c)
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        vertex = family.linmin(grad, q_x=q_x, fair=fair)
        gap = float(np.sum(grad * (c - vertex)))
        if gap < tol:
            break
        d = vertex - c
        res = minimize_scalar(
            lambda t: vg(c + t * d)[0],
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        step = float(res.x)
        cand = c + step * d
        cand_value = vg(cand)[0]
        if cand_value >= value:  # line search stalled: fall back to the FW step
            step = 2.0 / (it + 2.0)
            cand = c + step * d
            cand_value = vg(cand)[0]
            if cand_value >= value:
                break
        c = cand
        value, grad = vg(c)
    return c, value, {"iterations": it, "gap": gap}


def _subsets(k):
    for size in range(1, k + 1):
        yield from itertools.combinations(range(k), size)


def inner_min_channel(
    input_law,
    problem,
    *,
    subset=None,
    user=None,
    tol=1e-8,
    max_iter=10_000,
    full_output=False,
):
    """Worst-case channel and payoff value for a fixed input law.

    The detect-one and simple payoffs are minimized over the fair members
    of the channel family; detect-all is minimized over the family as given,
    jointly with the choice of the weakest coalition subset (each subset
    problem is convex, so the min over subsets of exact minima is exact).
    """
    if subset is not None:
        c, v, info = _frank_wolfe(
            problem, input_law, "detect_all_part", subset, None, False, tol, max_iter
        )
        info["subset"] = tuple(subset)
    elif user is not None or problem.objective == "simple":
        c, v, info = _frank_wolfe(
            problem, input_law, "simple", None, user or 0, True, tol, max_iter
        )
    elif problem.objective == "detect_one":
        c, v, info = _frank_wolfe(
            problem, input_law, "detect_one", None, None, True, tol, max_iter
        )
    elif problem.objective == "detect_all":
        best = None
        total_iters = 0
        for a in _subsets(problem.coalition_size):
            ca, va, ia = _frank_wolfe(
                problem, input_law, "detect_all_part", a, None, False, tol, max_iter
            )
            total_iters += ia["iterations"]
            if best is None or va < best[1] - 1e-15:
                best = (ca, va, {"gap": ia["gap"], "subset": a})
        c, v, info = best
        info["iterations"] = total_iters
    else:
        raise ConfigError(f"unknown objective {problem.objective!r}")
    spec = problem.wrap_channel(c)
    if full_output:
        return spec, v, info
    return spec, v


# ---------------------------------------------------------------------------
# outer maximization


def _theta_dim(problem):
    return problem.num_timeshare + problem.s_size * problem.num_timeshare * problem.x_size


def _law_from_theta(problem, theta):
    l, s, x = problem.num_timeshare, problem.s_size, problem.x_size
    tw = theta[:l]
    tx = theta[l:].reshape(s, l, x)
    ew = np.exp(tw - tw.max())
    pw = ew / ew.sum()
    ex = np.exp(tx - tx.max(axis=-1, keepdims=True))
    px = ex / ex.sum(axis=-1, keepdims=True)
    return InputLaw(p_w=pw, p_x_given_sw=px)


def _theta_from_law(problem, law):
    eps = 1e-12
    tw = np.log(law.p_w + eps)
    tx = np.log(law.p_x_given_sw + eps)
    return np.concatenate([tw, tx.ravel()])


def _penalized_value(problem, law, inner_tol):
    _, v = inner_min_channel(law, problem, tol=inner_tol)
    if problem.d1_cap is not None:
        excess = law.embedding_cost(problem) - problem.d1_cap
        if excess > 0:
            v -= 1e3 * excess
    return v


def _ascend(problem, theta0, inner_tol, max_steps=200):
    theta = theta0.copy()
    value = _penalized_value(problem, _law_from_theta(problem, theta), inner_tol)
    evals = 1
    for _ in range(max_steps):
        grad = np.empty_like(theta)
        for i in range(len(theta)):
            bumped = theta.copy()
            bumped[i] += _FD_STEP
            grad[i] = (
                _penalized_value(problem, _law_from_theta(problem, bumped), inner_tol)
                - value
            ) / _FD_STEP
            evals += 1
        norm = float(np.linalg.norm(grad))
        if norm < 1e-9:
            break
        step = 1.0
        improved = False
        while step > 1e-7:
            cand = theta + step * grad / norm
            cand_value = _penalized_value(
                problem, _law_from_theta(problem, cand), inner_tol
            )
            evals += 1
            if cand_value > value + 1e-12:
                theta, value = cand, cand_value
                improved = True
                break
            step /= 4.0
        if not improved:
            break
    return theta, value, evals


def _grid_laws(problem, resolution):
    """Coarse product-simplex grid, only attempted in low dimension."""
    l, s, x = problem.num_timeshare, problem.s_size, problem.x_size
    free = (l - 1) + s * l * (x - 1)
    if free > 3 or l > 3 or x > 3:
        return []
    ticks = [i / resolution for i in range(resolution + 1)]

    def simplexes(d):
        if d == 1:
            return [(1.0,)]
        if d == 2:
            return [(t, 1.0 - t) for t in ticks]
        return [
            (a, b, 1.0 - a - b)
            for a in ticks
            for b in ticks
            if a + b <= 1.0 + 1e-12
        ]

    laws = []
    for pw in simplexes(l):
        rows_choices = simplexes(x)
        for combo in itertools.product(rows_choices, repeat=s * l):
            px = np.asarray(combo, dtype=float).reshape(s, l, x)
            laws.append(InputLaw(p_w=np.asarray(pw), p_x_given_sw=px))
    return laws


def _embed_lower(problem, sol):
    """Lift an (L-1)-slot law into L slots with a vanishing new slot."""
    pw = np.concatenate([sol.input_law.p_w * (1.0 - 1e-9), [1e-9]])
    px = np.concatenate(
        [sol.input_law.p_x_given_sw, sol.input_law.p_x_given_sw[:, -1:, :]], axis=1
    )
    return InputLaw(p_w=pw, p_x_given_sw=px)


def solve_capacity(
    problem: GameProblem,
    *,
    seed: int = 0,
    restarts: int = 20,
    grid_resolution: int = 16,
    inner_tol: float = 1e-8,
) -> GameSolution:
    """Best max-min value found over the product-form input laws.

    Multistart local ascent: uniform start, seeded random starts, a coarse
    grid pass in low dimension, and (for L > 1) the lifted solution of the
    (L-1)-slot game, which makes the reported values nondecreasing in L.
    Global optimality is not certified; the spread of local optima is
    reported in diagnostics ("nonconcave").
    """
    starts = [np.zeros(_theta_dim(problem))]
    gen = rngmod.derive(seed, "capacity")
    for _ in range(max(restarts - 1, 0)):
        starts.append(gen.normal(0.0, 2.0, _theta_dim(problem)))

    grid = _grid_laws(problem, grid_resolution)
    if grid:
        scored = sorted(
            ((_penalized_value(problem, law, 1e-6), i) for i, law in enumerate(grid)),
            reverse=True,
        )
        for _, i in scored[:3]:
            starts.append(_theta_from_law(problem, grid[i]))

    lower = None
    if problem.num_timeshare > 1:
        lower = solve_capacity(
            replace(problem, num_timeshare=problem.num_timeshare - 1),
            seed=seed,
            restarts=max(restarts // 2, 4),
            grid_resolution=grid_resolution,
            inner_tol=inner_tol,
        )
        starts.append(_theta_from_law(problem, _embed_lower(problem, lower)))

    best_theta = None
    best_value = -math.inf
    local_values = []
    total_evals = 0
    for theta0 in starts:
        theta, value, evals = _ascend(problem, theta0, inner_tol)
        total_evals += evals
        local_values.append(value)
        if value > best_value + 1e-12:
            best_value = value
            best_theta = theta

    law = _law_from_theta(problem, best_theta)
    spec, value, info = inner_min_channel(
        law, problem, tol=min(inner_tol, 1e-9), full_output=True
    )
    finite = [v for v in local_values if math.isfinite(v)]
    diagnostics = {
        "restarts": len(starts),
        "local_values": sorted(finite, reverse=True),
        "nonconcave": bool(finite and max(finite) - min(finite) > 1e-6),
        "inner_iterations": info["iterations"],
        "inner_gap": info["gap"],
        "value_evaluations": total_evals,
        "reeval_discrepancy": abs(value - best_value),
    }
    if "subset" in info:
        diagnostics["weakest_subset"] = list(info["subset"])
    if lower is not None:
        # the lifted lower-L law is one of the starts, so the best value
        # found here cannot fall below the lower-L value by more than the
        # lift perturbation
        diagnostics["lower_l_value"] = lower.value
    if problem.d1_cap is not None:
        diagnostics["embedding_cost"] = law.embedding_cost(problem)
    return GameSolution(
        value=value, input_law=law, worst_channel=spec, diagnostics=diagnostics
    )


def solve_capacity_simple(problem: GameProblem, **kw) -> GameSolution:
    """Same game with the single-user payoff I(X_1;Y|S,W)."""
    return solve_capacity(replace(problem, objective="simple"), **kw)
