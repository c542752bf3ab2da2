"""Brute-force lattice oracles for the two-user games.

Everything here recomputes game values from first principles on dense
parameter grids, deliberately sharing no code with the solvers under test.
"""

import numpy as np


def _h(p):
    p = np.clip(p, 1e-300, 1.0)
    return -p * np.log2(p)


def fair_rows_grid(y_size, step=1e-3):
    """All pmfs over y on a barycentric lattice of the given step."""
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    if y_size == 2:
        return np.column_stack([ticks, 1.0 - ticks])
    if y_size == 3:
        a, b = np.meshgrid(ticks, ticks, indexing="ij")
        keep = a + b <= 1.0 + 1e-12
        a, b = a[keep], b[keep]
        return np.column_stack([a, b, 1.0 - a - b])
    raise ValueError("grid oracle covers y_size 2 and 3")


def min_fair_marking_payoff(q_pair, y_size, step=1e-3):
    """Exhaustive minimum of (1/2) I(X_1 X_2; Y) over fair marking channels.

    ``q_pair`` is the 2x2 coalition input pmf (binary fingerprints).  The
    channel is pinned to copy on constant pairs and shares one row across
    the mixed orbit, so the free parameters are exactly that row.
    """
    rows = fair_rows_grid(y_size, step)  # (G, Y)
    q00, q01, q10, q11 = q_pair[0, 0], q_pair[0, 1], q_pair[1, 0], q_pair[1, 1]
    qo = q01 + q10
    delta0 = np.zeros(y_size)
    delta0[0] = 1.0
    delta1 = np.zeros(y_size)
    delta1[1] = 1.0
    py = q00 * delta0[None, :] + q11 * delta1[None, :] + qo * rows
    lpy = np.log2(np.clip(py, 1e-300, None))
    lr = np.log2(np.clip(rows, 1e-300, None))
    val = (
        -q00 * lpy[:, 0]
        - q11 * lpy[:, 1]
        + qo * np.sum(np.where(rows > 0, rows * (lr - lpy), 0.0), axis=1)
    )
    i = int(np.argmin(val))
    return 0.5 * float(val[i]), rows[i]


def reduced_exponent_grid(rate, step=1e-3):
    """Exhaustive full-coalition exponent for binary fair marking at the
    uniform input.

    Symmetry and the marginal pins collapse the tilted joint to the two
    off-diagonal masses (b0, b1) routed to each output; the divergence
    against the induced reference is then purely the inter-user dependence
    1 - H2(b0 + b1).
    """
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    b0, b1 = np.meshgrid(ticks, ticks, indexing="ij")
    keep = b0 + b1 <= 1.0 + 1e-12
    b0, b1 = b0[keep], b1[keep]
    b = b0 + b1
    a = (1.0 - b) / 2.0
    cost = 1.0 - (_h(b) + _h(1.0 - b))
    py0 = a + b0
    h_all = 2 * _h(a) + _h(b0) + b0 + _h(b1) + b1
    info = 2.0 + _h(py0) + _h(1.0 - py0) - h_all
    feasible = info <= 2.0 * rate + 1e-9
    if not np.any(feasible):
        return np.inf
    return float(np.min(cost[feasible]))
