"""Randomized fingerprint code construction.

A codebook is a secret matrix of user rows, each drawn uniformly from the
conditional type class pinned down by the realized host sequence s and the
time-sharing sequence w: within every (s, w) cell the row carries an exact
prescribed composition of mark symbols.  Two secret randomizers can be
layered on top: a user-index permutation (who owns which row) and a letter
permutation (which hides the position structure; it enters scoring as a
permuted effective time-sharing sequence).  Rows are generated lazily from a
keyed per-row stream, so a codebook is reproducible from (params, seed)
alone and generation order never matters.

The Tardos construction (i.i.d. biased binary columns) is included as the
classical baseline with a continuous per-position bias in place of the
type-class time-sharing sequence.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, InfeasibleError
from .types_core import JointType, quantize_pmf

__all__ = [
    "CodeParams",
    "Codebook",
    "draw_host",
    "draw_timeshare",
    "sample_type_class",
    "build_codebook",
    "apply_rp",
    "apply_rm",
    "tardos_codebook",
    "check_embedding_distortion",
    "write_codebook",
    "read_codebook",
]


@dataclass(frozen=True)
class CodeParams:
    """Static description of a fingerprint code.

    Exactly one of ``num_users``/``rate`` pins the other: given M users the
    rate is log2(M)/n, given a rate the user count is ceil(2^(n*rate)).
    ``target_x_given_sw[s, w]`` is the mark distribution the rows must hit
    (after per-cell quantization) inside each (host, time-share) cell.
    ``d1``/``distortion_cap`` bound the average embedding distortion between
    host and marked copy; None disables the check.
    """

    n: int
    num_users: int
    s_size: int = 1
    x_size: int = 2
    w_size: int = 1
    k_nom: int = 2
    p_host: np.ndarray | None = None
    target_w_type: JointType | None = None
    target_x_given_sw: np.ndarray | None = None
    d1: np.ndarray | None = None
    distortion_cap: float | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.num_users < 1:
            raise ConfigError("need n >= 1 and num_users >= 1")
        if min(self.s_size, self.x_size, self.w_size) < 1:
            raise ConfigError("alphabet sizes must be positive")
        p_host = self.p_host
        if p_host is None:
            p_host = np.full(self.s_size, 1.0 / self.s_size)
        p_host = np.asarray(p_host, dtype=float)
        if p_host.shape != (self.s_size,) or abs(p_host.sum() - 1) > 1e-9:
            raise ConfigError("p_host must be a pmf over the host alphabet")
        object.__setattr__(self, "p_host", p_host)

        wt = self.target_w_type
        if wt is None:
            wt = quantize_pmf(np.full(self.w_size, 1.0 / self.w_size), self.n)
        if wt.axes != (self.w_size,) or wt.n != self.n:
            raise ConfigError("target_w_type must be a type over W with total n")
        object.__setattr__(self, "target_w_type", wt)

        tx = self.target_x_given_sw
        if tx is None:
            tx = np.full((self.s_size, self.w_size, self.x_size), 1.0 / self.x_size)
        tx = np.asarray(tx, dtype=float)
        if tx.shape != (self.s_size, self.w_size, self.x_size):
            raise ConfigError("target_x_given_sw must have shape (S, W, X)")
        if np.any(tx < 0) or np.max(np.abs(tx.sum(axis=2) - 1)) > 1e-9:
            raise ConfigError("target_x_given_sw rows must be pmfs")
        object.__setattr__(self, "target_x_given_sw", tx)

        if self.d1 is not None:
            d1 = np.asarray(self.d1, dtype=float)
            if d1.shape != (self.s_size, self.x_size):
                raise ConfigError("d1 table must have shape (S, X)")
            object.__setattr__(self, "d1", d1)
            if self.distortion_cap is None:
                raise ConfigError("d1 table given without a distortion cap")

    @property
    def rate(self) -> float:
        return float(np.log2(self.num_users)) / self.n

    @classmethod
    def for_rate(cls, n: int, rate: float, **kw) -> "CodeParams":
        return cls(n=n, num_users=int(np.ceil(2.0 ** (n * rate))), **kw)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "num_users": self.num_users,
            "s_size": self.s_size,
            "x_size": self.x_size,
            "w_size": self.w_size,
            "k_nom": self.k_nom,
            "p_host": list(map(float, self.p_host)),
            "target_w_type": [int(c) for c in self.target_w_type.counts],
            "target_x_given_sw": self.target_x_given_sw.ravel().tolist(),
            "d1": None if self.d1 is None else self.d1.ravel().tolist(),
            "distortion_cap": self.distortion_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodeParams":
        wt = JointType(
            (int(d["w_size"]),), np.asarray(d["target_w_type"], dtype=np.int64)
        )
        tx = np.asarray(d["target_x_given_sw"], dtype=float).reshape(
            int(d["s_size"]), int(d["w_size"]), int(d["x_size"])
        )
        d1 = d.get("d1")
        if d1 is not None:
            d1 = np.asarray(d1, dtype=float).reshape(int(d["s_size"]), int(d["x_size"]))
        return cls(
            n=int(d["n"]),
            num_users=int(d["num_users"]),
            s_size=int(d["s_size"]),
            x_size=int(d["x_size"]),
            w_size=int(d["w_size"]),
            k_nom=int(d.get("k_nom", 2)),
            p_host=np.asarray(d["p_host"], dtype=float),
            target_w_type=wt,
            target_x_given_sw=tx,
            d1=d1,
            distortion_cap=d.get("distortion_cap"),
        )


def draw_host(p_host: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Memoryless host sequence, one symbol per position."""
    p_host = np.asarray(p_host, dtype=float)
    return rng.choice(len(p_host), size=n, p=p_host).astype(np.int64)


def draw_timeshare(params: CodeParams, rng: np.random.Generator) -> np.ndarray:
    """Time-sharing sequence drawn uniformly from its target type class."""
    return sample_type_class(params.target_w_type.counts, rng)


def sample_type_class(
    composition: np.ndarray,
    rng: np.random.Generator,
    cond_seq: np.ndarray | None = None,
) -> np.ndarray:
    """Uniform draw from a (conditional) type class.

    Unconditional: ``composition[u]`` counts of symbol u; the draw is a
    uniformly random arrangement of that multiset.  Conditional:
    ``composition[c, u]`` prescribes the multiset inside each cell of
    ``cond_seq``; each cell is arranged independently and uniformly.  Row c
    totals must equal the number of positions carrying cell value c.
    """
    comp = np.asarray(composition, dtype=np.int64)
    if cond_seq is None:
        if comp.ndim != 1 or comp.min() < 0:
            raise ConfigError("composition must be 1-D nonnegative counts")
        block = np.repeat(np.arange(comp.size), comp)
        return rng.permutation(block)
    cond_seq = np.asarray(cond_seq, dtype=np.int64)
    if comp.ndim != 2:
        raise ConfigError("conditional composition must be 2-D (cells x symbols)")
    have = np.bincount(cond_seq, minlength=comp.shape[0])
    if have.size > comp.shape[0] or np.any(comp.sum(axis=1) != have[: comp.shape[0]]):
        raise ConfigError("cell totals do not match the conditioning sequence")
    out = np.empty(cond_seq.size, dtype=np.int64)
    for c in np.flatnonzero(have):
        block = np.repeat(np.arange(comp.shape[1]), comp[c])
        out[cond_seq == c] = rng.permutation(block)
    return out


@dataclass(frozen=True)
class Codebook:
    """Realized fingerprint code: host, time-sharing key, lazy user rows.

    Row m is reproduced on demand from the keyed stream (seed, "row", j)
    with j the prototype index held by user m, so any subset of rows can be
    regenerated deterministically and in any order.  ``rp_perm[m]`` is that
    prototype index (identity when no user permutation was applied);
    ``rm_perm`` is the secret letter permutation, exposed to scoring only
    through :meth:`effective_w`.
    """

    params: CodeParams
    host: np.ndarray
    timeshare: np.ndarray
    seed: int
    rp_perm: np.ndarray | None = None
    rm_perm: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        host = np.asarray(self.host, dtype=np.int64)
        w = np.asarray(self.timeshare, dtype=np.int64)
        n = self.params.n
        if host.shape != (n,) or w.shape != (n,):
            raise ConfigError("host/timeshare length must equal the blocklength")
        if host.size and (host.min() < 0 or host.max() >= self.params.s_size):
            raise ConfigError("host symbols out of range")
        if w.size and (w.min() < 0 or w.max() >= self.params.w_size):
            raise ConfigError("timeshare symbols out of range")
        tw = np.bincount(w, minlength=self.params.w_size)
        if not np.array_equal(tw, self.params.target_w_type.counts):
            raise ConfigError("timeshare sequence is not in the target type class")
        host.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "host", host)
        object.__setattr__(self, "timeshare", w)

    # -- derived geometry ---------------------------------------------------

    def effective_w(self) -> np.ndarray:
        """Time-sharing sequence as seen by row generation and scoring.

        The letter permutation relocates the prototype's position structure;
        equivalently the rows are cell-matched to w pulled back through the
        inverse permutation.  Scoring against (host, effective_w) is exactly
        scoring the prototype rows against the permuted pirate sequence.
        """
        if self.rm_perm is None:
            return self.timeshare
        return self.timeshare[np.argsort(self.rm_perm)]

    def _cells(self) -> tuple[np.ndarray, np.ndarray]:
        """(cell id per position, per-cell mark compositions)."""
        key = "cells"
        if key not in self._cache:
            p = self.params
            cid = self.host * p.w_size + self.effective_w()
            have = np.bincount(cid, minlength=p.s_size * p.w_size)
            comp = np.zeros((p.s_size * p.w_size, p.x_size), dtype=np.int64)
            flat_target = p.target_x_given_sw.reshape(-1, p.x_size)
            for c in np.flatnonzero(have):
                comp[c] = quantize_pmf(flat_target[c], int(have[c])).counts
            self._check_distortion(comp)
            self._cache[key] = (cid, comp)
        return self._cache[key]

    def _check_distortion(self, comp: np.ndarray) -> None:
        p = self.params
        if p.d1 is None:
            return
        per_cell = comp.reshape(p.s_size, p.w_size, p.x_size)
        cost = float(np.einsum("swx,sx->", per_cell, p.d1)) / p.n
        if cost > p.distortion_cap + 1e-12:
            raise InfeasibleError(
                f"target composition costs {cost:.6g} > cap {p.distortion_cap:.6g}; "
                "every row would violate the embedding budget"
            )

    # -- rows -----------------------------------------------------------------

    def row(self, m: int) -> np.ndarray:
        """Codeword of user m (applies the user-index permutation)."""
        if not 0 <= m < self.params.num_users:
            raise ConfigError(f"user index {m} out of range")
        proto = m if self.rp_perm is None else int(self.rp_perm[m])
        cid, comp = self._cells()
        gen = rngmod.derive(self.seed, "row", proto)
        return sample_type_class(comp, gen, cond_seq=cid)

    def rows(self) -> np.ndarray:
        """All user rows as an (M, n) matrix (cached)."""
        if "rows" not in self._cache:
            mat = np.stack([self.row(m) for m in range(self.params.num_users)])
            mat.setflags(write=False)
            self._cache["rows"] = mat
        return self._cache["rows"]

    def cell_compositions(self) -> np.ndarray:
        """Realized per-(s, w) mark compositions, shape (S, W, X)."""
        _, comp = self._cells()
        return comp.reshape(self.params.s_size, self.params.w_size, self.params.x_size)


def build_codebook(
    params: CodeParams, s: np.ndarray, w: np.ndarray, seed: int
) -> Codebook:
    """Construct the codebook for a realized host and time-share sequence.

    Raises InfeasibleError if the quantized per-cell composition already
    breaks the embedding distortion cap (then no draw could succeed).
    """
    cb = Codebook(params=params, host=s, timeshare=w, seed=int(seed))
    cb._cells()  # force composition + distortion feasibility check
    return cb


def apply_rp(
    cb: Codebook,
    rng: np.random.Generator | None = None,
    perm: np.ndarray | None = None,
) -> Codebook:
    """Layer a secret user-index permutation over a codebook.

    ``perm`` maps user -> prototype row.  With a generator, a uniform
    permutation is drawn.  Applying a permutation and then its inverse
    restores the original assignment.
    """
    m = cb.params.num_users
    if perm is None:
        if rng is None:
            raise ConfigError("apply_rp needs a generator or an explicit permutation")
        perm = rng.permutation(m)
    perm = _checked_perm(perm, m)
    old = cb.rp_perm if cb.rp_perm is not None else np.arange(m)
    return replace(cb, rp_perm=old[perm], _cache={})


def apply_rm(
    cb: Codebook,
    rng: np.random.Generator | None = None,
    perm: np.ndarray | None = None,
) -> Codebook:
    """Layer a secret letter permutation over a codebook.

    The identity permutation leaves the codebook unchanged.  Scoring code
    must pair rows and pirate output with :meth:`Codebook.effective_w`.
    """
    n = cb.params.n
    if perm is None:
        if rng is None:
            raise ConfigError("apply_rm needs a generator or an explicit permutation")
        perm = rng.permutation(n)
    perm = _checked_perm(perm, n)
    old = cb.rm_perm if cb.rm_perm is not None else np.arange(n)
    return replace(cb, rm_perm=perm[old], _cache={})


def _checked_perm(perm: np.ndarray, size: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (size,) or not np.array_equal(np.sort(perm), np.arange(size)):
        raise ConfigError("not a permutation of the expected size")
    return perm


# ---------------------------------------------------------------------------
# Tardos baseline


def tardos_codebook(
    num_users: int,
    n: int,
    rng: np.random.Generator,
    density: str | float | Callable[[np.random.Generator, int], np.ndarray] = "arcsine",
) -> tuple[np.ndarray, np.ndarray]:
    """Binary code with i.i.d. per-position biases.

    Position i gets a secret bias w_i from ``density`` ("arcsine" for the
    classical 1/(pi*sqrt(w(1-w))) law, "uniform", a constant in [0, 1], or a
    callable); user bits are independent Bernoulli(w_i).  Returns
    (biases, rows).
    """
    if isinstance(density, str):
        if density == "uniform":
            w = rng.random(n)
        elif density == "arcsine":
            w = np.sin(0.5 * np.pi * rng.random(n)) ** 2
        else:
            raise ConfigError(f"unknown bias density {density!r}")
    elif callable(density):
        w = np.asarray(density(rng, n), dtype=float)
        if w.shape != (n,):
            raise ConfigError("bias callable must return one bias per position")
    else:
        val = float(density)
        if not 0.0 <= val <= 1.0:
            raise ConfigError("constant bias must lie in [0, 1]")
        w = np.full(n, val)
    rows = (rng.random((num_users, n)) < w).astype(np.int64)
    return w, rows


def check_embedding_distortion(
    s: np.ndarray, x: np.ndarray, d1: np.ndarray, cap: float
) -> tuple[float, bool]:
    """Average per-letter embedding cost of a marked copy, and cap check."""
    s = np.asarray(s, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    if s.shape != x.shape:
        raise ConfigError("host and marked copy must have equal length")
    d1 = np.asarray(d1, dtype=float)
    value = float(d1[s, x].mean())
    return value, value <= cap + 1e-12


# ---------------------------------------------------------------------------
# persistence: public row file + header, secret keyfile


def _seed_fingerprint(seed: int) -> str:
    return hashlib.sha256(str(int(seed)).encode()).hexdigest()[:16]


def write_codebook(cb: Codebook, rows_path, header_path, key_path) -> None:
    """Write rows as JSONL, public header and secret keyfile as JSON.

    The header carries the code parameters and a fingerprint of the seed
    (for pairing with the right keyfile); the seed itself, the permutations
    and the host/time-share sequences live only in the keyfile.
    """
    header = {
        "format": "fptrace-codebook-v1",
        "params": cb.params.to_dict(),
        "seed_fingerprint": _seed_fingerprint(cb.seed),
    }
    with open(header_path, "w") as fh:
        json.dump(header, fh, indent=1)
        fh.write("\n")
    with open(rows_path, "w") as fh:
        for m in range(cb.params.num_users):
            fh.write(json.dumps({"m": m, "x": cb.row(m).tolist()}))
            fh.write("\n")
    key = {
        "seed": int(cb.seed),
        "host": cb.host.tolist(),
        "timeshare": cb.timeshare.tolist(),
        "rp_perm": None if cb.rp_perm is None else cb.rp_perm.tolist(),
        "rm_perm": None if cb.rm_perm is None else cb.rm_perm.tolist(),
    }
    with open(key_path, "w") as fh:
        json.dump(key, fh)
        fh.write("\n")


def read_codebook(rows_path, header_path, key_path) -> Codebook:
    """Rebuild a codebook from its three files, validating consistency."""
    with open(header_path) as fh:
        header = json.load(fh)
    if header.get("format") != "fptrace-codebook-v1":
        raise ConfigError("unrecognized codebook header format")
    with open(key_path) as fh:
        key = json.load(fh)
    if _seed_fingerprint(key["seed"]) != header["seed_fingerprint"]:
        raise ConfigError("keyfile does not match codebook header")
    params = CodeParams.from_dict(header["params"])
    cb = Codebook(
        params=params,
        host=np.asarray(key["host"], dtype=np.int64),
        timeshare=np.asarray(key["timeshare"], dtype=np.int64),
        seed=int(key["seed"]),
        rp_perm=None if key["rp_perm"] is None else np.asarray(key["rp_perm"]),
        rm_perm=None if key["rm_perm"] is None else np.asarray(key["rm_perm"]),
    )
    with open(rows_path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if not np.array_equal(cb.row(int(rec["m"])), np.asarray(rec["x"])):
                raise ConfigError(f"row {rec['m']} does not match the keyed stream")
    return cb
