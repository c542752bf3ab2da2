"""Codebook construction: exact compositions, keyed determinism, randomizers."""

import itertools
import math

import numpy as np
import pytest

from fptrace import rng as rngmod
from fptrace.codec import (
    CodeParams,
    apply_rm,
    apply_rp,
    build_codebook,
    check_embedding_distortion,
    draw_host,
    draw_timeshare,
    read_codebook,
    sample_type_class,
    tardos_codebook,
    write_codebook,
)
from fptrace.errors import ConfigError, InfeasibleError
from fptrace.types_core import JointType, Sequence, joint_type, quantize_pmf


def small_params(n=12, m=5, s_size=2, w_size=2, x_size=2, seed=0):
    rng = np.random.default_rng(seed)
    tx = rng.dirichlet(np.ones(x_size), size=(s_size, w_size))
    wt = quantize_pmf(rng.dirichlet(np.ones(w_size)), n)
    return CodeParams(
        n=n,
        num_users=m,
        s_size=s_size,
        x_size=x_size,
        w_size=w_size,
        p_host=rng.dirichlet(np.ones(s_size)),
        target_w_type=wt,
        target_x_given_sw=tx,
    )


def fresh_codebook(seed=123, **kw):
    params = small_params(**kw)
    s = draw_host(params.p_host, params.n, rngmod.derive(seed, "host"))
    w = draw_timeshare(params, rngmod.derive(seed, "w"))
    return build_codebook(params, s, w, seed)


# ---------------------------------------------------------------------------
# parameters


def test_rate_and_for_rate_agree():
    p = CodeParams(n=20, num_users=8)
    assert p.rate == pytest.approx(3 / 20)
    q = CodeParams.for_rate(20, 0.15)
    assert q.num_users == 8


def test_params_validation():
    with pytest.raises(ConfigError):
        CodeParams(n=10, num_users=4, p_host=np.array([0.5, 0.6]), s_size=2)
    with pytest.raises(ConfigError):
        CodeParams(n=10, num_users=4, target_x_given_sw=np.ones((1, 1, 2)))
    with pytest.raises(ConfigError):
        CodeParams(n=10, num_users=4, d1=np.zeros((1, 2)))  # cap missing


def test_params_dict_roundtrip():
    p = small_params()
    q = CodeParams.from_dict(p.to_dict())
    assert q.n == p.n and q.num_users == p.num_users
    assert np.allclose(q.target_x_given_sw, p.target_x_given_sw)
    assert np.array_equal(q.target_w_type.counts, p.target_w_type.counts)


# ---------------------------------------------------------------------------
# composition exactness


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_rows_have_exact_conditional_composition(seed):
    cb = fresh_codebook(seed=seed, n=24, m=6)
    p = cb.params
    comp = cb.cell_compositions()
    cid = cb.host * p.w_size + cb.effective_w()
    for m in range(p.num_users):
        x = cb.row(m)
        for s in range(p.s_size):
            for w in range(p.w_size):
                got = np.bincount(x[cid == s * p.w_size + w], minlength=p.x_size)
                assert np.array_equal(got, comp[s, w])


def test_cell_compositions_quantize_per_cell_targets():
    cb = fresh_codebook(seed=9, n=30)
    p = cb.params
    cid = cb.host * p.w_size + cb.effective_w()
    have = np.bincount(cid, minlength=p.s_size * p.w_size)
    comp = cb.cell_compositions().reshape(-1, p.x_size)
    flat = p.target_x_given_sw.reshape(-1, p.x_size)
    for c in np.flatnonzero(have):
        want = quantize_pmf(flat[c], int(have[c])).counts
        assert np.array_equal(comp[c], want)


def test_timeshare_respects_target_type():
    params = small_params(n=16, w_size=3)
    w = draw_timeshare(params, np.random.default_rng(0))
    assert np.array_equal(
        np.bincount(w, minlength=3), params.target_w_type.counts
    )


# ---------------------------------------------------------------------------
# keyed determinism


def test_codebook_is_reproducible_and_order_free():
    a = fresh_codebook(seed=77)
    b = fresh_codebook(seed=77)
    # row regeneration in scrambled order matches bulk materialization
    order = [3, 0, 4, 1, 2]
    for m in order:
        assert np.array_equal(a.row(m), b.rows()[m])
    assert np.array_equal(a.rows(), b.rows())


def test_different_seeds_differ():
    a = fresh_codebook(seed=1, n=40)
    b = fresh_codebook(seed=2, n=40)
    assert not np.array_equal(a.rows(), b.rows())


# ---------------------------------------------------------------------------
# uniformity over the type class


def test_single_cell_draws_are_uniform_over_class():
    # one cell, composition (2,2) over n=4: six arrangements, chi-square
    comp = np.array([2, 2])
    gen = rngmod.derive(42, "uniformity")
    hits = {}
    draws = 6000
    for _ in range(draws):
        x = tuple(sample_type_class(comp, gen))
        hits[x] = hits.get(x, 0) + 1
    assert len(hits) == 6
    expected = draws / 6
    chi2 = sum((c - expected) ** 2 / expected for c in hits.values())
    assert chi2 < 25.7  # dof=5, far tail


def test_conditional_sampler_validates_cell_totals():
    with pytest.raises(ConfigError):
        sample_type_class(
            np.array([[1, 1], [1, 0]]),  # cell 1 prescribes 1 symbol for 2 slots
            np.random.default_rng(0),
            cond_seq=np.array([0, 0, 1, 1]),
        )


# ---------------------------------------------------------------------------
# randomizers


def test_apply_rp_roundtrip_and_row_relabeling():
    cb = fresh_codebook(seed=5)
    m = cb.params.num_users
    perm = np.array([2, 0, 1, 4, 3])
    shuffled = apply_rp(cb, perm=perm)
    for u in range(m):
        assert np.array_equal(shuffled.row(u), cb.row(perm[u]))
    back = apply_rp(shuffled, perm=np.argsort(perm))
    assert np.array_equal(back.rows(), cb.rows())


def test_apply_rp_draws_uniform_permutation():
    cb = fresh_codebook(seed=6)
    out = apply_rp(cb, rng=np.random.default_rng(0))
    assert sorted(out.rp_perm.tolist()) == list(range(cb.params.num_users))


def test_apply_rm_identity_is_noop():
    cb = fresh_codebook(seed=8)
    same = apply_rm(cb, perm=np.arange(cb.params.n))
    assert np.array_equal(same.effective_w(), cb.effective_w())
    assert np.array_equal(same.rows(), cb.rows())


def test_apply_rm_preserves_composition_and_type_invariance():
    cb = fresh_codebook(seed=11, n=20)
    p = cb.params
    gen = rngmod.derive(99, "rm")
    out = apply_rm(cb, rng=gen)
    # rows still carry the exact composition against (host, effective_w)
    cid = out.host * p.w_size + out.effective_w()
    comp = out.cell_compositions().reshape(-1, p.x_size)
    x = out.row(0)
    for c in range(comp.shape[0]):
        got = np.bincount(x[cid == c], minlength=p.x_size)
        assert np.array_equal(got, comp[c])
    # scores built from joint types are invariant under a common relabeling
    # of positions, which is what makes the letter permutation transparent
    y = rngmod.derive(1, "y").integers(0, 2, p.n)
    pi = rngmod.derive(2, "pi").permutation(p.n)
    base = joint_type(
        [
            Sequence.of(x, p.x_size),
            Sequence.of(y, 2),
            Sequence.of(out.host, p.s_size),
            Sequence.of(out.effective_w(), p.w_size),
        ]
    )
    permuted = joint_type(
        [
            Sequence.of(x[pi], p.x_size),
            Sequence.of(y[pi], 2),
            Sequence.of(out.host[pi], p.s_size),
            Sequence.of(out.effective_w()[pi], p.w_size),
        ]
    )
    assert np.array_equal(base.counts, permuted.counts)


def test_apply_rm_composes():
    cb = fresh_codebook(seed=13)
    n = cb.params.n
    p1 = np.random.default_rng(1).permutation(n)
    p2 = np.random.default_rng(2).permutation(n)
    once = apply_rm(apply_rm(cb, perm=p1), perm=p2)
    w_eff = cb.timeshare[np.argsort(p1)][np.argsort(p2)]
    assert np.array_equal(once.effective_w(), w_eff)


# ---------------------------------------------------------------------------
# distortion budget


def test_infeasible_distortion_raises():
    # hamming cost, cap 0: any nonzero mark mass away from the host breaks it
    params = CodeParams(
        n=8,
        num_users=3,
        s_size=2,
        x_size=2,
        target_x_given_sw=np.broadcast_to(
            np.array([0.5, 0.5]), (2, 1, 2)
        ).copy(),
        d1=np.array([[0.0, 1.0], [1.0, 0.0]]),
        distortion_cap=0.0,
    )
    s = np.zeros(8, dtype=int)
    w = np.zeros(8, dtype=int)
    with pytest.raises(InfeasibleError):
        build_codebook(params, s, w, seed=0)


def test_feasible_distortion_passes_and_matches_check():
    params = CodeParams(
        n=10,
        num_users=2,
        s_size=2,
        x_size=2,
        target_x_given_sw=np.broadcast_to(np.array([0.8, 0.2]), (2, 1, 2)).copy(),
        d1=np.array([[0.0, 1.0], [0.0, 1.0]]),  # cost of printing symbol 1
        distortion_cap=0.35,
    )
    s = np.array([0] * 5 + [1] * 5)
    w = np.zeros(10, dtype=int)
    cb = build_codebook(params, s, w, seed=3)
    x = cb.row(0)
    value, ok = check_embedding_distortion(s, x, params.d1, params.distortion_cap)
    assert ok
    assert value == pytest.approx(np.mean(x == 1))


def test_check_embedding_distortion_flags_violation():
    d1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    value, ok = check_embedding_distortion(
        np.array([0, 0, 1, 1]), np.array([1, 1, 1, 1]), d1, 0.25
    )
    assert value == 0.5
    assert not ok


# ---------------------------------------------------------------------------
# Tardos baseline


def test_tardos_point_mass_one_is_all_ones():
    w, rows = tardos_codebook(4, 50, np.random.default_rng(0), density=1.0)
    assert np.all(w == 1.0)
    assert np.all(rows == 1)


def test_tardos_bias_densities():
    gen = np.random.default_rng(123)
    w_u, rows_u = tardos_codebook(200, 400, gen, density="uniform")
    assert 0.45 < w_u.mean() < 0.55
    # conditional column means track the bias
    err = np.abs(rows_u.mean(axis=0) - w_u)
    assert err.mean() < 0.05
    w_a, _ = tardos_codebook(10, 4000, gen, density="arcsine")
    assert np.all((w_a > 0) & (w_a < 1))
    assert 0.45 < w_a.mean() < 0.55
    # arcsine piles mass near the edges: more than uniform would
    assert np.mean((w_a < 0.1) | (w_a > 0.9)) > 0.15


def test_tardos_rejects_bad_density():
    with pytest.raises(ConfigError):
        tardos_codebook(2, 4, np.random.default_rng(0), density="bogus")
    with pytest.raises(ConfigError):
        tardos_codebook(2, 4, np.random.default_rng(0), density=1.5)


# ---------------------------------------------------------------------------
# persistence


def test_codebook_file_roundtrip(tmp_path):
    cb = apply_rm(
        apply_rp(fresh_codebook(seed=21), rng=rngmod.derive(21, "rp")),
        rng=rngmod.derive(21, "rm"),
    )
    rows = tmp_path / "code.jsonl"
    header = tmp_path / "code.json"
    key = tmp_path / "key.json"
    write_codebook(cb, rows, header, key)
    back = read_codebook(rows, header, key)
    assert np.array_equal(back.rows(), cb.rows())
    assert np.array_equal(back.effective_w(), cb.effective_w())
    # seed never leaks into the public header
    import json as _json

    public = _json.loads(header.read_text())
    assert "seed" not in public
    assert public["seed_fingerprint"] != str(cb.seed)


def test_codebook_reader_rejects_tampering(tmp_path):
    cb = fresh_codebook(seed=31)
    rows = tmp_path / "code.jsonl"
    header = tmp_path / "code.json"
    key = tmp_path / "key.json"
    write_codebook(cb, rows, header, key)
    lines = rows.read_text().splitlines()
    first = lines[0].replace('"x": [', '"x": [', 1)
    import json as _json

    rec = _json.loads(lines[0])
    rec["x"][0] = 1 - rec["x"][0]
    lines[0] = _json.dumps(rec)
    rows.write_text("\n".join(lines) + "\n")
    with pytest.raises(ConfigError):
        read_codebook(rows, header, key)


def test_codebook_reader_rejects_wrong_keyfile(tmp_path):
    a = fresh_codebook(seed=41)
    b = fresh_codebook(seed=42)
    write_codebook(a, tmp_path / "a.jsonl", tmp_path / "a.json", tmp_path / "a.key")
    write_codebook(b, tmp_path / "b.jsonl", tmp_path / "b.json", tmp_path / "b.key")
    with pytest.raises(ConfigError):
        read_codebook(tmp_path / "a.jsonl", tmp_path / "a.json", tmp_path / "b.key")


def test_draw_host_matches_law():
    p = np.array([0.2, 0.8])
    s = draw_host(p, 20000, np.random.default_rng(3))
    assert abs(np.mean(s == 1) - 0.8) < 0.02
