"""Command-line workbench tying the library together.

Subcommands: gen, attack, decode, simulate, capacity, exponent.  Every
command reads its settings from a JSON file (--config), writes artifacts
into --out, and prints a one-line summary.  Exit codes: 0 on success, 2
for configuration problems, 3 when a search or allocation budget is hit.

All emitted floats carry 9 significant digits and tables use a fixed
column order, so repeated runs with the same seed produce byte-identical
files regardless of worker count or machine load.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .codec import CodeParams, build_codebook, draw_host, draw_timeshare, read_codebook, write_codebook
from .collusion import ChannelSpec, apply_memoryless, interleave
from .decoders import DecodeConfig, guilt_indices, mpmi_decode, threshold_decode
from .errors import BudgetExceededError, ConfigError, FptraceError
from .games import (
    GameProblem,
    InputLaw,
    exponent_sweep,
    pseudo_sphere_packing,
    memoryless_exponent_variant,
    solve_capacity,
    solve_capacity_simple,
    solve_exponent_program,
)
from .simlab import ExperimentConfig, estimate, exponent_fit

__all__ = ["main"]

SIM_COLUMNS = (
    "n",
    "trials",
    "fp_count",
    "fp_rate",
    "fp_lo",
    "fp_hi",
    "miss_one_count",
    "miss_one_rate",
    "miss_one_lo",
    "miss_one_hi",
    "miss_all_count",
    "miss_all_rate",
    "miss_all_lo",
    "miss_all_hi",
    "resamples",
)

SWEEP_COLUMNS = ("K", "L", "R", "value", "restarts", "gap")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _round9(obj):
    """Recursive 9-significant-digit canonicalization for JSON output."""
    if isinstance(obj, float):
        return float(f"{obj:.9g}") if math.isfinite(obj) else _fmt(obj)
    if isinstance(obj, dict):
        return {str(k): _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round9(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _round9(obj.item())
    return obj


def _dump_json(payload, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(_round9(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _dump_csv(rows, columns, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _load_config(args) -> dict:
    if args.config is None:
        raise ConfigError("this command needs --config <json path>")
    try:
        with open(args.config) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _seed_of(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _params_from(cfg: dict) -> CodeParams:
    try:
        raw = dict(cfg["params"])
    except KeyError:
        raise ConfigError('config needs a "params" object') from None
    if "target_w_type" in raw:
        return CodeParams.from_dict(raw)
    for key in ("p_host", "d1", "target_x_given_sw"):
        if raw.get(key) is not None:
            raw[key] = np.asarray(raw[key], dtype=float)
    try:
        return CodeParams(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad code params: {exc}") from exc


def _attack_from(cfg: dict):
    spec = cfg.get("attack", "interleaving")
    if isinstance(spec, str):
        return spec
    return ChannelSpec.from_json(json.dumps(spec))


def _decode_config_from(cfg: dict) -> DecodeConfig:
    raw = dict(cfg.get("decode", {}))
    if "delta" not in raw:
        raise ConfigError('config needs decode.delta')
    try:
        return DecodeConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad decode config: {exc}") from exc


def _book_paths(out: Path) -> tuple:
    return out / "codebook.jsonl", out / "codebook_header.json", out / "codebook_key.json"


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args) -> int:
    cfg = _load_config(args)
    params = _params_from(cfg)
    seed = _seed_of(args, cfg)
    gen = rngmod.derive(seed, "cli", "gen")
    s = draw_host(params.p_host, params.n, gen)
    w = draw_timeshare(params, gen)
    cb = build_codebook(params, s, w, seed=int(gen.integers(0, 2**62)))
    rows_path, header_path, key_path = _book_paths(args.out)
    write_codebook(cb, rows_path, header_path, key_path)
    print(f"wrote {rows_path} ({params.num_users} users, n={params.n})")
    return 0


def _read_book(out: Path):
    rows_path, header_path, key_path = _book_paths(out)
    for p in (rows_path, header_path, key_path):
        if not p.exists():
            raise ConfigError(f"missing codebook artifact {p}; run gen first")
    return read_codebook(rows_path, header_path, key_path)


def _cmd_attack(args) -> int:
    cfg = _load_config(args)
    cb = _read_book(args.out)
    coalition = cfg.get("coalition")
    if not coalition:
        raise ConfigError('config needs a nonempty "coalition" list')
    coalition = sorted(int(m) for m in coalition)
    rows = np.stack([cb.row(m) for m in coalition])
    attack = _attack_from(cfg)
    gen = rngmod.derive(_seed_of(args, cfg), "cli", "attack")
    if isinstance(attack, str):
        result = interleave(rows, gen, x_size=cb.params.x_size)
    else:
        result = apply_memoryless(rows, attack, gen)
    payload = {
        "coalition": coalition,
        "y": result.y.tolist(),
        "marking_ok": bool(result.marking_ok),
        "distortion": result.distortion,
        "distortion_ok": result.distortion_ok,
        "realized": json.loads(result.realized.to_json()),
    }
    path = args.out / "pirate.json"
    _dump_json(payload, path)
    print(f"wrote {path} (marking_ok={result.marking_ok})")
    return 0


def _cmd_decode(args) -> int:
    cfg = _load_config(args)
    cb = _read_book(args.out)
    pirate_path = args.out / "pirate.json"
    if not pirate_path.exists():
        raise ConfigError(f"missing {pirate_path}; run attack first")
    with open(pirate_path) as fh:
        y = np.asarray(json.load(fh)["y"], dtype=np.int64)
    dcfg = _decode_config_from(cfg)
    decoder = mpmi_decode if cfg.get("decoder") == "mpmi" else threshold_decode
    outcome = decoder(cb, y, dcfg)
    guilt = guilt_indices(cb, y, outcome)
    payload = {
        "accused": list(outcome.accused),
        "best_k": outcome.best_k,
        "score": outcome.score,
        "exact": outcome.exact,
        "mode": outcome.mode,
        "delta": outcome.delta,
        "rate": outcome.rate,
        "evaluated": outcome.evaluated,
        "guilt": {
            "coalition_index": guilt.coalition_index,
            "per_user": guilt.per_user,
        },
    }
    path = args.out / "decode.json"
    _dump_json(payload, path)
    print(f"wrote {path} (accused={list(outcome.accused)})")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    coalition = cfg.get("coalition", 2)
    if isinstance(coalition, list):
        coalition = tuple(int(m) for m in coalition)
    exp = ExperimentConfig(
        params=_params_from(cfg),
        decode=_decode_config_from(cfg),
        attack=_attack_from(cfg),
        coalition=coalition,
        trials=int(cfg.get("trials", 1000)),
        seed=_seed_of(args, cfg),
        decoder=cfg.get("decoder", "threshold"),
        n_sweep=tuple(int(n) for n in cfg.get("n_sweep", ())),
    )
    report = estimate(exp, workers=args.workers)
    csv_path = args.out / "report.csv"
    _dump_csv(report.as_rows(), SIM_COLUMNS, csv_path)
    fits = {}
    for event in ("fp", "miss_one", "miss_all"):
        try:
            slope, stderr = report.exponents(event)
            fits[event] = {"slope": slope, "stderr": stderr}
        except FptraceError:
            fits[event] = None
    payload = {
        "seed": exp.seed,
        "trials": exp.trials,
        "points": report.as_rows(),
        "exponent_fits": fits,
        "seconds": [p.seconds for p in report.points],
    }
    _dump_json(payload, args.out / "report.json")
    print(f"wrote {csv_path} ({len(report.points)} blocklengths x {exp.trials} trials)")
    return 0


def _cmd_capacity(args) -> int:
    cfg = _load_config(args)
    if "problem" not in cfg:
        raise ConfigError('config needs a "problem" object')
    problem = GameProblem.from_dict(cfg["problem"])
    kw = {
        "seed": _seed_of(args, cfg),
        "restarts": int(cfg.get("restarts", 20)),
        "grid_resolution": int(cfg.get("grid_resolution", 16)),
    }
    solver = solve_capacity_simple if cfg.get("payoff") == "simple" else solve_capacity
    solution = solver(problem, **kw)
    path = args.out / "capacity.json"
    _dump_json(json.loads(solution.to_json()), path)
    print(f"wrote {path} (value={_fmt(solution.value)})")
    return 0


def _law_from(cfg: dict, problem: GameProblem) -> InputLaw:
    if "input_law" in cfg:
        return InputLaw.from_dict(cfg["input_law"])
    return InputLaw(
        p_w=np.full(problem.num_timeshare, 1.0 / problem.num_timeshare),
        p_x_given_sw=np.full(
            (problem.s_size, problem.num_timeshare, problem.x_size),
            1.0 / problem.x_size,
        ),
    )


def _cmd_exponent(args) -> int:
    cfg = _load_config(args)
    if "problem" not in cfg:
        raise ConfigError('config needs a "problem" object')
    problem = GameProblem.from_dict(cfg["problem"])
    seed = _seed_of(args, cfg)
    restarts = int(cfg.get("restarts", 6))

    if "rates" not in cfg:
        result = solve_exponent_program(
            float(cfg.get("rate", 0.0)),
            problem,
            seed=seed,
            restarts=int(cfg.get("restarts", 4)),
        )
        path = args.out / "exponent.json"
        _dump_json(
            {
                "value": result["value"],
                "input_law": result["input_law"].to_dict(),
                "history": result["history"],
                "converged": result["converged"],
            },
            path,
        )
        print(f"wrote {path} (value={_fmt(result['value'])})")
        return 0

    law = _law_from(cfg, problem)
    target = {}
    if "user" in cfg:
        target["user"] = int(cfg["user"])
    else:
        target["subset"] = tuple(cfg.get("subset", range(problem.coalition_size)))
    solver = memoryless_exponent_variant if cfg.get("memoryless") else pseudo_sphere_packing
    rates = sorted(float(r) for r in cfg["rates"])
    rows = []
    prev_val, prev_vec = math.inf, None
    for rate in rates:
        val, vec, info = solver(
            rate, law, problem, restarts=restarts, seed=seed,
            warm_start=prev_vec, full_output=True, **target,
        )
        if val > prev_val:  # rising-rate envelope: feasible sets only grow
            val, vec = prev_val, prev_vec
        prev_val, prev_vec = val, vec
        rows.append(
            {
                "K": problem.coalition_size,
                "L": problem.num_timeshare,
                "R": rate,
                "value": val,
                "restarts": restarts,
                "gap": info.get("lowest_info_gap", 0.0) or 0.0,
            }
        )
    path = args.out / "exponent_sweep.csv"
    _dump_csv(rows, SWEEP_COLUMNS, path)
    print(f"wrote {path} ({len(rows)} rates)")
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fptrace",
        description="fingerprinting codes, collusion attacks, decoders and game solvers",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("--config", type=Path, default=None, help="JSON settings file")
    common.add_argument("--out", type=Path, default=Path("."), help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("gen", _cmd_gen, "realize a codebook (rows, header, keyfile)"),
        ("attack", _cmd_attack, "forge a pirated copy from a coalition"),
        ("decode", _cmd_decode, "accuse users from a pirated copy"),
        ("simulate", _cmd_simulate, "Monte Carlo error-rate sweep"),
        ("capacity", _cmd_capacity, "max-min game value"),
        ("exponent", _cmd_exponent, "divergence exponent program"),
    ):
        p = sub.add_parser(name, parents=[common], help=doc)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
