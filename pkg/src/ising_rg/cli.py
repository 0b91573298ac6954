"""Batch driver: ``ising-rg <subcommand> [--config FILE] [overrides]``.

Configuration files are YAML (JSON is accepted, being a YAML subset)::

    geometry: torus:64x64:a=0.0625
    interaction: {J: 1.0, lam: 0.1}     # couplings default to the two diagonal pairs
    beta: critical                      # or a number
    seed: 0
    out: results/
    format: csv                         # or jsonl
    params: {...}                       # subcommand specific, see DEFAULT_PARAMS

Points are physical coordinates centred on the domain, ``|x_i| < a L_i / 2``.

Every run writes into ``out``:

* ``<subcommand>.csv`` or ``<subcommand>.jsonl``, one record per measurement,
  each carrying ``schema_version``;
* ``config.json``, the fully resolved configuration (loading it back
  reproduces the same resolved configuration);
* ``metadata.json`` with the config echo, library versions, timings, flags
  and the exit status;
* with ``--plot``, PNG figures rendered from the same records.

All files are written atomically.  Exit codes: 0 success, 1 invalid input,
2 a non-convergence flag or numerical failure, 3 I/O failure.  The
``ISING_RG_THREADS`` environment variable caps numba and BLAS threads.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time

SCHEMA_VERSION = "ising-rg/1"
THREADS_ENV = "ISING_RG_THREADS"
Z_RESIDUAL_LIMIT = 2.0  # stderr units

EXIT_OK, EXIT_VALIDATION, EXIT_FLAGGED, EXIT_IO = 0, 1, 2, 3

SUBCOMMANDS = ("exact-corr", "scaling-scan", "mc-run", "betac-scan", "z-estimate",
               "rg-flow", "rg-spectrum", "edge-profile")

DEFAULT_GEOMETRY = {
    "exact-corr": "torus:4x4:a=1",
    "scaling-scan": None,
    "mc-run": "torus:16x16:a=1",
    "betac-scan": None,
    "z-estimate": "torus:48x48:a=1",
    "rg-flow": None,
    "rg-spectrum": None,
    "edge-profile": "cylinder:64x64:a=0.015625",
}

_SCHEDULE = {"burn_in": 1000, "thin": 1, "n_samples": 10000, "algorithm": "auto"}

DEFAULT_PARAMS = {
    "exact-corr": {"bonds": [[-1.0, 0.0, 1], [1.0, 0.0, 1]]},
    "scaling-scan": {"mode": "plane", "spacings": [0.125, 0.0625, 0.03125], "box": 8.0,
                     "l1": 1.0, "l2": 1.0, "observables": [[[0.0, 0.0, 1], [0.5, 0.0, 1]]],
                     "with_defect": False},
    "mc-run": dict(_SCHEDULE, separations=[1, 2, 4], checkpoint="chain.ckpt.json",
                   checkpoint_every=1000),
    "betac-scan": dict(_SCHEDULE, burn_in=2000, n_samples=40000, sizes=[16, 24, 32], betas=None,
                       window=0.015),
    "z-estimate": dict(_SCHEDULE, burn_in=2000, n_samples=200000, separations=[4, 8, 12],
                       reference="exact", betac_sizes=[16, 24, 32]),
    "rg-flow": {"order": "linear", "initial": [0.0, 0.0], "h_min": -20, "N": 0, "forcing": 0.0,
                "tune": False},
    "rg-spectrum": {"max_n": 6, "verify": True, "L": 128, "depth": 3},
    "edge-profile": {"scale_offsets": [-2, -3], "top_mass": 1.0},
}


class ConfigError(ValueError):
    """Invalid configuration or override."""


# ----------------------------------------------------------------- config
def _apply_thread_limit() -> None:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return
    try:
        n = int(value)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be positive")
    for var in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def load_config_file(path) -> dict:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    return data


def resolve_config(raw: dict, subcommand: str | None = None) -> dict:
    """Fill defaults and normalize types; idempotent on its own output."""
    from .geometry import LatticeGeometry
    from .lattice_exact import betac_exact
    from .model import Interaction

    raw = copy.deepcopy(raw)
    sub = subcommand or raw.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {sub!r}")
    if raw.get("subcommand") not in (None, sub):
        raise ConfigError(f"config is for {raw['subcommand']!r}, not {sub!r}")
    unknown = set(raw) - {"subcommand", "geometry", "interaction", "beta", "seed", "out", "format", "params"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")

    geometry = raw.get("geometry", DEFAULT_GEOMETRY[sub])
    if geometry is not None:
        geometry = LatticeGeometry.parse(str(geometry)).spec()

    inter = raw.get("interaction") or {}
    if not isinstance(inter, dict):
        raise ConfigError("interaction must be a mapping")
    J = float(inter.get("J", 1.0))
    lam = float(inter.get("lam", 0.0))
    if inter.get("couplings") in (None, "nnn"):
        interaction = Interaction.next_nearest_neighbor(lam, J)
    else:
        interaction = Interaction.from_dict({"J": J, "lam": lam, "couplings": inter["couplings"]})

    beta = raw.get("beta", "critical")
    if beta == "critical":
        if not interaction.is_free:
            beta = "critical"  # resolved at run time (z-estimate scans for it)
        else:
            beta = betac_exact()
    if beta != "critical":
        beta = float(beta)
        if not math.isfinite(beta) or beta < 0:
            raise ConfigError("beta must be a finite nonnegative number")

    seed = int(raw.get("seed", 0))
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    fmt = raw.get("format", "csv")
    if fmt == "json-lines":
        fmt = "jsonl"
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"unknown format {fmt!r}")

    params = dict(DEFAULT_PARAMS[sub])
    given = raw.get("params") or {}
    if not isinstance(given, dict):
        raise ConfigError("params must be a mapping")
    extra = set(given) - set(params)
    if extra:
        raise ConfigError(f"unknown params for {sub}: {sorted(extra)}")
    params.update(given)
    return {
        "subcommand": sub,
        "geometry": geometry,
        "interaction": interaction.to_dict(),
        "beta": beta,
        "seed": seed,
        "out": str(raw.get("out", "out")),
        "format": fmt,
        "params": json.loads(json.dumps(params)),
    }


def _parse_override(text: str):
    import yaml

    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def config_from_args(args) -> dict:
    raw = load_config_file(args.config) if args.config else {}
    if args.geometry is not None:
        raw["geometry"] = args.geometry
    if args.beta is not None:
        raw["beta"] = args.beta if args.beta == "critical" else float(args.beta)
    if args.lam is not None:
        raw.setdefault("interaction", {})
        raw["interaction"] = dict(raw["interaction"] or {}, lam=args.lam)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    if args.format is not None:
        raw["format"] = args.format
    for item in args.param or []:
        k, v = _parse_override(item)
        raw.setdefault("params", {})
        raw["params"] = dict(raw["params"] or {}, **{k: v})
    return resolve_config(raw, args.subcommand)


# ----------------------------------------------------------------- output
def _atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(value):
    import numpy as np

    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def render_records(records: list[dict], fmt: str) -> bytes:
    """CSV (union of keys as header, nested values JSON-encoded) or JSON lines."""
    rows = [dict(_jsonable(r), schema_version=SCHEMA_VERSION) for r in records]
    if fmt == "jsonl":
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows).encode()
    header = []
    for r in rows:
        header.extend(k for k in r if k not in header)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else ("" if v is None else v)
                         for k, v in r.items()})
    return buf.getvalue().encode()


def _versions() -> dict:
    from importlib import metadata

    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "matplotlib", "pyyaml"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


# ------------------------------------------------------------ subcommands
class Result:
    def __init__(self, records, flags=None, plot=None):
        self.records = records
        self.flags = list(flags or [])
        self.plot = plot


def _geometry(cfg):
    from .geometry import LatticeGeometry

    if cfg["geometry"] is None:
        raise ConfigError(f"{cfg['subcommand']} needs a geometry")
    return LatticeGeometry.parse(cfg["geometry"])


def _interaction(cfg):
    from .model import Interaction

    return Interaction.from_dict(cfg["interaction"])


def _free_beta(cfg) -> float:
    if not _interaction(cfg).is_free:
        raise ConfigError("exact evaluation needs lambda = 0")
    return float(cfg["beta"])


def _bonds(spec):
    from .geometry import BondObservable

    try:
        return [BondObservable((float(x1), float(x2)), int(j)) for x1, x2, j in spec]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bonds must be [x1, x2, j] triples: {exc}") from exc


def _schedule(p):
    from .montecarlo import Schedule

    return Schedule(int(p["burn_in"]), int(p["thin"]), int(p["n_samples"]), p["algorithm"])


def run_exact_corr(cfg) -> Result:
    from .lattice_exact import energy_correlation_exact

    g = _geometry(cfg)
    beta = _free_beta(cfg)
    bonds = _bonds(cfg["params"]["bonds"])
    value = energy_correlation_exact(g, beta, bonds)
    return Result([{"geometry": g.spec(), "points": [list(b.x) for b in bonds],
                    "directions": [b.j for b in bonds], "beta": beta, "value": value}])


def run_scaling_scan(cfg) -> Result:
    from .scaling import cylinder_plan, plane_plan, run_scaling_scan as scan

    p = cfg["params"]
    beta = _free_beta(cfg)
    configs = [_bonds(obs) for obs in p["observables"]]
    if p["mode"] == "plane":
        plan = plane_plan(configs, tuple(p["spacings"]), box=float(p["box"]), beta=beta)
    elif p["mode"] == "cylinder":
        plan = cylinder_plan(configs, float(p["l1"]), float(p["l2"]), tuple(p["spacings"]), beta=beta)
    else:
        raise ConfigError(f"unknown scaling mode {p['mode']!r}")
    reports = scan(plan, with_defect=bool(p["with_defect"]))
    records = [r for rep in reports for r in rep.to_records()]
    flags = [f"not converged: {rep.label}" for rep in reports if rep.flagged]
    return Result(records, flags, _plot_scaling)


def run_mc(cfg, out_dir: str) -> Result:
    import numpy as np

    from .montecarlo import (Chain, MCError, axis_correlation_estimates, axis_measurement,
                             split_seed)

    g = _geometry(cfg)
    if cfg["beta"] == "critical":
        raise ConfigError("mc-run at lambda != 0 needs an explicit beta")
    beta = float(cfg["beta"])
    p = cfg["params"]
    schedule = _schedule(p)
    seps = np.asarray(p["separations"], dtype=np.int64)
    if not g.is_torus:
        raise ConfigError("mc-run measures axis correlations and needs a torus")
    interaction = _interaction(cfg)
    ckpt = os.path.join(out_dir, p["checkpoint"]) if p["checkpoint"] else None
    series_path = ckpt + ".series.npy" if ckpt else None
    chain, rows = None, np.empty((0, len(seps) + 1))
    if ckpt and os.path.exists(ckpt):
        chain = Chain.load(ckpt)
        if chain.geometry != g or chain.beta != beta or chain.interaction != interaction:
            raise MCError("checkpoint does not match the requested run")
        rows = np.load(series_path)[: chain.samples]
        if len(rows) != chain.samples:
            raise MCError("measurement series shorter than the checkpoint")
    if chain is None:
        chain = Chain(interaction, g, beta, split_seed(cfg["seed"], 1)[0], schedule.algorithm)
    every = max(1, int(p["checkpoint_every"]))

    def save():
        # series first: on resume it is truncated to the chain's sample count
        buf = io.BytesIO()
        np.save(buf, rows[: chain.samples])
        _atomic_write_bytes(series_path, buf.getvalue())
        chain.save(ckpt)

    if chain.sweeps < schedule.burn_in:
        chain.sweep(schedule.burn_in - chain.sweeps)
    todo = max(0, schedule.n_samples - chain.samples)
    rows = np.concatenate([rows, np.empty((todo, len(seps) + 1))])
    while chain.samples < schedule.n_samples:
        chain.sweep(schedule.thin)
        corr, mean = axis_measurement(chain.spins2d, seps)
        rows[chain.samples, :-1] = corr
        rows[chain.samples, -1] = mean
        chain.samples += 1
        if ckpt and chain.samples % every == 0:
            save()
    if ckpt:
        save()
    rows = rows[: schedule.n_samples]
    ests = axis_correlation_estimates(rows[:, :-1], rows[:, -1], cfg["seed"])
    records = [dict(separation=int(r), **e.to_dict()) for r, e in zip(seps, ests)]
    return Result(records, plot=_plot_mc)


def run_betac_scan(cfg) -> Result:
    from .montecarlo import locate_betac

    p = cfg["params"]
    res = locate_betac(_interaction(cfg), tuple(p["sizes"]), cfg["seed"], p["betas"], _schedule(p),
                       window=float(p["window"]))
    records = [{"kind": "point", "L": L, "beta": b, "U": U, "dU": dU} for L, b, U, dU in res.table]
    records.append({"kind": "crossing", "betac": res.betac, "stderr": res.stderr,
                    "pairs": res.crossings})
    return Result(records, plot=_plot_binder)


def run_z_estimate(cfg) -> Result:
    from .montecarlo import locate_betac
    g = _geometry(cfg)
    p = cfg["params"]
    interaction = _interaction(cfg)
    records = []
    betac = cfg["beta"]
    if betac == "critical":
        res = locate_betac(interaction, tuple(p["betac_sizes"]), cfg["seed"])
        betac = res.betac
        records.append({"kind": "betac", "betac": res.betac, "stderr": res.stderr})
    from .montecarlo import estimate_Z

    est = estimate_Z(interaction, [g], float(betac), p["separations"], cfg["seed"], _schedule(p),
                     reference=p["reference"])
    for r, ratio, err, zs, res in zip(est.separations, est.ratios, est.ratio_stderr,
                                       est.per_separation_Z, est.residuals):
        records.append({"kind": "separation", "separation": r, "ratio": ratio, "ratio_stderr": err,
                        "Z_separation": zs, "residual": res})
    records.append({"kind": "fit", "Z": est.Z, "stderr": est.stderr, "betac": float(betac)})
    flags = [f"residual {res:.2f} stderr at separation {r}"
             for r, res in zip(est.separations, est.residuals) if abs(res) >= Z_RESIDUAL_LIMIT]
    return Result(records, flags, _plot_z)


def run_rg_flow(cfg) -> Result:
    from .rg import fine_tune, integrate_flow

    p = cfg["params"]
    lam = cfg["interaction"]["lam"]
    flags = []
    if p["tune"]:
        nu_star, state = fine_tune(lam, float(p["initial"][1]), int(p["h_min"]), int(p["N"]),
                                   p["order"], float(p["forcing"]))
        if state.escaped:
            flags.append("tuned trajectory escaped")
    else:
        state = integrate_flow(tuple(p["initial"]), p["order"], int(p["h_min"]), int(p["N"]), lam,
                               float(p["forcing"]))
    records = state.to_records()
    if p["tune"]:
        for r in records:
            r["nu_N_star"] = nu_star
    return Result(records, flags, _plot_flow)


def run_rg_spectrum(cfg) -> Result:
    from .rg import linearized_spectrum

    p = cfg["params"]
    out = linearized_spectrum(int(p["max_n"]), bool(p["verify"]), int(p["L"]), int(p["depth"]))
    records = [{"n": n, "eigenvalue": ev, "numerical": out["numerical"].get(n),
                "residual": out["residual"].get(n)} for n, ev in out["table"]]
    return Result(records)


def run_edge_profile(cfg) -> Result:
    from .rg import edge_coupling_profile
    from .rg.flow import geom_level

    g = _geometry(cfg)
    p = cfg["params"]
    N = geom_level(round(1.0 / g.a))
    # the fit is per unit lambda; the bare model reports the unit-strength profile
    lam = cfg["interaction"]["lam"] or 1.0
    records, flags = [], []
    for off in p["scale_offsets"]:
        h = N + int(off)
        e = edge_coupling_profile(g, h, lam, float(p["top_mass"]))
        for row, d, prof, res in zip(e["rows"], e["dist"], e["profile"], e["residual"]):
            records.append({"kind": "row", "h": h, "row": int(row), "dist": int(d), "profile": prof,
                            "bulk": e["bulk"], "residual": res})
        summary = {"kind": "fit", "h": h, "C": e["C"], "kappa": e["kappa"], "r2": e["r2"],
                   "flagged": e["flagged"]}
        summary.update({f"boundary_{k}": v for k, v in (e.get("boundary") or {}).items()})
        records.append(summary)
        if e["flagged"]:
            flags.append(f"edge fit R^2 {e['r2']:.3f} at h={h}")
    return Result(records, flags, _plot_edge)


# ------------------------------------------------------------------ plots
def _plot_scaling(records, ax):
    labels = dict.fromkeys(r["label"] for r in records if r["kind"] == "rung")
    for lab in labels:
        pts = [(r["a"], r["value"]) for r in records if r.get("label") == lab and r["kind"] == "rung"]
        ax.plot(*zip(*pts), "o-", label=lab)
    ax.set_xlabel("a")
    ax.set_ylabel("value")
    ax.legend(fontsize=6)


def _plot_mc(records, ax):
    ax.errorbar([r["separation"] for r in records], [r["mean"] for r in records],
                [r["stderr"] for r in records], fmt="o")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("separation")
    ax.set_ylabel("connected bond correlation")


def _plot_binder(records, ax):
    pts = [r for r in records if r["kind"] == "point"]
    for L in sorted({r["L"] for r in pts}):
        sub = [r for r in pts if r["L"] == L]
        ax.errorbar([r["beta"] for r in sub], [r["U"] for r in sub], [r["dU"] for r in sub],
                    fmt="o-", label=f"L={L}")
    ax.set_xlabel("beta")
    ax.set_ylabel("Binder cumulant")
    ax.legend()


def _plot_z(records, ax):
    seps = [r for r in records if r["kind"] == "separation"]
    ax.errorbar([r["separation"] for r in seps], [r["ratio"] for r in seps],
                [r["ratio_stderr"] for r in seps], fmt="o")
    fit = [r for r in records if r["kind"] == "fit"][0]
    ax.axhline(fit["Z"] ** 2, color="k", lw=0.8)
    ax.set_xlabel("separation")
    ax.set_ylabel("perturbed / reference")


def _plot_flow(records, ax):
    ax.plot([r["h"] for r in records], [r["nu"] for r in records], "o-", label="nu")
    ax.plot([r["h"] for r in records], [r["zeta"] for r in records], "s-", label="zeta")
    ax.set_xlabel("scale h")
    ax.legend()


def _plot_edge(records, ax):
    for h in sorted({r["h"] for r in records}):
        rows = [r for r in records if r["kind"] == "row" and r["h"] == h and r["residual"] != 0]
        ax.semilogy([r["dist"] for r in rows], [abs(r["residual"]) for r in rows], ".", label=f"h={h}")
    ax.set_xlabel("distance to boundary (rows)")
    ax.set_ylabel("|edge residual|")
    ax.legend()


def render_plot(result: Result, path: str) -> bool:
    if result.plot is None:
        return False
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    result.plot(_jsonable(result.records), ax)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    _atomic_write_bytes(path, buf.getvalue())
    return True


RUNNERS = {
    "exact-corr": run_exact_corr,
    "scaling-scan": run_scaling_scan,
    "mc-run": run_mc,
    "betac-scan": run_betac_scan,
    "z-estimate": run_z_estimate,
    "rg-flow": run_rg_flow,
    "rg-spectrum": run_rg_spectrum,
    "edge-profile": run_edge_profile,
}


# ------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ising-rg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON configuration file")
        p.add_argument("--geometry", help="e.g. torus:64x64:a=0.0625")
        p.add_argument("--beta", help="inverse temperature or 'critical'")
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "jsonl", "json-lines"))
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="override one subcommand parameter (value parsed as YAML)")
        p.add_argument("--plot", action="store_true", help="also render a PNG figure")
    return parser


def execute(cfg: dict, plot: bool = False) -> int:
    """Run a resolved configuration and write its artifacts; returns the exit code."""
    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write_bytes(os.path.join(out_dir, "config.json"),
                        json.dumps(cfg, indent=2, sort_keys=True).encode())
    start = time.perf_counter()
    runner = RUNNERS[cfg["subcommand"]]
    result = runner(cfg, out_dir) if runner is run_mc else runner(cfg)
    elapsed = time.perf_counter() - start
    stem = cfg["subcommand"]
    outputs = [f"{stem}.{cfg['format']}"]
    _atomic_write_bytes(os.path.join(out_dir, outputs[0]), render_records(result.records, cfg["format"]))
    if plot and render_plot(result, os.path.join(out_dir, f"{stem}.png")):
        outputs.append(f"{stem}.png")
    code = EXIT_FLAGGED if result.flags else EXIT_OK
    meta = {"schema_version": SCHEMA_VERSION, "config": cfg, "versions": _versions(),
            "timings": {"run_seconds": elapsed}, "flags": result.flags, "outputs": outputs,
            "exit_code": code, "threads": os.environ.get(THREADS_ENV)}
    _atomic_write_bytes(os.path.join(out_dir, "metadata.json"),
                        json.dumps(_jsonable(meta), indent=2, sort_keys=True).encode())
    for flag in result.flags:
        print(f"warning: {flag}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_limit()
        cfg = config_from_args(args)
        return execute(cfg, args.plot)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FLAGGED
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
