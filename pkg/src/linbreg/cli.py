"""Command-line entry point: ``linbreg <command> [flags]``.

Settings come from built-in defaults, then an optional JSON file given with
``--config``, then explicit flags, later sources winning.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import bench
from .linop import load_matrix, make_dense
from .problems import add_noise, gen_instance, preset_name, table_presets
from .solver import (MaxItersOnly, RelResidual, SolveParams, StdResidual, solve,
                     stopping_to_dict)

logger = logging.getLogger("linbreg")

OUT_ENV = "LINBREG_OUT"
DEFAULT_OUT = "linbreg_out"
COMMANDS = ("solve", "table1", "table2", "dynrange", "sinusoid", "verify")


@dataclass
class RunConfig:
    command: str
    matrix: str = "gaussian"
    n: int | None = None
    m: int | None = None
    kappa: int | None = None
    mu: float | None = None
    delta: str | float = "auto"
    stopping: str = "rel"
    tol: float | None = None
    sigma: float | None = None
    snr: float | None = None
    kick: bool = True
    kick_tol: float | None = None
    max_iters: int | None = None
    trials: int = 10
    seed: int = 0
    out: str | None = None
    formats: tuple[str, ...] = ("csv", "json")
    presets: tuple[str, ...] = ()
    fraction: float = 0.4
    instances: int | None = None
    subsequence: bool = False
    mu_limit: bool = False
    workers: int = 1
    matrix_file: str | None = None
    f_file: str | None = None
    u_file: str | None = None

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        for name in ("n", "m", "kappa", "max_iters", "instances"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n is not None and self.m is not None and self.m > self.n:
            raise ValueError(f"need m <= n, got m={self.m}, n={self.n}")
        if self.kappa is not None and self.n is not None and self.kappa > self.n:
            raise ValueError("kappa cannot exceed n")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.delta != "auto" and not float(self.delta) > 0:
            raise ValueError("delta must be positive or 'auto'")
        if self.stopping not in ("rel", "std", "max_iters"):
            raise ValueError("stopping must be rel, std or max_iters")
        if self.stopping == "std" and self.sigma is None and self.command == "solve":
            raise ValueError("std stopping needs --sigma")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not set(self.formats) <= {"csv", "json"} or not self.formats:
            raise ValueError("formats must be a non-empty subset of {csv, json}")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if (self.matrix_file is None) != (self.f_file is None):
            raise ValueError("--matrix-file and --f-file go together")
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    @property
    def delta_value(self) -> float | None:
        return None if self.delta == "auto" else float(self.delta)


_FIELDS = {f.name for f in fields(RunConfig)}


def _positive_float_or_auto(text: str):
    if text == "auto":
        return text
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linbreg",
                                description="Linearized Bregman l1 solver and experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", default=S, help="JSON file mirroring the flag names")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--out", default=S, help=f"output directory (default ${OUT_ENV} or "
                                                 f"./{DEFAULT_OUT})")
    common.add_argument("--formats", default=S, help="comma list from csv,json")
    common.add_argument("--mu", type=float, default=S)
    common.add_argument("--delta", type=_positive_float_or_auto, default=S)
    common.add_argument("--tol", type=float, default=S)
    common.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    common.add_argument("--kick", dest="kick", action="store_true", default=S)
    common.add_argument("--no-kick", dest="kick", action="store_false", default=S)
    common.add_argument("--kick-tol", dest="kick_tol", type=float, default=S)
    common.add_argument("--workers", type=int, default=S)

    inst = argparse.ArgumentParser(add_help=False)
    inst.add_argument("--matrix", choices=("gaussian", "dct"), default=S)
    inst.add_argument("--n", type=int, default=S)
    inst.add_argument("--m", type=int, default=S)
    inst.add_argument("--kappa", type=int, default=S)
    inst.add_argument("--trials", type=int, default=S)

    s = sub.add_parser("solve", parents=[common, inst], help="solve one instance")
    s.add_argument("--stopping", choices=("rel", "std", "max_iters"), default=S)
    s.add_argument("--sigma", type=float, default=S, help="noise std added to f; also the "
                                                          "threshold of std stopping")
    s.add_argument("--matrix-file", dest="matrix_file", default=S, help=".npy or .csv")
    s.add_argument("--f-file", dest="f_file", default=S, help=".npy or .csv measurements")
    s.add_argument("--u-file", dest="u_file", default=S, help="reference signal for rel_err")

    for name, helptext in (("table1", "noise-free efficiency table"),
                           ("table2", "noisy recovery table")):
        t = sub.add_parser(name, parents=[common, inst], help=helptext)
        t.add_argument("--preset", dest="presets", action="append", default=S,
                       help="name or prefix such as dct-4000 (repeatable)")
        if name == "table2":
            t.add_argument("--snr", type=float, default=S, help="target SNR in dB")

    d = sub.add_parser("dynrange", parents=[common], help="high dynamic range recovery")
    d.add_argument("--n", type=int, default=S)
    d.add_argument("--m", type=int, default=S)
    d.add_argument("--kappa", type=int, default=S)
    d.add_argument("--sigma", type=float, default=S)

    sn = sub.add_parser("sinusoid", parents=[common], help="two-tone recovery in noise")
    sn.add_argument("--n", type=int, default=S)
    sn.add_argument("--fraction", type=float, default=S)
    sn.add_argument("--sigma", type=float, default=S)
    sn.add_argument("--snr", type=float, default=S)
    sn.add_argument("--trials", type=int, default=S)

    v = sub.add_parser("verify", parents=[common], help="oracle checks on small instances")
    v.add_argument("--instances", type=int, default=S)
    v.add_argument("--subsequence", action="store_true", default=S)
    v.add_argument("--mu-limit", dest="mu_limit", action="store_true", default=S)
    return p


def load_config(argv) -> RunConfig:
    """Parse argv (and any --config file) into a validated RunConfig."""
    ns = vars(build_parser().parse_args(argv))
    ns.pop("verbose", None)
    command = ns.pop("command")
    merged: dict = {}
    path = ns.pop("config", None)
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        data.pop("command", None)
        unknown = set(data) - _FIELDS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(data)
    merged.update(ns)
    if isinstance(merged.get("formats"), str):
        merged["formats"] = tuple(x for x in merged["formats"].split(",") if x)
    for key in ("formats", "presets"):
        if key in merged:
            merged[key] = tuple(merged[key])
    return RunConfig(command=command, **merged).validate()


def _write(cfg: RunConfig, stem: str, payload: dict, csv_writer=None) -> list[Path]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in cfg.formats:
        path = out / f"{stem}.json"
        bench.write_json(path, {**payload, "config": _config_dict(cfg)})
        written.append(path)
    if "csv" in cfg.formats and csv_writer is not None:
        path = out / f"{stem}.csv"
        csv_writer(path)
        written.append(path)
    return written


def _config_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("out")
    d["formats"] = list(cfg.formats)
    d["presets"] = list(cfg.presets)
    return d


def _select_presets(cfg: RunConfig) -> list[tuple]:
    if cfg.presets:
        chosen = []
        for want in cfg.presets:
            hits = [p for p in table_presets()
                    if preset_name(p) == want or preset_name(p).startswith(want + "-")]
            if not hits:
                raise ValueError(f"no preset matches {want!r}")
            chosen.extend(h for h in hits if h not in chosen)
        return chosen
    if cfg.n is not None:
        if cfg.m is None or cfg.kappa is None:
            raise ValueError("a custom configuration needs --n, --m and --kappa")
        return [(cfg.matrix, cfg.n, cfg.m, cfg.kappa)]
    return table_presets()


def _params(cfg: RunConfig, stopping, mu_default: float, max_iters_default: int) -> SolveParams:
    kw = {} if cfg.kick_tol is None else {"kick_tol": cfg.kick_tol}
    return SolveParams(mu=cfg.mu if cfg.mu is not None else mu_default, delta=cfg.delta_value,
                       kick=cfg.kick, stopping=stopping,
                       max_iters=cfg.max_iters if cfg.max_iters is not None else
                       max_iters_default, **kw)


def _load_vector(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        return np.atleast_1d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    return np.load(path)


def cmd_solve(cfg: RunConfig) -> int:
    tol = cfg.tol if cfg.tol is not None else 1e-5
    if cfg.stopping == "std":
        stopping = StdResidual(cfg.sigma)
    elif cfg.stopping == "max_iters":
        stopping = MaxItersOnly()
    else:
        stopping = RelResidual(tol)
    params = _params(cfg, stopping, 1.0, 10_000)
    u_bar = None
    if cfg.matrix_file is not None:
        op = make_dense(load_matrix(cfg.matrix_file))
        f = _load_vector(cfg.f_file)
        if cfg.u_file is not None:
            u_bar = _load_vector(cfg.u_file)
        instance_cfg = {"matrix_file": cfg.matrix_file, "f_file": cfg.f_file}
    else:
        n = cfg.n or 1000
        m = cfg.m or 300
        kappa = cfg.kappa or 50
        inst = gen_instance(cfg.matrix, n, m, kappa, "uniform", cfg.seed)
        if cfg.sigma:
            inst = add_noise(inst, cfg.sigma, bench.trial_seed(cfg.seed, 0, 0, 1))
        op, f, u_bar = inst.op, inst.f_obs, inst.u_bar
        instance_cfg = inst.config
    res = solve(op, f, params)
    if u_bar is not None:
        res.rel_err = float(np.linalg.norm(res.u - u_bar) / np.linalg.norm(u_bar))
    payload = {"experiment": "solve", "instance": instance_cfg,
               "stopping": stopping_to_dict(stopping), **res.to_dict(include_history=False)}
    _write(cfg, "solve", {**payload, "u": res.u.tolist(),
                          "history": res.to_dict()["history"]}, res.write_history_csv)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _print_table(stats) -> None:
    for row in bench.table_rows(stats):
        snr = f" snr={row['snr_db_mean']:.2f}" if row["snr_db_mean"] != "" else ""
        print(f"{row['config']:>20}{snr} iter={row['iter_mean']:.1f}+-{row['iter_std']:.1f} "
              f"(max {row['iter_max']:.0f}) err={row['err_mean']:.2e} "
              f"time={row['time_mean']:.3f}s maxiters={row['max_iters_hits']}")


def cmd_table(cfg: RunConfig) -> int:
    presets = _select_presets(cfg)
    common = {"trials": cfg.trials, "seed0": cfg.seed, "kick": cfg.kick,
              "kick_tol": cfg.kick_tol, "workers": cfg.workers}
    if cfg.command == "table1":
        settings = {"mu": cfg.mu if cfg.mu is not None else 1.0,
                    "tol": cfg.tol if cfg.tol is not None else 1e-5,
                    "max_iters": cfg.max_iters or 10_000}
        records, stats = bench.run_table1(presets, **common, **settings)
    else:
        settings = {"mu": cfg.mu if cfg.mu is not None else bench.TABLE2_MU,
                    "target_snr_db": cfg.snr if cfg.snr is not None else 25.0,
                    "max_iters": cfg.max_iters or bench.TABLE2_MAX_ITERS}
        records, stats = bench.run_table2(presets, **common, **settings)
    payload = bench.summary_payload(cfg.command, records, stats, **settings)
    _write(cfg, cfg.command, payload, lambda p: bench.write_table_csv(p, stats))
    if "csv" in cfg.formats:
        bench.write_records_csv(cfg.out_dir / f"{cfg.command}_trials.csv", records)
    _print_table(stats)
    return 0


def cmd_dynrange(cfg: RunConfig) -> int:
    res = bench.run_dynrange(n=cfg.n or 4000, kappa=cfg.kappa or 80,
                             mu=cfg.mu if cfg.mu is not None else 1e10,
                             tol=cfg.tol if cfg.tol is not None else 1e-11,
                             sigma=cfg.sigma, seed=cfg.seed, m=cfg.m or bench.DYNRANGE_M,
                             kick_tol=cfg.kick_tol, max_iters=cfg.max_iters or 5000)
    rec = res.record
    payload = bench.summary_payload("dynrange", [rec], residual_history=res.residual_history,
                                    error_history=res.error_history)

    def history_csv(path):
        with open(path, "w") as fh:
            fh.write("k,rel_residual,rel_err\n")
            for k, (r, e) in enumerate(zip(res.residual_history, res.error_history), 1):
                fh.write(f"{k},{r!r},{e!r}\n")

    _write(cfg, "dynrange", payload, history_csv)
    print(f"iterations={rec.iterations} kicks={rec.kicks} stop={rec.stop_reason} "
          f"rel_err={rec.rel_err:.3e} final_rel_residual={res.residual_history[-1]:.3e}")
    return 0


def cmd_sinusoid(cfg: RunConfig) -> int:
    if cfg.sigma is not None and cfg.snr is not None:
        raise ValueError("give --sigma or --snr, not both")
    snr = cfg.snr if cfg.sigma is None and cfg.snr is not None else None
    if cfg.sigma is None and snr is None:
        snr = -5.0
    rep = bench.run_sinusoid(n=cfg.n or 2000, fraction=cfg.fraction, sigma=cfg.sigma,
                             trials=cfg.trials, seed0=cfg.seed, target_snr_db=snr,
                             mu=cfg.mu if cfg.mu is not None else bench.SINUSOID_MU,
                             max_iters=cfg.max_iters or 1000, workers=cfg.workers)
    _write(cfg, "sinusoid", {"experiment": "sinusoid", **rep.to_dict()},
           lambda p: bench.write_records_csv(p, rep.trials))
    print(f"frequency sets recovered in {rep.matches}/{len(rep.trials)} trials "
          f"(rate {rep.match_rate:.2f})")
    return 0


ORACLE_TOL = 1e-6


def cmd_verify(cfg: RunConfig) -> int:
    payload: dict = {"experiment": "verify"}
    ok = True
    checks = bench.verify_oracle(cfg.instances or 50, cfg.seed, kick_tol=cfg.kick_tol)
    worst = max(c.deviation for c in checks)
    payload["oracle"] = {"max_deviation": worst, "passed": worst <= ORACLE_TOL,
                         "checks": [asdict(c) for c in checks]}
    ok &= worst <= ORACLE_TOL
    print(f"solver vs oracle: max relative deviation {worst:.3e} over {len(checks)} instances")
    if cfg.subsequence:
        subs = bench.verify_subsequence(cfg.instances or 10, cfg.seed, kick_tol=cfg.kick_tol,
                                        mu=cfg.mu if cfg.mu is not None else 50.0)
        n_ok = sum(c.subsequence for c in subs)
        payload["subsequence"] = [{**asdict(c), "ratio": c.ratio} for c in subs]
        ok &= n_ok == len(subs)
        print(f"subsequence property held on {n_ok}/{len(subs)} instances; "
              f"iteration ratios {[round(c.ratio, 2) for c in subs]}")
    if cfg.mu_limit:
        reps = bench.verify_mu_limit(cfg.instances or 20, cfg.seed)
        n_ok = sum(r.passed for r in reps)
        payload["mu_limit"] = {"passed": n_ok, "total": len(reps),
                               "final_distances": [r.final_distance for r in reps]}
        ok &= n_ok == len(reps)
        print(f"mu-limit audit passed on {n_ok}/{len(reps)} instances")
    payload["passed"] = bool(ok)
    _write(cfg, "verify", payload)
    return 0 if ok else 1


HANDLERS = {"solve": cmd_solve, "table1": cmd_table, "table2": cmd_table,
            "dynrange": cmd_dynrange, "sinusoid": cmd_sinusoid, "verify": cmd_verify}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.DEBUG if ("-v" in argv or "--verbose" in argv)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(argv)
    except SystemExit as exc:  # argparse already printed its message
        return int(exc.code or 0)
    except (OSError, ValueError, TypeError) as exc:
        print(f"linbreg: error: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[cfg.command](cfg)
    except (OSError, ValueError, TypeError, FloatingPointError, KeyError) as exc:
        print(f"linbreg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
