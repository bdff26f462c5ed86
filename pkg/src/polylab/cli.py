"""Experiment configuration, orchestration and report emission.

    polylab <command> --config <file> [--noise-seed N] [--out PATH] [--threads N]

The noise seed is resolved as: ``--noise-seed`` flag, then the
``POLYLAB_NOISE_SEED`` environment variable, then the config file.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, hermite, kernels, polymer
from .noise import VirtualNoiseField

COMMANDS = ("kernel-table", "bound", "phase", "clt", "mgf", "hermite-check", "yn-decay",
            "second-moment", "collision")
SEED_ENV = "POLYLAB_NOISE_SEED"

SCHEMAS = {
    "kernel-table": ["r", "V"],
    "phase": ["beta", "T", "log_m_hat_over_T", "ess", "noise_seed"],
    "clt": ["T", "n_index", "moment", "std_err", "gaussian_target"],
    "mgf": ["T", "lambda_norm", "mgf", "std_err", "target"],
    "yn-decay": ["T", "scaled_Yn", "std_err"],
    "second-moment": ["T", "estimate", "std_err"],
    "collision": ["T", "estimate", "std_err"],
}

# per-command defaults for fields left unset
_COMMAND_DEFAULTS = {
    "kernel-table": {},
    "bound": {"n_paths": 20000},
    "phase": {"T": 32.0, "beta_frac_list": [0.25, 5.0], "n_paths": 2000, "n_noise_seeds": 50},
    "clt": {"T_list": [4.0, 16.0, 64.0], "beta_frac": 0.25, "n_paths": 20000},
    "mgf": {"T_list": [4.0, 16.0, 64.0], "beta_frac": 0.25, "n_paths": 20000},
    "hermite-check": {"n_index": [2, 0, 0]},
    "yn-decay": {"T_list": [4.0, 16.0, 64.0], "beta_frac": 0.25, "n_paths": 20000, "n_index": [1, 0, 0]},
    "second-moment": {"T_list": [8.0], "beta_frac": 0.3, "n_pairs": 100000},
    "collision": {"T_list": [2.0, 4.0, 8.0, 16.0, 32.0], "n_pairs": 100000},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    d: int = 3
    K: float = 1.0
    h: float = 0.25
    dt: float = 0.05
    T: float | None = None
    T_list: list | None = None
    beta_frac: float | None = None
    beta_abs: float | None = None
    beta_frac_list: list | None = None
    beta_abs_list: list | None = None
    n_paths: int | None = None
    n_noise_seeds: int = 1
    n_pairs: int | None = None
    noise_seed: int = 0
    path_seed_start: int = 0
    antithetic: bool = False
    chunk_size: int = 256
    n_radii: int = 512
    n_index: list | None = None
    moments: list | None = None
    lambdas: list | None = None
    output_path: str | None = None
    notes: list = field(default_factory=list, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "notes"}

    def echo(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    # derived quantities -----------------------------------------------------------

    def horizons(self) -> list[float]:
        raw = self.T_list if self.T_list is not None else ([self.T] if self.T is not None else [])
        return [_round_horizon(t, self.dt)[0] for t in raw]

    def betas(self) -> list[float]:
        if self.beta_abs_list is not None:
            return [float(b) for b in self.beta_abs_list]
        if self.beta_abs is not None:
            return [float(self.beta_abs)]
        fracs = self.beta_frac_list if self.beta_frac_list is not None else (
            [self.beta_frac] if self.beta_frac is not None else [])
        if not fracs:
            return []
        bound = analysis.default_bound(self.K, self.d, self.n_radii).beta_lower_bound
        return [float(f) * bound for f in fracs]

    def multi_index(self, n) -> tuple:
        n = list(n)
        if len(n) < self.d:
            n = n + [0] * (self.d - len(n))
        if len(n) != self.d:
            raise ConfigError(f"multi-index {n} longer than d={self.d}")
        return tuple(int(v) for v in n)


def _round_horizon(T, dt):
    n = max(1, int(round(T / dt)))
    return n * dt, n


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "notes"}
_INT = {"d", "n_paths", "n_noise_seeds", "n_pairs", "noise_seed", "path_seed_start", "chunk_size", "n_radii"}
_FLOAT = {"K", "h", "dt", "T", "beta_frac", "beta_abs"}
_FLOAT_LIST = {"T_list", "beta_frac_list", "beta_abs_list"}


def _coerce(name, value):
    if value is None:
        if name == "command" or _FIELDS[name].default is not None:
            raise ConfigError(f"{name}: null not allowed")
        return None
    if name in _INT:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if name in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if name in _FLOAT_LIST:
        if not isinstance(value, list) or not value or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{name}: expected a nonempty list of numbers")
        return [float(v) for v in value]
    if name == "antithetic":
        if not isinstance(value, bool):
            raise ConfigError("antithetic: expected true/false")
        return value
    if name in ("n_index",):
        if not isinstance(value, list) or not all(isinstance(v, int) and v >= 0 for v in value):
            raise ConfigError(f"{name}: expected a list of nonnegative integers")
        return list(value)
    if name in ("moments", "lambdas"):
        if not isinstance(value, list) or not value or not all(isinstance(v, list) for v in value):
            raise ConfigError(f"{name}: expected a nonempty list of lists")
        return [list(v) for v in value]
    if name in ("command", "output_path"):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string")
        return value
    raise ConfigError(f"unhandled key {name}")


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {cfg.command!r}; expected one of {', '.join(COMMANDS)}")
    if cfg.d < 1:
        raise ConfigError("d: must be >= 1")
    for name in ("K", "h", "dt"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name}: must be positive")
    if cfg.h > cfg.K / 2:
        raise ConfigError(f"h: constraint h <= K/2 violated (h={cfg.h}, K={cfg.K})")
    for name in ("n_paths", "n_noise_seeds", "n_pairs", "chunk_size"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise ConfigError(f"{name}: must be >= 1")
    if cfg.n_radii < 32:
        raise ConfigError("n_radii: must be >= 32")
    if cfg.T is not None and not cfg.T > 0:
        raise ConfigError("T: must be positive")
    if cfg.T_list is not None:
        if any(not t > 0 for t in cfg.T_list):
            raise ConfigError("T_list: entries must be positive")
        eff = [_round_horizon(t, cfg.dt)[1] for t in cfg.T_list]
        if any(b <= a for a, b in zip(eff, eff[1:])):
            raise ConfigError("T_list: must be strictly increasing after rounding to the dt grid")
    given = [k for k in ("beta_frac", "beta_abs", "beta_frac_list", "beta_abs_list") if getattr(cfg, k) is not None]
    if len(given) > 1:
        raise ConfigError(f"beta: give only one of {', '.join(given)}")
    for k in given:
        v = getattr(cfg, k)
        if any(b < 0 for b in (v if isinstance(v, list) else [v])):
            raise ConfigError(f"{k}: must be nonnegative")
    if any(k.startswith("beta_frac") for k in given) and cfg.d < 3:
        raise ConfigError("beta_frac: the Green-function bound needs d >= 3; use beta_abs")
    if cfg.antithetic and cfg.n_paths is not None and cfg.n_paths % 2:
        raise ConfigError("n_paths: must be even when antithetic is set")
    if cfg.command in ("collision", "second-moment") and cfg.T_list and min(cfg.T_list) < (
            2 if cfg.command == "collision" else 0):
        raise ConfigError("T_list: collision window needs T >= 2")


def _rounding_notes(cfg: ExperimentConfig) -> list[str]:
    notes = []
    raw = cfg.T_list if cfg.T_list is not None else ([cfg.T] if cfg.T is not None else [])
    for t in raw:
        eff, n = _round_horizon(t, cfg.dt)
        if abs(eff - t) > 1e-9 * max(1.0, t):
            notes.append(f"T={t:g} rounded to {n}*{cfg.dt:g} = {eff:.12g}")
    return notes


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if "command" not in data:
        raise ConfigError("command: missing")
    kwargs = {k: _coerce(k, v) for k, v in data.items()}
    command = kwargs["command"]
    for k, v in _COMMAND_DEFAULTS.get(command, {}).items():
        if kwargs.get(k) is None:
            if k.startswith("beta") and any(kwargs.get(b) is not None for b in
                                             ("beta_frac", "beta_abs", "beta_frac_list", "beta_abs_list")):
                continue
            if k == "T" and kwargs.get("T_list") is not None:
                continue
            if k == "T_list" and kwargs.get("T") is not None:
                continue
            kwargs[k] = v
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    cfg.notes = _rounding_notes(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON syntax error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}") from exc
    return config_from_dict(data)


# -- output -----------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(rows, schema, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(schema)
    for row in rows:
        if len(row) != len(schema):
            raise ValueError(f"row {row!r} does not match schema {schema}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def emit_csv(rows, schema, path, comments=()) -> Path:
    text = render_csv(rows, schema, comments)
    _atomic_write(Path(path), text)
    return Path(path)


def build_id() -> str:
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


@dataclass
class ExperimentReport:
    config: dict
    build_id: str
    wall_time: float
    output_path: str
    summary: dict
    notes: list

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


# -- experiments ------------------------------------------------------------------

def _setup(cfg):
    spec = kernels.make_mollifier(cfg.K, cfg.d)
    field_ = VirtualNoiseField(cfg.noise_seed, dt=cfg.dt, h=cfg.h, d=cfg.d)
    return spec, field_


def _path_seeds(cfg, n=None):
    n = cfg.n_paths if n is None else n
    if cfg.antithetic:
        return polymer.antithetic_seeds(cfg.path_seed_start, n // 2)
    return polymer.seed_range(cfg.path_seed_start, n)


def _single_beta(cfg):
    betas = cfg.betas()
    if len(betas) != 1:
        raise ConfigError(f"{cfg.command}: needs exactly one beta, got {len(betas)}")
    return betas[0]


def _gaussian_target(n):
    return float(hermite.gaussian_moment(n))


def _exp_kernel_table(cfg, threads):
    spec = kernels.make_mollifier(cfg.K, cfg.d)
    table = kernels.covariance_build(spec, cfg.n_radii)
    rows = list(zip(table.radii, table.values))
    header = f"K={format_value(cfg.K)} d={cfg.d} V0={format_value(table.v0)}"
    return rows, {"v0": table.v0, "n_radii": len(rows)}, [header]


def _exp_clt(cfg, threads):
    spec, field_ = _setup(cfg)
    beta = _single_beta(cfg)
    moments = [cfg.multi_index(m) for m in (cfg.moments or [[1], [2], [3], [4]])]
    batch = polymer.run_batch(field_, spec, _path_seeds(cfg), cfg.horizons(), threads=threads,
                              chunk_size=cfg.chunk_size)
    rows = []
    summary = {"beta": beta, "ess": {}}
    for c, T in enumerate(batch.horizons):
        ens = polymer.ensemble_from_batch(batch, beta, c, chunk_size=cfg.chunk_size)
        summary["ess"][format_value(T)] = ens.ess
        for n in moments:
            m, se = polymer.quenched_moment(ens, n, with_se=True, cluster=2 if cfg.antithetic else 1)
            rows.append((T, "-".join(map(str, n)), m, se, _gaussian_target(n)))
    return rows, summary, []


def _exp_mgf(cfg, threads):
    spec, field_ = _setup(cfg)
    beta = _single_beta(cfg)
    lambdas = [np.asarray(_pad(lam, cfg.d)) for lam in (cfg.lambdas or [[1.0]])]
    batch = polymer.run_batch(field_, spec, _path_seeds(cfg), cfg.horizons(), threads=threads,
                              chunk_size=cfg.chunk_size)
    rows = []
    for c, T in enumerate(batch.horizons):
        ens = polymer.ensemble_from_batch(batch, beta, c, chunk_size=cfg.chunk_size)
        for lam in lambdas:
            v, se = polymer.mgf_endpoint(ens, lam, with_se=True, cluster=2 if cfg.antithetic else 1)
            rows.append((T, float(np.linalg.norm(lam)), v, se, float(np.exp(0.5 * lam @ lam))))
    return rows, {"beta": beta}, []


def _pad(v, d):
    v = [float(x) for x in v]
    if len(v) > d:
        raise ConfigError(f"vector {v} longer than d={d}")
    return v + [0.0] * (d - len(v))


def _exp_phase(cfg, threads):
    spec, field_ = _setup(cfg)
    betas = cfg.betas()
    if not betas:
        raise ConfigError("phase: needs beta values")
    T = cfg.horizons()
    if len(T) != 1:
        raise ConfigError("phase: needs a single horizon T")
    seeds = cfg.noise_seed + np.arange(cfg.n_noise_seeds, dtype=np.int64)
    ps = _path_seeds(cfg)
    rows = []
    per_beta = {b: [] for b in betas}
    for s in seeds:
        batch = polymer.run_batch(field_.with_seed(int(s)), spec, ps, T, threads=threads,
                                  chunk_size=cfg.chunk_size)
        for b in betas:
            est = polymer.partition_from_log_weights(batch.log_weights(b), cfg.chunk_size)
            rows.append((b, batch.horizons[0], est.log_m_hat / batch.horizons[0], est.ess, int(s)))
            per_beta[b].append(est.log_m_hat / batch.horizons[0])
    summary = {format_value(b): {"median_log_m_over_T": float(np.median(v)),
                                 "frac_negative": float(np.mean(np.asarray(v) < 0))}
               for b, v in per_beta.items()}
    rows.sort(key=lambda r: (r[0], r[4]))
    return rows, summary, []


def _exp_hermite(cfg, threads):
    n = cfg.multi_index(cfg.n_index)
    co = hermite.hermite_coeffs(n)
    rows = [tuple(i) + (j, c) for i, j, c in co.rows()]
    schema = [f"i{k + 1}" for k in range(cfg.d)] + ["j", "coeff"]
    return rows, {"n_terms": len(rows)}, [], schema


def _exp_yn(cfg, threads):
    spec, field_ = _setup(cfg)
    beta = _single_beta(cfg)
    n = cfg.multi_index(cfg.n_index)
    curve = hermite.y_n_decay_curve(field_, spec, beta, cfg.dt, _path_seeds(cfg), n, cfg.horizons(),
                                    threads=threads, chunk_size=cfg.chunk_size)
    return curve, {"beta": beta, "n": list(n)}, []


def _exp_second_moment(cfg, threads):
    table = kernels.covariance_build(kernels.make_mollifier(cfg.K, cfg.d), cfg.n_radii)
    beta = _single_beta(cfg)
    rows = []
    for T in cfg.horizons():
        est = analysis.pair_second_moment_mc(table, beta, T, cfg.dt, cfg.n_pairs, seed=cfg.noise_seed)
        rows.append((T, est.estimate, est.std_err))
    return rows, {"beta": beta}, []


def _exp_collision(cfg, threads):
    rows = []
    for T in cfg.horizons():
        est = analysis.collision_probability(cfg.K, cfg.d, T, cfg.dt, cfg.n_pairs, seed=cfg.noise_seed)
        rows.append((T, est.estimate, est.std_err))
    slope = analysis.loglog_slope([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]) \
        if len(rows) > 1 and all(r[1] > 0 for r in rows) else (float("nan"), float("nan"))
    return rows, {"loglog_slope": slope[0], "slope_se": slope[1]}, []


def _exp_bound(cfg, threads):
    table = kernels.covariance_build(kernels.make_mollifier(cfg.K, cfg.d), cfg.n_radii)
    rep = analysis.bound_report(table)
    out = rep.as_dict()
    occ = analysis.occupation_oracle_mc(table, n_paths=cfg.n_paths, seed=cfg.noise_seed)
    out["g_mc"] = occ.estimate
    out["g_mc_std_err"] = occ.std_err
    out["g_mc_tail_bound"] = occ.tail_bound
    out["g_rel_diff"] = (occ.estimate - rep.green_integral) / rep.green_integral
    return out


_EXPERIMENTS = {
    "kernel-table": _exp_kernel_table,
    "clt": _exp_clt,
    "mgf": _exp_mgf,
    "phase": _exp_phase,
    "hermite-check": _exp_hermite,
    "yn-decay": _exp_yn,
    "second-moment": _exp_second_moment,
    "collision": _exp_collision,
}


def run(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    t0 = time.perf_counter()
    ext = "json" if config.command == "bound" else "csv"
    out = Path(config.output_path or f"{config.command}.{ext}")
    if config.command == "bound":
        if config.d < 3:
            raise ConfigError("bound: needs d >= 3")
        payload = _exp_bound(config, threads)
        payload["config"] = config.to_dict()
        _atomic_write(out, json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")
        summary = {k: payload[k] for k in ("g", "beta_lower_bound", "g_mc", "g_rel_diff")}
    else:
        res = _EXPERIMENTS[config.command](config, threads)
        rows, summary, header = res[:3]
        schema = res[3] if len(res) > 3 else SCHEMAS[config.command]
        emit_csv(rows, schema, out, comments=list(header) + [f"config: {config.echo()}"])
    return ExperimentReport(config=config.to_dict(), build_id=build_id(),
                            wall_time=time.perf_counter() - t0, output_path=str(out),
                            summary=summary, notes=list(config.notes))


def resolve_seed(cfg_seed: int, flag, env=None) -> int:
    env = os.environ if env is None else env
    if flag is not None:
        return int(flag)
    if env.get(SEED_ENV):
        try:
            return int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}: not an integer: {env[SEED_ENV]!r}") from exc
    return cfg_seed


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="polylab", description="Directed polymer experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config (default: {\"command\": <command>})")
    ap.add_argument("--noise-seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else json.dumps({"command": args.command})
        data = json.loads(text) if text.strip() else {}
        if isinstance(data, dict):
            data.setdefault("command", args.command)
            if data.get("command") != args.command:
                raise ConfigError(f"command: config says {data.get('command')!r} but CLI says {args.command!r}")
            data["noise_seed"] = resolve_seed(data.get("noise_seed", 0), args.noise_seed)
            if args.out:
                data["output_path"] = args.out
        cfg = config_from_dict(data) if isinstance(data, dict) else parse_config(text)
        report = run(cfg, threads=max(1, args.threads))
    except json.JSONDecodeError as exc:
        err = ConfigError(f"JSON syntax error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}")
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
