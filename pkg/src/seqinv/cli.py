"""Command line experiment runner.

Experiments are described by a flat JSON config; flags override file values.
Every CSV starts with ``#`` lines carrying the package version, a hash of the
config and the base seed, and is written atomically.

    seqinv oracle-table --config exp.json --out results/
    seqinv mc-risk --config exp.json --workers 8
    seqinv check key-lemma --trials 10000 --seed 1
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
from dataclasses import dataclass, field
import hashlib
import io
import json
import os
from pathlib import Path
import sys
import tempfile

import numpy as np

from . import __version__
from .adaptive import PEN_HAT_CONSTANT, PrefixTooShort, adaptive_estimate, check_condition_L
from .errors import ConfigError, DataError, IndexDomainError
from .estimator import estimate
from .model import (
    DEFAULT_J_CAP, OPERATOR_KINDS, SOLUTION_KINDS, ClassParams, NoiseLevels, ObservationSet,
    make_instance, simulate, truncation_length,
)
from .oracle import oracle_report, theoretical_exponent
from .verify import (
    check_lemma_A1, check_lemma_A2, check_theorem22, event_probability_scan,
    key_lemma_trials, mc_risk, rate_fit,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2
EPS_POLICIES = ("fixed", "equal-to-nu", "nu-power")
MODES = ("oracle", "adaptive", "both")
# execution settings that do not change any number in the outputs
_NOT_HASHED = ("out", "workers")


@dataclass
class ExperimentConfig:
    family: str = "mild"
    p: float = 1.0
    b: float = 1.0
    s: float = 0.0
    r: float = 1.0
    d: float = 2.0
    kind: str = "boundary-spread"
    operator: str = "mid-class"
    nu_grid: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    eps_policy: str = "equal-to-nu"
    eps_value: float = 1e-3
    eps_exponent: float = 1.0
    replications: int = 2000
    seed: int = 0
    mode: str = "oracle"
    penalty_constant: float = PEN_HAT_CONSTANT
    J_cap: int = DEFAULT_J_CAP
    trials: int = 10000
    out: str = "."
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.family not in ("mild", "severe"):
            raise ConfigError(f"field 'family': expected mild or severe, got {self.family!r}")
        if self.kind not in SOLUTION_KINDS:
            raise ConfigError(f"field 'kind': expected one of {SOLUTION_KINDS}, got {self.kind!r}")
        if self.operator not in OPERATOR_KINDS:
            raise ConfigError(f"field 'operator': unknown operator {self.operator!r}")
        if not self.nu_grid:
            raise ConfigError("field 'nu_grid': must not be empty")
        for v in self.nu_grid:
            if not (isinstance(v, (int, float)) and 0.0 < v < 1.0):
                raise ConfigError(f"field 'nu_grid': value {v!r} not in (0, 1)")
        if self.eps_policy not in EPS_POLICIES:
            raise ConfigError(f"field 'eps_policy': expected one of {EPS_POLICIES}")
        if self.eps_policy == "fixed" and not 0.0 < self.eps_value < 1.0:
            raise ConfigError("field 'eps_value': must lie in (0, 1)")
        if self.eps_policy == "nu-power" and not self.eps_exponent > 0:
            raise ConfigError("field 'eps_exponent': must be > 0")
        if int(self.replications) < 1:
            raise ConfigError("field 'replications': must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"field 'mode': expected one of {MODES}")
        if not self.penalty_constant > 0:
            raise ConfigError("field 'penalty_constant': must be > 0")
        if int(self.J_cap) < 1 or int(self.trials) < 1 or int(self.workers) < 1:
            raise ConfigError("fields 'J_cap', 'trials' and 'workers' must be >= 1")
        if int(self.seed) < 0:
            raise ConfigError("field 'seed': must be a non-negative integer")
        self.params()  # class parameter checks
        return self

    def params(self) -> ClassParams:
        return ClassParams.illustration(self.family, self.p, self.b, self.s, self.r, self.d)

    def eps_of(self, nu: float) -> float:
        if self.eps_policy == "fixed":
            return float(self.eps_value)
        if self.eps_policy == "equal-to-nu":
            return float(nu)
        return float(nu) ** float(self.eps_exponent)

    def grid(self) -> list[tuple[float, float]]:
        return [(float(nu), self.eps_of(nu)) for nu in self.nu_grid]

    def hashed_fields(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in _NOT_HASHED}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"penaltyConstant": "penalty_constant", "J": "J_cap", "base_seed": "seed",
            "nu": "nu_grid", "instance": "kind"}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind == "list":
            if isinstance(value, (int, float)):
                value = [value]
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"field {name!r}: cannot interpret {value!r} as {kind}") from None


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (if any), apply overrides and validate."""
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    given = {k: v for k, v in (overrides or {}).items() if v is not None}
    values = {}
    for key, v in {**raw, **given}.items():
        name = _ALIASES.get(key, key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown field {key!r}")
        values[name] = _coerce(name, v)
    return ExperimentConfig(**values).validate()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, rows: list[dict], cfg: ExperimentConfig, extra: dict | None = None,
              columns: list[str] | None = None) -> Path:
    buf = io.StringIO()
    buf.write(f"# seqinv {__version__}\n")
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    buf.write(f"# seed={cfg.seed}\n")
    for k, v in (extra or {}).items():
        buf.write(f"# {k}={_fmt(v)}\n")
    columns = columns or (list(rows[0]) if rows else [])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    atomic_write(path, buf.getvalue())
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`: ``(metadata, rows)`` with raw string values."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                if v:
                    meta[k.strip()] = v
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def write_svg(path: Path, fit, title: str, xlabel: str) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "seqinv", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        x, y = fit.points[:, 0], fit.points[:, 1]
        ax.plot(x, y, "o", color="k", label="MC risk")
        xs = np.linspace(x.min(), x.max(), 2)
        ax.plot(xs, fit.slope * xs + fit.intercept, "-", color="C0",
                label=f"fit, slope {fit.slope:.3f}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("log risk")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    atomic_write(path, buf.getvalue())
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def _instance(cfg: ExperimentConfig, nu: float, eps: float):
    noise = NoiseLevels(nu, eps)
    J = truncation_length(noise, cfg.J_cap)
    return make_instance(cfg.kind, cfg.params(), J, cfg.operator), noise


def cmd_simulate(cfg, args) -> int:
    nu, eps = cfg.grid()[0]
    inst, noise = _instance(cfg, nu, eps)
    obs = simulate(inst, noise, cfg.seed, args.replication)
    rows = [{"j": j + 1, "Y": y, "X": x} for j, (y, x) in enumerate(zip(obs.Y, obs.X))]
    out = Path(cfg.out) / "observations.csv"
    write_csv(out, rows, cfg, {"nu": nu, "eps": eps, "replication": args.replication})
    meta = {"nu": nu, "eps": eps, "seed": cfg.seed, "replication": args.replication,
            "J": obs.J, "instance": inst.kind, "config_hash": cfg.config_hash(),
            "version": __version__, "config": cfg.hashed_fields()}
    atomic_write(out.with_suffix(".meta.json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(out)
    return EXIT_OK


def _load_observations(path: str) -> ObservationSet:
    meta, rows = read_csv(path)
    try:
        noise = NoiseLevels(float(meta["nu"]), float(meta["eps"]))
        Y = np.array([float(r["Y"]) for r in rows])
        X = np.array([float(r["X"]) for r in rows])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"{path}: malformed observation file ({e})") from None
    return ObservationSet(Y, X, noise, int(meta.get("seed", 0)), int(meta.get("replication", 0)))


def cmd_estimate(cfg, args) -> int:
    params = cfg.params()
    if args.obs:
        obs = _load_observations(args.obs)
    else:
        nu, eps = cfg.grid()[0]
        inst, noise = _instance(cfg, nu, eps)
        obs = simulate(inst, noise, cfg.seed, args.replication)
    extra = {"nu": obs.noise.nu, "eps": obs.noise.eps}
    if args.k is not None:
        est = estimate(obs, args.k, params.omega_seq)
        extra["k"] = est.k
    else:
        est, trace, bounds = adaptive_estimate(obs, params.omega_seq, cfg.penalty_constant)
        extra.update(k_hat=trace.k_hat, K_hat=bounds.k_hat, penalty_constant=cfg.penalty_constant)
    rows = [{"j": j + 1, "coefficient": c} for j, c in enumerate(est.coeffs)]
    out = write_csv(Path(cfg.out) / "estimate.csv", rows, cfg, extra)
    print(out)
    return EXIT_OK


def _risk_rows(cfg, modes) -> list[dict]:
    rows = []
    for nu, eps in cfg.grid():
        inst, noise = _instance(cfg, nu, eps)
        for mode in modes:
            rep = mc_risk(inst, noise, replications=cfg.replications, seed=cfg.seed, mode=mode,
                          penalty_constant=cfg.penalty_constant, workers=cfg.workers)
            rows.append(rep.row())
    return rows


def cmd_mc_risk(cfg, args) -> int:
    modes = ("oracle", "adaptive") if cfg.mode == "both" else (cfg.mode,)
    out = write_csv(Path(cfg.out) / "risk.csv", _risk_rows(cfg, modes), cfg)
    print(out)
    return EXIT_OK


def cmd_rate_fit(cfg, args) -> int:
    mode = "oracle" if cfg.mode == "both" else cfg.mode
    rows = _risk_rows(cfg, (mode,))
    regressor = "loglog" if cfg.family == "severe" else "log"
    expected = theoretical_exponent(cfg.family, cfg.p, cfg.b, cfg.s)
    fit = rate_fit([r["nu"] for r in rows], [r["risk_mean"] for r in rows], expected, regressor)
    table = [{"nu": r["nu"], "eps": r["eps"], "risk_mean": r["risk_mean"],
              "x": float(x), "log_risk": float(y)} for r, (x, y) in zip(rows, fit.points)]
    extra = {"regressor": regressor, "slope": fit.slope, "intercept": fit.intercept,
             "expected_slope": expected, "residual_rms": fit.residual_rms}
    out = write_csv(Path(cfg.out) / "rate_fit.csv", table, cfg, extra)
    xlabel = "log |log nu|" if regressor == "loglog" else "log nu"
    write_svg(Path(cfg.out) / "rate_fit.svg", fit, f"{cfg.family}, mode {mode}", xlabel)
    print(out)
    print(f"slope {fit.slope:.4f} (theory {expected:.4f})")
    return EXIT_OK


def cmd_oracle_table(cfg, args) -> int:
    params = cfg.params()
    rows = [oracle_report(nu, eps, params).row() for nu, eps in cfg.grid()]
    out = write_csv(Path(cfg.out) / "oracle.csv", rows, cfg)
    print(out)
    return EXIT_OK


def _check(cfg, tag: str):
    params = cfg.params()
    if tag == "key-lemma":
        rep = key_lemma_trials(cfg.trials, cfg.seed)
        rows = [{"trials": rep.trials, "violations": rep.violations,
                 "worst_margin": rep.worst_margin}]
        return rep.passed, rows
    if tag == "thm22":
        rep = check_theorem22(params, cfg.grid(), replications=cfg.replications, seed=cfg.seed,
                              kind=cfg.kind, operator=cfg.operator, workers=cfg.workers,
                              J_cap=cfg.J_cap)
        return rep.passed, rep.details["rows"]
    if tag == "a1":
        inst = make_instance(cfg.kind, params, 10, cfg.operator)
        eps_grid = sorted({eps for _, eps in cfg.grid()}, reverse=True)
        rep = check_lemma_A1(inst, range(1, 11), eps_grid, cfg.replications, cfg.seed)
        return rep.passed, rep.details["rows"]
    if tag == "a2":
        rep = check_lemma_A2(cfg.nu_grid, params)
        return rep.passed, rep.details["rows"]
    if tag == "events":
        eps_grid = [eps for _, eps in cfg.grid()]
        rep = event_probability_scan(params, eps_grid, R=cfg.replications, seed=cfg.seed,
                                     kind=cfg.kind, operator=cfg.operator)
        sc = rep.details["scan"]
        rows = [{"eps": e, "freq_not_tilde": a, "freq_not_omega_eps": b, "freq_not_mho": c}
                for e, a, b, c in zip(sc.eps, sc.freq_tilde_c, sc.freq_omega_eps_c, sc.freq_mho_c)]
        return rep.passed, rows
    if tag == "condL":
        eps_grid = [eps for _, eps in cfg.grid()]
        rep = check_condition_L(params.b_seq, params.d, eps_grid)
        rows = [{"eps": e, "m_plus": m, "log_value": lv}
                for e, m, lv in zip(rep.eps, rep.m_plus, rep.log_values)]
        return not rep.divergent, rows
    raise ConfigError(f"unknown check {tag!r}")


CHECK_TAGS = ("key-lemma", "thm22", "a1", "a2", "events", "condL")


def cmd_check(cfg, args) -> int:
    passed, rows = _check(cfg, args.tag)
    out = write_csv(Path(cfg.out) / f"check_{args.tag}.csv", rows, cfg,
                    {"check": args.tag, "passed": passed})
    print(out)
    print(f"{args.tag}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="base seed (non-negative)")
    common.add_argument("--workers", type=int, help="worker threads for replications")
    common.add_argument("--out", help="output directory")
    common.add_argument("--penalty-constant", type=float, dest="penalty_constant")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--trials", type=int)
    common.add_argument("--replications", type=int)
    common.add_argument("--family", choices=("mild", "severe"))
    common.add_argument("--nu", type=float, nargs="+", dest="nu_grid", help="noise grid")

    parser = argparse.ArgumentParser(prog="seqinv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"seqinv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="write one observation set")
    p.add_argument("--replication", type=int, default=0)
    p = sub.add_parser("estimate", parents=[common], help="estimate at fixed k or adaptively")
    p.add_argument("--k", type=int, help="fixed dimension; adaptive selection if omitted")
    p.add_argument("--obs", help="observation CSV written by 'simulate'")
    p.add_argument("--replication", type=int, default=0)
    sub.add_parser("mc-risk", parents=[common], help="Monte Carlo risk over the grid")
    sub.add_parser("rate-fit", parents=[common], help="risk-versus-noise fit with SVG plot")
    p = sub.add_parser("check", parents=[common], help="run a verification check")
    p.add_argument("tag", choices=CHECK_TAGS)
    sub.add_parser("oracle-table", parents=[common], help="benchmark quantities over the grid")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate, "estimate": cmd_estimate, "mc-risk": cmd_mc_risk,
    "rate-fit": cmd_rate_fit, "check": cmd_check, "oracle-table": cmd_oracle_table,
}
_OVERRIDES = ("seed", "workers", "out", "penalty_constant", "mode", "trials",
              "replications", "family", "nu_grid")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDES}
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, DataError, IndexDomainError, PrefixTooShort) as e:
        print(f"seqinv: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
