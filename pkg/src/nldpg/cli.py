"""Batch driver: run configuration, the adaptive loop and CSV/mesh export.

Usage::

    python3 -m nldpg [--config run.cfg] [--problem lshape] [--refine adaptive] ...
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from nldpg.estimator import KAPPA, doerfler_mark, error_report, local_estimator
from nldpg.mesh import Mesh, export_mesh, read_mesh, refine_nvb, refine_uniform, refine_uniform_nvb
from nldpg.nonlinearity import get_model, validate_varphi
from nldpg.problems import Problem, get_problem
from nldpg.solver import NewtonFailure, gevp_extremes, linear_init, newton
from nldpg.spaces import DiscreteState, compute_weights, dof_layout, prolongate
from nldpg.assembly import ls_hessian, xnorm_operator

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "level", "ndof", "newton_iters", "eta", "energy_diff_sqrt", "vmax", "error_energy", "error_hdiv",
    "lambda_min", "lambda_max", "guaranteed_bound", "uniqueness_flag", "wall_time",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "square"  # "square", "lshape" or a mesh file (f = 1 there)
    model: str = "example-a"
    refine: str = "uniform"  # "uniform" | "adaptive"
    uniform_rule: str = "nvb"  # "nvb" (bisect every edge) | "red"
    theta: float = 0.3
    levels: int = 5
    max_ndof: int = 0  # stop before a level exceeding this; 0 disables
    newton_tol: float = 1e-12
    newton_maxiter: int = 20
    init: str = "auto"  # level-0 init: "auto" | "linear:<w>"; later levels are prolongated
    out: str = "out"
    energy_ref: float | None = None
    c_df: float | None = None
    kappa: float = KAPPA
    c_f: float | None = None
    vmax_norm: str = "max"  # "max" (componentwise) | "euclid"
    eig_max_ndof: int = 40_000  # skip the eigenvalue certificate above this size
    export_meshes: bool = False

    def validate(self) -> None:
        if self.refine not in ("uniform", "adaptive"):
            raise ConfigError(f"refine must be 'uniform' or 'adaptive', got {self.refine!r}")
        if self.uniform_rule not in ("nvb", "red"):
            raise ConfigError(f"uniform_rule must be 'nvb' or 'red', got {self.uniform_rule!r}")
        if self.vmax_norm not in ("max", "euclid"):
            raise ConfigError(f"vmax_norm must be 'max' or 'euclid', got {self.vmax_norm!r}")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        for name in ("levels", "newton_maxiter"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("newton_tol", "kappa", "c_df", "c_f"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_ndof < 0 or self.eig_max_ndof < 0:
            raise ConfigError("ndof limits must be nonnegative")
        if self.init != "auto":
            init_weight(self)
        try:
            get_model(self.model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _convert(value: str, typ: str):
    if value.lower() in ("none", ""):
        if "None" in typ:
            return None
        raise ConfigError("empty value for a required key")
    if typ.startswith("bool"):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if typ.startswith("int"):
        return int(value)
    if typ.startswith("float"):
        return float(value)
    return value


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    types = {f.name: str(f.type) for f in dataclasses.fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _convert(value, types[key]))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return cfg


def config_to_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in dataclasses.asdict(cfg).items())


@dataclass
class RunRecord:
    level: int
    ndof: int
    newton_iters: int
    eta: float
    energy_diff_sqrt: float | None = None
    vmax: float | None = None
    error_energy: float | None = None
    error_hdiv: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    guaranteed_bound: float | None = None
    uniqueness_flag: bool | None = None
    wall_time: float = 0.0
    # not exported: last Newton dual norm and full history
    newton_norms: list[float] = field(default_factory=list, repr=False)


def init_weight(cfg: RunConfig) -> float:
    if cfg.init == "auto":
        return 1.0 if (cfg.problem == "square" and cfg.model.startswith("example-a")) else 2.5
    kind, _, w = cfg.init.partition(":")
    try:
        weight = float(w)
    except ValueError:
        weight = -1.0
    if kind != "linear" or weight <= 0:
        raise ConfigError(f"init must be 'auto' or 'linear:<w>' with w > 0, got {cfg.init!r}")
    return weight


def build_problem(cfg: RunConfig) -> Problem:
    model = get_model(cfg.model)
    if cfg.problem in ("square", "lshape"):
        prob = get_problem(cfg.problem, model)
    else:
        path = Path(cfg.problem)
        mesh = read_mesh(path)
        prob = Problem(
            name=path.stem, initial_mesh=lambda: mesh, f=lambda x: np.ones(np.shape(x)[:-1]),
            exact=None, energy_ref=None, friedrichs=None, discrete_friedrichs=None,
        )
    changes = {}
    if cfg.energy_ref is not None:
        changes["energy_ref"] = cfg.energy_ref
    if cfg.c_f is not None:
        changes["friedrichs"] = cfg.c_f
    if cfg.c_df is not None:
        changes["discrete_friedrichs"] = cfg.c_df
    return dataclasses.replace(prob, **changes)


def adaptive_loop(cfg: RunConfig, on_record=None) -> tuple[list[RunRecord], Mesh]:
    """Solve, estimate, record, mark and refine until the level or ndof budget is used up.

    A Newton failure propagates as :class:`NewtonFailure` carrying ``records``
    (the completed levels) as an extra attribute.
    """
    cfg.validate()
    model = get_model(cfg.model)
    validate_varphi(model)
    prob = build_problem(cfg)
    mesh = prob.initial_mesh()
    records: list[RunRecord] = []
    prev = None  # (mesh, state) of the previous level
    for level in range(cfg.levels):
        ndof = dof_layout(mesh).ndof
        if cfg.max_ndof and ndof > cfg.max_ndof:
            break
        t0 = time.perf_counter()
        weights = compute_weights(mesh, prob.f)
        if prev is None:
            init = linear_init(mesh, init_weight(cfg), weights)
        else:
            uC, pRT = prolongate(prev[0], mesh, prev[1].uC, prev[1].pRT)
            init = DiscreteState(uC, pRT)
        try:
            rep = newton(mesh, model, weights, init, tol=cfg.newton_tol, maxiter=cfg.newton_maxiter)
        except NewtonFailure as exc:
            exc.records = records
            raise
        if not rep.converged:
            log.warning("level %d: Newton stopped at maxiter with dual norm %.3e", level, rep.norms[-1])
        state = rep.state
        err = error_report(
            mesh, model, weights, state, prob.f,
            energy_ref=prob.energy_ref,
            u_grad=prob.exact.grad if prob.exact is not None else None,
            c_f=prob.friedrichs,
            c_df=prob.discrete_friedrichs,
            kappa=cfg.kappa,
            vmax_norm=cfg.vmax_norm,
        )
        rec = RunRecord(
            level=level, ndof=ndof, newton_iters=rep.iterations, eta=err.eta_global,
            energy_diff_sqrt=err.energy_diff_sqrt, vmax=err.vmax,
            error_energy=err.error_energy, error_hdiv=err.error_hdiv,
            guaranteed_bound=err.guaranteed_bound, uniqueness_flag=err.uniqueness_flag,
            newton_norms=list(rep.norms),
        )
        if ndof <= cfg.eig_max_ndof:
            eig = gevp_extremes(ls_hessian(mesh, model, weights, state), xnorm_operator(mesh))
            rec.lambda_min, rec.lambda_max = eig.lambda_min, eig.lambda_max
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)
        log.info("level %d ndof %d it %d eta %.6e", level, ndof, rec.newton_iters, rec.eta)
        if on_record is not None:
            on_record(rec, mesh)
        if level == cfg.levels - 1:
            break
        prev = (mesh, state)
        if cfg.refine == "uniform":
            mesh = refine_uniform_nvb(mesh) if cfg.uniform_rule == "nvb" else refine_uniform(mesh)
        else:
            eta2 = local_estimator(mesh, model, weights, state)
            mesh = refine_nvb(mesh, doerfler_mark(eta2, cfg.theta))
    return records, mesh


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def csv_text(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def export_csv(records: list[RunRecord], path) -> None:
    path = Path(path)
    try:
        path.write_text(csv_text(records))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nldpg", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value file; command-line options override it")
    p.add_argument("--problem")
    p.add_argument("--model")
    p.add_argument("--refine", choices=("uniform", "adaptive"))
    p.add_argument("--theta", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config_text(text)
    for key in ("problem", "model", "refine", "theta", "levels", "out"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config_to_text(cfg))
        if cfg.problem == "lshape" and cfg.c_df is not None:
            log.warning("guaranteed bound on the L-shape uses the supplied C_dF = %g (conditional)", cfg.c_df)

        def on_record(rec, mesh):
            if cfg.export_meshes:
                export_mesh(mesh, out / f"mesh_{rec.level:02d}.txt")

        try:
            records, mesh = adaptive_loop(cfg, on_record)
        except NewtonFailure as exc:
            export_csv(getattr(exc, "records", []), out / "history.csv")
            print(f"error: {exc}", file=sys.stderr)
            return 2
        export_csv(records, out / "history.csv")
        export_mesh(mesh, out / "mesh_final.txt")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(csv_text(records))
    return 0


if __name__ == "__main__":
    sys.exit(main())
