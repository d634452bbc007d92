"""End-to-end orchestration: config ingestion, the optimization loop, sweeps.

The loop per iteration: unnormalize the design vector, evaluate the edge
length constraint, project polygons to the element-center density field,
SIMP-scale and solve the elasticity system, form compliance and volume
constraint, chain all gradients back to the normalized variables, and take
one MMA step. Convergence: iteration cap, step norm, or KKT residual.
"""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import export
from .constraints import (all_edge_lengths, min_length_constraint,
                          smooth_min_length, volume_constraint)
from .errors import ConfigurationError, RunAborted
from .fea import MeshProblem, assemble_solve, problem_library
from .geometry import (TWO_PI, Bounds, DensityField, DesignVector, PolygonSet,
                       ProjectionParams, density_field, grid_radius_for_volume,
                       init_grid, n_design_vars, normalize, unnormalize)
from .mma import MmaState, kkt_residual, mma_update
from .sensitivity import GradientBundle, grad_minlength, grad_objective, grad_volume

VALID_FORMATS = ("history", "density", "polygons", "svg")
VALID_SWEEP_AXES = ("vf_star", "K", "S", "l_star", "init")


def _check_keys(d: dict, allowed, section: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in config section '{section}'; "
            f"allowed: {sorted(allowed)}"
        )


def _section(cls, d: dict, name: str):
    if not isinstance(d, dict):
        raise ConfigurationError(f"config section '{name}' must be an object")
    allowed = [f.name for f in fields(cls)]
    _check_keys(d, allowed, name)
    return cls(**d)


@dataclass
class ProblemConfig:
    name: str = "mid_cantilever"
    nelx: int = 100
    nely: int = 50
    lx: float = 60.0
    ly: float = 30.0


@dataclass
class PolygonConfig:
    K: int = 8
    S: int = 6
    init: str = "grid"
    kx: int | None = None
    ky: int | None = None
    radius: object = "auto"
    alpha0: float = 0.0


@dataclass
class BoundsConfig:
    cx: list | None = None      # default (0, lx)
    cy: list | None = None      # default (0, ly)
    alpha: list | None = None   # default (0, 2*pi)
    d: list | None = None       # default (0, 0.5*lx)


@dataclass
class ProjectionConfig:
    beta: float = 10.0
    q: float = 8.0
    clamp_union: bool = True


@dataclass
class MaterialConfig:
    E0: float = 1.0
    Emin: float | None = None   # default 1e-3 * E0
    nu: float = 0.3
    p: float = 3.0


@dataclass
class ConstraintsConfig:
    vf_star: float = 0.5
    l_star: float | None = None


@dataclass
class OptimizerConfig:
    max_iter: int = 250
    move_limit: float = 0.05
    kkt_tol: float = 1e-6
    step_tol: float = 1e-6


@dataclass
class OutputConfig:
    directory: str | None = None
    formats: list = field(default_factory=lambda: list(VALID_FORMATS))
    snapshots: list = field(default_factory=lambda: [0, 5, 10, 30, 50])


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    polygons: PolygonConfig = field(default_factory=PolygonConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    constraints: ConstraintsConfig = field(default_factory=ConstraintsConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        allowed = [f.name for f in fields(cls)]
        _check_keys(d, allowed, "<root>")
        kwargs = {}
        for name, sub_cls in (
            ("problem", ProblemConfig), ("polygons", PolygonConfig),
            ("bounds", BoundsConfig), ("projection", ProjectionConfig),
            ("material", MaterialConfig), ("constraints", ConstraintsConfig),
            ("optimizer", OptimizerConfig), ("output", OutputConfig),
        ):
            if name in d:
                kwargs[name] = _section(sub_cls, d[name], name)
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"config {path} must contain a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        def plain(obj):
            if hasattr(obj, "__dataclass_fields__"):
                return {f.name: plain(getattr(obj, f.name)) for f in fields(obj)}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            return obj
        return plain(self)

    def validate(self):
        pr, pg, opt = self.problem, self.polygons, self.optimizer
        if pr.name not in ("mid_cantilever", "mbb"):
            raise ConfigurationError(
                f"unknown problem '{pr.name}'; valid names: mid_cantilever, mbb")
        if pr.nelx < 1 or pr.nely < 1 or pr.lx <= 0 or pr.ly <= 0:
            raise ConfigurationError("problem mesh/domain sizes must be positive")
        if pg.K < 1 or pg.S < 3:
            raise ConfigurationError(f"need K >= 1 and S >= 3, got K={pg.K}, S={pg.S}")
        if pg.init not in ("grid", "random"):
            raise ConfigurationError(f"unknown init '{pg.init}'; valid: grid, random")
        if pg.radius != "auto" and not (isinstance(pg.radius, (int, float)) and pg.radius > 0):
            raise ConfigurationError(f"radius must be positive or 'auto', got {pg.radius!r}")
        if opt.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if not 0.0 < opt.move_limit <= 1.0:
            raise ConfigurationError(f"move_limit must be in (0, 1], got {opt.move_limit}")
        ConstraintsConfig(self.constraints.vf_star, self.constraints.l_star)
        ProjectionParams(self.projection.beta, self.projection.q, self.projection.clamp_union)
        unknown_fmt = set(self.output.formats) - set(VALID_FORMATS)
        if unknown_fmt:
            raise ConfigurationError(
                f"unknown output format(s) {sorted(unknown_fmt)}; valid: {VALID_FORMATS}")


def auto_grid(K: int, aspect: float) -> tuple:
    """Factor K into kx*ky whose aspect kx/ky best matches the domain aspect."""
    best = None
    for ky in range(1, K + 1):
        if K % ky:
            continue
        kx = K // ky
        score = abs(math.log(kx / ky) - math.log(aspect))
        if best is None or score < best[0]:
            best = (score, kx, ky)
    return best[1], best[2]


def resolve_bounds(cfg: RunConfig) -> Bounds:
    bc, pr = cfg.bounds, cfg.problem
    b = Bounds(
        cx=tuple(bc.cx) if bc.cx is not None else (0.0, pr.lx),
        cy=tuple(bc.cy) if bc.cy is not None else (0.0, pr.ly),
        alpha=tuple(bc.alpha) if bc.alpha is not None else (0.0, TWO_PI),
        d=tuple(bc.d) if bc.d is not None else (0.0, 0.5 * pr.lx),
    )
    b.validate()
    return b


def build_problem(cfg: RunConfig) -> MeshProblem:
    pr, mat = cfg.problem, cfg.material
    return problem_library(pr.name, pr.nelx, pr.nely, pr.lx, pr.ly,
                           E0=mat.E0, Emin=mat.Emin, nu=mat.nu, p=mat.p)


def initial_polygons(cfg: RunConfig, rng: np.random.Generator) -> PolygonSet:
    pg, pr, cons = cfg.polygons, cfg.problem, cfg.constraints
    radius = pg.radius
    if radius == "auto":
        radius = grid_radius_for_volume(pg.K, pg.S, pr.lx, pr.ly, cons.vf_star)
    if pg.init == "grid":
        kx, ky = pg.kx, pg.ky
        if kx is None or ky is None:
            kx, ky = auto_grid(pg.K, pr.lx / pr.ly)
        return init_grid(pg.K, pg.S, pr.lx, pr.ly, kx, ky, radius, pg.alpha0)
    # seeded random placement, radius shared by all polygons
    return PolygonSet(
        cx=rng.uniform(0.15 * pr.lx, 0.85 * pr.lx, pg.K),
        cy=rng.uniform(0.15 * pr.ly, 0.85 * pr.ly, pg.K),
        alpha=rng.uniform(0.0, TWO_PI / pg.S, pg.K),
        d=np.full((pg.K, pg.S), radius),
    )


@dataclass
class Evaluation:
    """Everything the loop needs from one design point."""

    J: float
    g_v: float
    g_l: float
    grads: GradientBundle
    polys: PolygonSet
    field: DensityField
    solution: object

    def constraint_values(self) -> np.ndarray:
        if self.grads.dgl_dz is None:
            return np.array([self.g_v])
        return np.array([self.g_v, self.g_l])

    def constraint_jacobian(self) -> np.ndarray:
        if self.grads.dgl_dz is None:
            return self.grads.dgv_dz[None, :]
        return np.vstack([self.grads.dgv_dz, self.grads.dgl_dz])


class Evaluator:
    """Evaluates objective, constraints, and their gradients at a design vector."""

    def __init__(self, problem: MeshProblem, bounds: Bounds, params: ProjectionParams,
                 vf_star: float, l_star: float | None, K: int, S: int):
        self.problem = problem
        self.bounds = bounds
        self.params = params
        self.vf_star = vf_star
        self.l_star = l_star
        self.K = K
        self.S = S
        self.ke0 = problem.element_stiffness_unit()
        self.xe, self.ye = problem.element_centers()

    @property
    def n(self) -> int:
        return n_design_vars(self.K, self.S)

    @property
    def m(self) -> int:
        return 2 if self.l_star is not None else 1

    def design(self, z: np.ndarray) -> DesignVector:
        return DesignVector(np.asarray(z, dtype=float), self.bounds, self.K, self.S)

    def polygons(self, z: np.ndarray) -> PolygonSet:
        return unnormalize(self.design(z))

    def density(self, z: np.ndarray) -> DensityField:
        return density_field(self.polygons(z), self.xe, self.ye, self.params)

    def evaluate(self, z: np.ndarray) -> Evaluation:
        dv = self.design(z)
        polys = unnormalize(dv)
        fld = density_field(polys, self.xe, self.ye, self.params)
        sol = assemble_solve(fld, self.problem, self.ke0)
        g_v = volume_constraint(fld.rho, self.problem.element_area,
                                self.vf_star, self.problem.domain_area)
        dJ = grad_objective(dv, fld, sol, self.problem, self.params, self.ke0)
        dgv = grad_volume(dv, fld, self.problem, self.vf_star, self.params)
        if self.l_star is not None:
            g_l = min_length_constraint(
                smooth_min_length(all_edge_lengths(polys)), self.l_star)
            dgl = grad_minlength(dv, self.l_star)
        else:
            g_l, dgl = math.nan, None
        return Evaluation(J=sol.compliance, g_v=g_v, g_l=g_l,
                          grads=GradientBundle(dJ, dgv, dgl),
                          polys=polys, field=fld, solution=sol)

    # scalar views for finite-difference verification
    def compliance_value(self, z: np.ndarray) -> float:
        return assemble_solve(self.density(z), self.problem, self.ke0).compliance

    def volume_value(self, z: np.ndarray) -> float:
        return volume_constraint(self.density(z).rho, self.problem.element_area,
                                 self.vf_star, self.problem.domain_area)

    def min_length_value(self, z: np.ndarray) -> float:
        if self.l_star is None:
            raise ConfigurationError("min-length constraint is not configured")
        return min_length_constraint(
            smooth_min_length(all_edge_lengths(self.polygons(z))), self.l_star)


@dataclass
class IterationRecord:
    iteration: int
    J: float
    g_v: float
    g_l: float
    kkt_norm: float
    step_norm: float
    seconds: float


@dataclass
class OptRun:
    config: RunConfig
    records: list
    z_history: list
    polygons: PolygonSet
    field: DensityField
    termination: str
    bounds: Bounds
    problem: MeshProblem

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0


def make_evaluator(cfg: RunConfig) -> Evaluator:
    cfg.validate()
    return Evaluator(
        problem=build_problem(cfg),
        bounds=resolve_bounds(cfg),
        params=ProjectionParams(cfg.projection.beta, cfg.projection.q,
                                cfg.projection.clamp_union),
        vf_star=cfg.constraints.vf_star,
        l_star=cfg.constraints.l_star,
        K=cfg.polygons.K,
        S=cfg.polygons.S,
    )


class _OutputWriter:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.output.directory) if cfg.output.directory else None
        if self.dir is not None:
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
                probe = self.dir / ".write_probe"
                probe.write_text("")
                probe.unlink()
            except OSError as exc:
                raise ConfigurationError(f"output directory {self.dir} is not writable: {exc}")
            (self.dir / "config.json").write_text(
                json.dumps(cfg.to_dict(), indent=2) + "\n")

    def wants(self, fmt: str) -> bool:
        return self.dir is not None and fmt in self.cfg.output.formats

    def snapshot(self, it: int, polys: PolygonSet):
        if self.dir is not None and it in self.cfg.output.snapshots:
            export.write_polygons_json(
                polys, self.cfg.problem.lx, self.cfg.problem.ly,
                self.dir / f"polygons_iter_{it:04d}.json")

    def snapshot_final(self, it: int, polys: PolygonSet):
        # the final iterate is always snapshotted, cadence list or not
        if self.dir is not None:
            path = self.dir / f"polygons_iter_{it:04d}.json"
            if not path.exists():
                export.write_polygons_json(
                    polys, self.cfg.problem.lx, self.cfg.problem.ly, path)

    def history(self, records):
        if self.wants("history"):
            export.write_history_csv(records, self.dir / "history.csv")

    def finals(self, run: OptRun):
        if self.dir is None:
            return
        pr = self.cfg.problem
        self.history(run.records)
        if self.wants("polygons"):
            export.write_polygons_json(run.polygons, pr.lx, pr.ly, self.dir / "polygons.json")
        if self.wants("density"):
            export.write_density_csv(run.field.rho, pr.nelx, pr.nely, pr.lx, pr.ly,
                                     self.dir / "density.csv")
        if self.wants("svg"):
            export.write_design_svg(run.polygons, pr.lx, pr.ly, self.dir / "design.svg",
                                    density=run.field.rho, mesh_shape=(pr.nelx, pr.nely))


def run(cfg: RunConfig, clock=time.perf_counter) -> OptRun:
    """Execute one optimization to convergence or the iteration cap.

    Deterministic for a fixed config and seed; ``clock`` only feeds the
    seconds column of the history (inject a stub for reproducible files).
    """
    cfg.validate()
    ev = make_evaluator(cfg)
    rng = np.random.default_rng(cfg.seed)
    polys0 = initial_polygons(cfg, rng)
    z = np.clip(normalize(polys0, ev.bounds).z, 0.0, 1.0)

    opt = cfg.optimizer
    state = MmaState(n=ev.n, m=ev.m, move_limit=opt.move_limit)
    writer = _OutputWriter(cfg)

    records: list = []
    z_history = [z.copy()]
    mult = None
    step = math.nan
    j_ref = None  # objective scale so MMA sees an O(1) objective
    termination = "max_iter"
    t0 = clock()
    it = 0
    try:
        while True:
            e = ev.evaluate(z)
            if j_ref is None:
                j_ref = max(abs(e.J), 1e-12)
            if mult is not None:
                kkt = kkt_residual(z, e.grads.dJ_dz / j_ref, e.constraint_values(),
                                   e.constraint_jacobian(), mult)
            else:
                kkt = math.nan
            records.append(IterationRecord(
                iteration=it, J=e.J, g_v=e.g_v, g_l=e.g_l,
                kkt_norm=kkt, step_norm=step, seconds=clock() - t0))
            writer.snapshot(it, e.polys)
            if it >= opt.max_iter:
                termination = "max_iter"
                break
            if it > 0 and step <= opt.step_tol:
                termination = "step_tol"
                break
            if mult is not None and kkt <= opt.kkt_tol:
                termination = "kkt_tol"
                break
            z_new, state, mult = mma_update(
                z, e.J / j_ref, e.grads.dJ_dz / j_ref, e.constraint_values(),
                e.constraint_jacobian(), state)
            step = float(np.linalg.norm(z_new - z))
            z = z_new
            z_history.append(z.copy())
            it += 1
    except Exception as exc:
        writer.history(records)
        raise RunAborted(it, exc) from exc

    run_result = OptRun(config=cfg, records=records, z_history=z_history,
                        polygons=e.polys, field=e.field, termination=termination,
                        bounds=ev.bounds, problem=ev.problem)
    writer.snapshot_final(it, e.polys)
    writer.finals(run_result)
    return run_result


@dataclass
class SweepEntry:
    value: object
    run: OptRun | None
    error: str | None


def _apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    out = copy.deepcopy(cfg)
    if axis == "vf_star":
        out.constraints.vf_star = float(value)
    elif axis == "K":
        out.polygons.K = int(value)
        out.polygons.kx, out.polygons.ky = auto_grid(
            int(value), out.problem.lx / out.problem.ly)
    elif axis == "S":
        out.polygons.S = int(value)
    elif axis == "l_star":
        out.constraints.l_star = float(value)
    elif axis == "init":
        if value == "random":
            out.polygons.init = "random"
        else:
            try:
                kx, ky = str(value).lower().split("x")
                out.polygons.init = "grid"
                out.polygons.kx, out.polygons.ky = int(kx), int(ky)
            except ValueError as exc:
                raise ConfigurationError(
                    f"init sweep value {value!r} must be 'random' or 'KXxKY' like '4x2'"
                ) from exc
    else:
        raise ConfigurationError(f"unknown sweep axis '{axis}'; valid: {VALID_SWEEP_AXES}")
    return out


def sweep(base: RunConfig, axis: str, values, clock=time.perf_counter) -> list:
    """Independent runs along one parameter axis; failures are recorded, not fatal."""
    base.validate()
    entries = []
    root = Path(base.output.directory) if base.output.directory else None
    for value in values:
        cfg = _apply_axis(base, axis, value)
        if root is not None:
            cfg.output.directory = str(root / f"{axis}={value}")
        try:
            entries.append(SweepEntry(value=value, run=run(cfg, clock=clock), error=None))
        except Exception as exc:  # keep sweeping; report at the end
            entries.append(SweepEntry(value=value, run=None, error=str(exc)))
    if root is not None:
        lines = [f"{axis},final_J,final_g_v,final_g_l,iterations,termination"]
        for en in entries:
            if en.run is None:
                lines.append(f"{en.value},,,,,error: {en.error}")
            else:
                last = en.run.records[-1]
                lines.append(
                    f"{en.value},{last.J:.12e},{last.g_v:.12e},{last.g_l:.12e},"
                    f"{en.run.iterations},{en.run.termination}")
        root.mkdir(parents=True, exist_ok=True)
        (root / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    return entries


# FD verification targets per function; the stability filter is set to half of
# each so the difference quotient must be self-consistent below the tolerance
# it certifies (compliance FD noise scales with J * eps / h)
GRADIENT_TOLERANCES = {"J": 1e-4, "g_v": 1e-5, "g_l": 1e-6}


def check_gradients(cfg: RunConfig, seed: int, h: float = 1e-6) -> dict:
    """Worst analytic-vs-finite-difference discrepancy per function at a random z."""
    from .sensitivity import fd_check

    ev = make_evaluator(cfg)
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.15, 0.85, ev.n)
    e = ev.evaluate(z)
    out = {
        "J": fd_check(ev.compliance_value, e.grads.dJ_dz, z, h=h,
                      kink_rtol=0.5 * GRADIENT_TOLERANCES["J"]),
        "g_v": fd_check(ev.volume_value, e.grads.dgv_dz, z, h=h,
                        kink_rtol=0.5 * GRADIENT_TOLERANCES["g_v"]),
    }
    if ev.l_star is not None:
        out["g_l"] = fd_check(ev.min_length_value, e.grads.dgl_dz, z, h=h,
                              kink_rtol=0.5 * GRADIENT_TOLERANCES["g_l"])
    return out
