"""Configuration-driven experiments writing CSV tables, JSON summaries and SVG plots.

A run validates its JSON config, dispatches to one experiment function and
writes ``results.csv``, ``summary.json`` (checked against the shipped schema),
an optional ``plot.svg`` and ``manifest.json``. Identical config and seed give
byte-identical ``results.csv``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Literal

import jsonschema
import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import __version__
from .control import (
    ControlProblem,
    cost_curve,
    minimize_prox,
    minimize_spectral_root,
    taper_compact_support,
)
from .errors import ConvergenceError, ValidationError
from .extension import derivative_trace, extend_neumann, harmonicity_residual
from .grids import (
    BoxDomain,
    GridFn,
    IntervalDomain,
    box_distance,
    geometry_params,
    inner_product,
    make_grid,
    normalize_pair,
)
from .io import export_operator, write_control_result, write_csv, write_json
from .operators import (
    StackedOp,
    apply_operator,
    assemble_truncated_hilbert,
    assemble_truncated_riesz,
    stack_components,
    weighted_adjoint,
)
from .spectral import (
    decay_fit,
    fit_smallness,
    smallness_probe,
    smallness_violations,
    stability_fit,
    stability_samples,
    trace_gap_probe,
    weighted_svd,
)
from .svg import Series, line_plot
from .varcoef import (
    assemble_generalized_stack,
    coefficient_preset,
    fd_box_for,
    lattice_grid,
)

log = logging.getLogger(__name__)

__all__ = ["ExperimentConfig", "RunOutcome", "load_config", "run_experiment",
           "config_hash", "geometry_hash", "EXIT_OK", "EXIT_VALIDATION", "EXIT_CONVERGENCE"]

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE = 0, 2, 3

EXPERIMENTS = ("assemble", "svd", "extend", "probe-smallness", "probe-trace",
               "stability-fit", "control", "cost-curve", "varcoef-validate")


# -- configuration ---------------------------------------------------------------

Pair = tuple[float, float]


class Geometry(BaseModel):
    """Either intervals ``I`` (controls) and ``J`` (observations) or boxes ``omega1``/``omega2``."""

    model_config = ConfigDict(extra="forbid")

    I: Pair | None = None
    J: Pair | None = None
    omega1: tuple[Pair, Pair] | None = None
    omega2: tuple[Pair, Pair] | None = None

    @model_validator(mode="after")
    def _check(self):
        one = self.I is not None or self.J is not None
        two = self.omega1 is not None or self.omega2 is not None
        if one == two:
            raise ValueError("give either intervals I and J or boxes omega1 and omega2")
        if one and (self.I is None or self.J is None):
            raise ValueError("both I and J are required")
        if two and (self.omega1 is None or self.omega2 is None):
            raise ValueError("both omega1 and omega2 are required")
        try:
            a, b = self.domains()
        except ValidationError as exc:
            raise ValueError(str(exc)) from None
        if box_distance(a, b) <= 0.0:
            names = ("I", "J") if one else ("omega1", "omega2")
            raise ValueError(
                f"disjointness rule violated: the closures of {names[0]} and {names[1]} "
                "must be disjoint"
            )
        return self

    @property
    def dim(self) -> int:
        return 1 if self.I is not None else 2

    def domains(self):
        """``(control domain, observation domain)``."""
        if self.I is not None:
            return IntervalDomain(*self.I), IntervalDomain(*self.J)
        return BoxDomain.from_bounds(self.omega1), BoxDomain.from_bounds(self.omega2)


class Target(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["sin", "one", "bump", "random"] = "sin"
    scale: float = 1.0
    modes: int = Field(4, ge=1, le=64)


class Coefficient(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: str = "identity"
    amplitude: float | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    frequency: float | None = None

    def build(self, dim: int):
        params = {k: v for k, v in self.model_dump().items() if k != "preset" and v is not None}
        return coefficient_preset(self.preset, dim=dim, **params)


def _positive(values: list[float], name: str) -> list[float]:
    if any(not v > 0 for v in values):
        raise ValueError(f"all {name} values must be positive")
    return values


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    geometry: Geometry
    resolution: int = Field(128, ge=4, le=4096)
    resolutions: list[int] = Field(default_factory=lambda: [32, 64])
    eps: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    holdout_eps: list[float] = Field(default_factory=list)
    deltas: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    holdout_deltas: list[float] = Field(default_factory=list)
    target: Target = Field(default_factory=Target)
    coefficient: Coefficient = Field(default_factory=Coefficient)
    solver: Literal["spectral-root", "prox"] = "spectral-root"
    precision: int | Literal["auto"] | None = "auto"
    taper: Literal["auto"] | bool = "auto"
    modes: int = Field(20, ge=1)
    holdout: int = Field(20, ge=0)
    fit_min_count: int = Field(5, ge=2)
    margin: float = Field(0.1, gt=0)
    control_resolution: int = Field(32, ge=32, le=128)
    seed: int = Field(0, ge=0)
    output: str | None = None

    @field_validator("eps", "holdout_eps")
    @classmethod
    def _eps(cls, v, info):
        return _positive(v, info.field_name)

    @field_validator("deltas", "holdout_deltas")
    @classmethod
    def _deltas(cls, v, info):
        return _positive(v, info.field_name)

    @field_validator("precision")
    @classmethod
    def _prec(cls, v):
        if isinstance(v, int) and not 20 <= v <= 200:
            raise ValueError("precision must be between 20 and 200 digits")
        return v

    @field_validator("resolutions")
    @classmethod
    def _res(cls, v):
        if not v or any(n < 8 for n in v):
            raise ValueError("resolutions must be a nonempty list of integers >= 8")
        return v

    @model_validator(mode="after")
    def _cross(self):
        if self.experiment == "varcoef-validate" and self.geometry.dim != 2:
            raise ValueError("varcoef-validate needs a two-dimensional geometry")
        if self.experiment in ("control", "cost-curve") and not self.eps:
            raise ValueError("eps must not be empty")
        if self.experiment == "cost-curve" and self.eps != sorted(self.eps, reverse=True):
            raise ValueError("cost-curve eps values must be sorted in descending order")
        return self


def load_config(source) -> ExperimentConfig:
    """Parse a path, JSON string or dict; pydantic errors become :class:`ValidationError`."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    elif isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from None
    else:
        data = source
    try:
        return ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        raise ValidationError(_format_errors(exc)) from None


def _format_errors(exc: pydantic.ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "invalid config:\n  " + "\n  ".join(lines)


def _digest(data) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_hash(cfg: ExperimentConfig) -> str:
    return _digest(cfg.model_dump(mode="json", exclude={"output"}))


def geometry_hash(cfg: ExperimentConfig) -> str:
    return _digest(cfg.geometry.model_dump(mode="json"))


# -- shared builders --------------------------------------------------------------


def _grids(cfg: ExperimentConfig, n: int | None = None):
    ctrl, obs = cfg.geometry.domains()
    n = cfg.resolution if n is None else n
    return make_grid(ctrl, n), make_grid(obs, n)


def _forward(source, target):
    """Transform from the observation side (source) to the control side."""
    if source.dim == 1:
        return assemble_truncated_hilbert(source, target)
    return stack_components([assemble_truncated_riesz(j, source, target)
                             for j in range(1, source.dim + 1)])


def _target_fn(cfg: ExperimentConfig, grid) -> GridFn:
    t = cfg.target
    s = [(grid.nodes[:, k] - a) / (b - a) for k, (a, b) in enumerate(grid.domain.bounds)]
    if t.kind == "sin":
        vals = np.prod([np.sin(np.pi * x) for x in s], axis=0)
    elif t.kind == "one":
        vals = np.ones(grid.size)
    elif t.kind == "bump":
        vals = np.prod([(4 * x * (1 - x)) ** 2 for x in s], axis=0)
    else:
        rng = np.random.default_rng(cfg.seed)
        vals = np.ones(grid.size)
        for x in s:
            coef = rng.standard_normal(t.modes) / np.arange(1, t.modes + 1) ** 2
            vals = vals * sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(coef))
    return GridFn(grid, t.scale * vals)


def _needs_taper(h: GridFn) -> bool:
    v = h.values
    if v.size < 3:
        return False
    peak = float(np.max(np.abs(v))) or 1.0
    # quadratic extrapolation from the first three midpoints to the endpoint
    ends = ((15 * v[0] - 10 * v[1] + 3 * v[2]) / 8, (15 * v[-1] - 10 * v[-2] + 3 * v[-3]) / 8)
    return max(abs(e) for e in ends) > 1e-2 * peak


def _control_setup(cfg: ExperimentConfig):
    """Operator and target ``h`` for control runs, with the optional taper applied."""
    ctrl_grid, obs_grid = _grids(cfg)
    h = _target_fn(cfg, obs_grid)
    info = {"tapered": False}
    if cfg.geometry.dim == 1:
        apply = cfg.taper is True or (cfg.taper == "auto" and _needs_taper(h))
        if apply:
            I, J = cfg.geometry.domains()
            In, Jn, _ = normalize_pair(I, J)
            h1 = geometry_params(In, Jn).h1 * J.length
            tap = taper_compact_support(h, h1)
            h = tap.h
            info = {"tapered": True, "collar": tap.collar, "c_l2": tap.c_l2, "c_h1": tap.c_h1}
    return _forward(h.grid, ctrl_grid), h, info


@dataclass
class Output:
    header: list[str]
    rows: list
    metrics: dict
    plot: str | None = None
    files: dict[str, Callable[[Path], None]] = field(default_factory=dict)


# -- experiments -------------------------------------------------------------------


def _exp_assemble(cfg: ExperimentConfig) -> Output:
    ctrl_grid, obs_grid = _grids(cfg)
    op = _forward(obs_grid, ctrl_grid)
    rng = np.random.default_rng(cfg.seed)
    comps = op.components if isinstance(op, StackedOp) else (op,)
    rows, worst = [], 0.0
    for c in comps:
        g = GridFn(c.source, rng.standard_normal(c.source.size))
        f = GridFn(c.target, rng.standard_normal(c.target.size))
        rev = weighted_adjoint(c)
        lhs = inner_product(apply_operator(c, g), f)
        rhs = inner_product(g, apply_operator(rev, f))
        err = abs(lhs - rhs) / (g.norm() * f.norm())
        worst = max(worst, err)
        rows.append([c.label, c.entries.shape[0], c.entries.shape[1],
                     float(np.linalg.norm(c.entries)), float(np.abs(c.entries).max()), err])
    metrics = {"components": len(comps), "adjoint_error": worst,
               "frobenius": float(np.linalg.norm(op.matrix))}
    return Output(["component", "rows", "cols", "frobenius", "max_abs", "adjoint_error"],
                  rows, metrics, files={"operator": lambda d: export_operator(op, d / "operator")})


def _exp_svd(cfg: ExperimentConfig) -> Output:
    ctrl_grid, obs_grid = _grids(cfg)
    S = weighted_svd(_forward(obs_grid, ctrl_grid))
    fit = decay_fit(S, min_count=cfg.fit_min_count)
    k = np.arange(1, S.values.size + 1)
    rows = [[int(i), float(s)] for i, s in zip(k, S.values)]
    metrics = {**fit.to_dict(), "sigma_max": float(S.values[0]),
               "sigma_min": float(S.values[-1])}
    above = S.values > 1e-12
    plot = line_plot([Series("sigma_k", k[above], S.values[above])],
                     "Singular values", "k", "sigma_k", logy=True)
    return Output(["k", "sigma"], rows, metrics, plot)


def _exp_extend(cfg: ExperimentConfig) -> Output:
    _, obs_grid = _grids(cfg)
    g = _target_fn(cfg, obs_grid)
    n = cfg.geometry.dim
    dom = obs_grid.domain
    lo = [a - 0.5 for a, _ in dom.bounds]
    hi = [b + 0.5 for _, b in dom.bounds]
    pts = min(cfg.resolution, 64 if n == 1 else 16)
    top = max(b - a for a, b in dom.bounds)
    box = BoxDomain(tuple(lo) + (0.05,), tuple(hi) + (0.05 + top,))
    grid = make_grid(box, pts)
    ext = extend_neumann(g, grid)
    ctrl_grid, _ = _grids(cfg)
    trace_err = _trace_error(g, ctrl_grid)
    rows = [list(p) + [float(v)] for p, v in zip(ext.points, ext.values)]
    header = [f"x{k + 1}" for k in range(n + 1)] + ["u"]
    metrics = {"kappa": ext.kappa, "points": int(ext.values.size),
               "harmonicity_residual": harmonicity_residual(ext),
               "trace_operator_error": trace_err}
    return Output(header, rows, metrics)


def _trace_error(g: GridFn, ctrl_grid) -> float:
    """Relative gap between the height-0 tangential trace and the assembled operator."""
    op = _forward(g.grid, ctrl_grid)
    comps = op.components if isinstance(op, StackedOp) else (op,)
    num = den = 0.0
    for j, c in enumerate(comps, start=1):
        ref = apply_operator(c, g).values
        tr = derivative_trace(g, j, 0.0, ctrl_grid).values
        num += float(np.sum((tr - ref) ** 2))
        den += float(np.sum(ref**2))
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def _exp_probe_smallness(cfg: ExperimentConfig) -> Output:
    ctrl_grid, obs_grid = _grids(cfg)
    g = _target_fn(cfg, obs_grid)
    records = smallness_probe(g, ctrl_grid, cfg.deltas)
    fit = fit_smallness(records, cfg.eps)
    rows = [[r.delta, r.trace, r.data, r.source, "train"] for r in records]
    metrics = fit.to_dict()
    if cfg.holdout_deltas or cfg.holdout_eps:
        held = smallness_probe(g, ctrl_grid, cfg.holdout_deltas or cfg.deltas)
        metrics["holdout_violations"] = smallness_violations(fit, held, cfg.holdout_eps or cfg.eps)
        rows += [[r.delta, r.trace, r.data, r.source, "holdout"] for r in held]
    return Output(["delta", "trace", "data", "source", "set"], rows, metrics)


def _exp_probe_trace(cfg: ExperimentConfig) -> Output:
    _, obs_grid = _grids(cfg)
    g = _target_fn(cfg, obs_grid)
    fit = trace_gap_probe(g, cfg.deltas, cfg.margin)
    rows = [[float(d), float(e)] for d, e in zip(fit.deltas, fit.errors)]
    errs = fit.errors
    metrics = {**fit.to_dict(), "decreasing": bool(np.all(np.diff(errs) < 0))}
    plot = line_plot([Series("recovery error", np.log10(fit.deltas), errs)],
                     "Neumann recovery", "log10 delta", "error", logy=True)
    return Output(["delta", "error"], rows, metrics, plot)


def _unit_combinations(S, count: int, modes: int, rng) -> list[GridFn]:
    out = []
    for _ in range(count):
        c = rng.standard_normal(modes)
        c /= np.linalg.norm(c)
        out.append(GridFn(S.op.source, S.right[:, :modes] @ c))
    return out


def _exp_stability(cfg: ExperimentConfig) -> Output:
    ctrl_grid, obs_grid = _grids(cfg)
    op = _forward(obs_grid, ctrl_grid)
    S = weighted_svd(op)
    modes = min(cfg.modes, S.values.size)
    family = [S.right_fn(k) for k in range(modes)]
    holdout = _unit_combinations(S, cfg.holdout, modes, np.random.default_rng(cfg.seed))
    fit = stability_fit(op, family, holdout or None)
    rows = [["train", i + 1, *map(float, r)] for i, r in enumerate(fit.samples)]
    if holdout:
        held = stability_samples(op, holdout)
        rows += [["holdout", i + 1, *map(float, r)] for i, r in enumerate(held)]
    return Output(["set", "index", "h1", "l2", "data"], rows, fit.to_dict())


def _solve(cfg, p):
    if cfg.solver == "prox":
        return minimize_prox(p)
    return minimize_spectral_root(p, precision=cfg.precision)


def _exp_control(cfg: ExperimentConfig) -> Output:
    op, h, info = _control_setup(cfg)
    rows, results = [], []
    for eps in cfg.eps:
        res = _solve(cfg, ControlProblem(op, h, eps))
        results.append((eps, res))
        rows.append([eps, res.cost, res.residual, res.lam, res.iterations, res.value,
                     res.optimality])
    first_eps, first = results[0]
    metrics = {"h_norm": h.norm(), "cost": first.cost, "residual": first.residual,
               "lambda": first.lam, "eps": first_eps, "solver": first.solver,
               "max_residual_ratio": max(r.residual / e for e, r in results),
               **info}

    def write(d: Path, eps=first_eps, res=first):
        write_control_result(res, d / "control.json", d / "control.csv", {"eps": eps})

    return Output(["eps", "cost", "residual", "lambda", "iterations", "value", "optimality"],
                  rows, metrics, files={"control": write})


def _exp_cost_curve(cfg: ExperimentConfig) -> Output:
    op, h, info = _control_setup(cfg)
    curve = cost_curve(op, h, cfg.eps, cfg.holdout_eps, solver=cfg.solver,
                       precision=cfg.precision)
    rows = [list(r) + ["fit"] for r in curve.rows.tolist()]
    if curve.holdout is not None:
        rows += [list(r) + ["holdout"] for r in curve.holdout.tolist()]
    costs = curve.rows[:, 1]
    metrics = {**curve.to_dict(), "monotone": bool(np.all(np.diff(costs) >= 0)), **info}
    everything = np.array([r[:2] for r in rows], dtype=float)
    order = np.argsort(everything[:, 0])
    plot = line_plot([Series("cost", np.log10(1 / everything[order, 0]), everything[order, 1])],
                     "Cost of approximation", "log10(1/eps)", "||f||", logy=True)
    return Output(list(curve.columns) + ["set"], rows, metrics, plot)


def _exp_varcoef(cfg: ExperimentConfig) -> Output:
    ctrl, obs = cfg.geometry.domains()
    ident = coefficient_preset("identity", dim=2)
    rows, errors = [], []
    for N in cfg.resolutions:
        box = fd_box_for(obs, ctrl, cells=N)
        src, tgt = lattice_grid(obs, box), lattice_grid(ctrl, box)
        gen = assemble_generalized_stack(ident, src, tgt, box)
        worst = 0.0
        for j, comp in enumerate(gen.components, start=1):
            ref = assemble_truncated_riesz(j, src, tgt).matrix
            err = float(np.linalg.norm(comp.matrix - ref) / np.linalg.norm(ref))
            worst = max(worst, err)
            rows.append([N, box.h, box.half_width, j, err])
        errors.append(worst)
    metrics = {"errors": errors, "resolutions": list(cfg.resolutions),
               "decreasing": bool(np.all(np.diff(errors) < 0)),
               "coefficient": cfg.coefficient.preset}
    coef = cfg.coefficient.build(2)
    if not coef.is_identity:
        box = fd_box_for(obs, ctrl, cells=cfg.control_resolution)
        src, tgt = lattice_grid(obs, box), lattice_grid(ctrl, box)
        op = assemble_generalized_stack(coef, src, tgt, box)
        h = _target_fn(cfg, src)
        res = _solve(cfg, ControlProblem(op, h, cfg.eps[0]))
        metrics.update({"control_eps": cfg.eps[0], "control_residual": res.residual,
                        "control_cost": res.cost})
    return Output(["cells", "h", "half_width", "axis", "rel_error"], rows, metrics)


DISPATCH: dict[str, Callable[[ExperimentConfig], Output]] = {
    "assemble": _exp_assemble,
    "svd": _exp_svd,
    "extend": _exp_extend,
    "probe-smallness": _exp_probe_smallness,
    "probe-trace": _exp_probe_trace,
    "stability-fit": _exp_stability,
    "control": _exp_control,
    "cost-curve": _exp_cost_curve,
    "varcoef-validate": _exp_varcoef,
}


# -- running -------------------------------------------------------------------------


def summary_schema() -> dict:
    text = resources.files("trunctx").joinpath("schemas/summary.schema.json").read_text("utf-8")
    return json.loads(text)


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else None
    return value


@dataclass
class RunOutcome:
    status: int
    out_dir: Path | None
    summary: dict | None = None
    error: str | None = None


def run_experiment(config, out_dir=None, seed: int | None = None,
                   resolution: int | None = None) -> RunOutcome:
    """Validate, run and write artifacts; never raises for validation or solver failures.

    Exit status 0 on success, 2 for invalid input, 3 when a solver does not
    converge. Files written by a failed run are removed again.
    """
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if resolution is not None:
            updates["resolution"] = resolution
        if updates:
            cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **updates})
    except pydantic.ValidationError as exc:
        return RunOutcome(EXIT_VALIDATION, None, error=_format_errors(exc))
    except ValidationError as exc:
        return RunOutcome(EXIT_VALIDATION, None, error=str(exc))

    chash = config_hash(cfg)
    target = Path(out_dir or cfg.output or f"runs/{cfg.experiment}-{chash[:8]}")
    existed = target.exists()
    target.mkdir(parents=True, exist_ok=True)
    before = set(target.iterdir())
    try:
        out = DISPATCH[cfg.experiment](cfg)
        write_csv(target / "results.csv", out.header, out.rows)
        for writer in out.files.values():
            writer(target)
        if out.plot is not None:
            (target / "plot.svg").write_text(out.plot, encoding="utf-8")
        summary = _clean({
            "experiment": cfg.experiment,
            "version": __version__,
            "config_hash": chash,
            "geometry_hash": geometry_hash(cfg),
            "seed": cfg.seed,
            "resolution": cfg.resolution,
            "columns": out.header,
            "rows": len(out.rows),
            **out.metrics,
        })
        jsonschema.validate(summary, summary_schema())
        write_json(target / "summary.json", summary)
        files = sorted(p.name for p in target.iterdir() if p not in before)
        write_json(target / "manifest.json", {
            "experiment": cfg.experiment,
            "version": __version__,
            "config_hash": chash,
            "geometry_hash": geometry_hash(cfg),
            "seed": cfg.seed,
            "config": cfg.model_dump(mode="json"),
            "files": files + ["manifest.json"],
        })
        return RunOutcome(EXIT_OK, target, summary)
    except ConvergenceError as exc:
        _remove_new(target, before, existed)
        return RunOutcome(EXIT_CONVERGENCE, None, error=f"solver did not converge: {exc}")
    except (ValidationError, ValueError) as exc:
        _remove_new(target, before, existed)
        return RunOutcome(EXIT_VALIDATION, None, error=str(exc))
    except BaseException:
        _remove_new(target, before, existed)
        raise


def _remove_new(target: Path, before: set, existed: bool):
    if not existed:
        shutil.rmtree(target, ignore_errors=True)
        return
    for p in target.iterdir():
        if p not in before:
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            else:
                p.unlink(missing_ok=True)
