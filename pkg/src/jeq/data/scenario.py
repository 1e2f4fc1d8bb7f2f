"""Scenario files: schema, loading and construction of the library objects.

Scenarios are JSON or YAML documents (JSON is a subset of YAML, both go through
`yaml.safe_load`) validated by pydantic models. Potential expressions use a closed
grammar: numbers, the coordinates x1..x{2n}, pi, + - *, parentheses and cos, sin, exp.
"""
import re
from typing import List, Literal, Optional, Union

import numpy as np
import sympy as sp
import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from jeq.errors import ConfigInvalid, DegenerateClass
from jeq.geom.core import Grid, HermitianField, PotentialField, ddc
from jeq.models.classes import SurfaceClassData
from jeq.models.cusp import (
    CuspGeometry,
    FlatTorusDivisor,
    PointDivisor,
    background_coefficients,
)
from jeq.opt.path import PathConfig

TASKS = ("solve-torus", "solve-cusp", "check-subsolution", "classes", "energies",
         "sweep")

Exact = Union[int, float, str]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    n: int = Field(ge=1, le=3)
    N: int = Field(ge=8)
    periods: Optional[List[float]] = None


class FormSection(_Section):
    """A (1,1)-form: constant Hermitian part `flat` (identity if omitted) plus dd^c of
    `potential`. `flat_imag` holds the imaginary part of the constant matrix."""
    flat: Optional[List[List[float]]] = None
    flat_imag: Optional[List[List[float]]] = None
    potential: Optional[str] = None


class MetricsSection(_Section):
    omega: FormSection
    chi: FormSection


class PathSection(_Section):
    eps0: float = Field(gt=0)
    eps_floor: float = Field(gt=0)
    t_step: float = Field(gt=0, le=1)
    newton_tol: float = Field(gt=0)
    delta0_monitor: float = Field(gt=0)
    max_newton_iters: int = 30
    min_t_step: float = 1e-6
    krylov_rtol: float = 1e-8
    krylov_restart: int = 50
    normalize: bool = True


class CuspSection(_Section):
    n: int = Field(default=2, ge=2)
    A: float = 1.0
    T: float = 20.0
    Mt: int = Field(default=400, ge=16)
    a: Optional[float] = None
    b: float = Field(gt=0)
    CD: Optional[float] = None
    sD: Optional[float] = None
    boundary: float = 0.0
    chi_tail: float = 0.0
    chi_rate: float = 1.0
    tol: float = 1e-10
    divisor: Literal["point", "flat_torus"] = "point"
    omega_D: float = 1.0
    chi_D: float = 1.0
    perturbation: float = 0.0
    boundary_perturbation: float = 0.0
    N_D: int = 8

    @model_validator(mode="after")
    def _one_trace_source(self):
        if self.divisor == "point":
            if (self.CD is None) == (self.sD is None):
                raise ValueError("give exactly one of CD and sD for a point divisor")
            if self.sD is not None and self.a is None and self.sD >= self.n:
                raise ValueError("sD must be < n to determine a")
        return self


class ClassesSection(_Section):
    Q: List[List[Exact]]
    omega: List[Exact]
    chi: List[Exact]
    D: List[Exact]
    KX: Optional[List[Exact]] = None
    no_negative_curves: bool = False
    a: Exact = 1


class EnergiesSection(_Section):
    states: List[str] = Field(min_length=1)
    T: Optional[FormSection] = None


class SubsolutionSection(_Section):
    ts: List[float] = [0.0, 0.25, 0.5, 0.75, 1.0]
    rho: Optional[str] = None
    eta: float = 0.0
    form_step: float = 1e-3


class SweepSection(_Section):
    task: Literal["solve-torus", "solve-cusp", "check-subsolution", "classes",
                  "energies"]
    parameter: str
    values: List[Union[float, int, str]] = Field(min_length=1)


REQUIRED = {
    "solve-torus": ("grid", "metrics", "path"),
    "check-subsolution": ("grid", "metrics"),
    "energies": ("grid", "metrics", "energies"),
    "solve-cusp": ("cusp",),
    "classes": ("classes",),
}


class Scenario(_Section):
    task: Literal["solve-torus", "solve-cusp", "check-subsolution", "classes",
                  "energies", "sweep"]
    grid: Optional[GridSection] = None
    metrics: Optional[MetricsSection] = None
    path: Optional[PathSection] = None
    cusp: Optional[CuspSection] = None
    classes: Optional[ClassesSection] = None
    energies: Optional[EnergiesSection] = None
    subsolution: SubsolutionSection = SubsolutionSection()
    sweep: Optional[SweepSection] = None

    @model_validator(mode="after")
    def _sections_present(self):
        task = self.task
        if task == "sweep":
            if self.sweep is None:
                raise ValueError("missing section 'sweep'")
            task = self.sweep.task
        for section in REQUIRED[task]:
            if getattr(self, section) is None:
                raise ValueError(f"missing section '{section}' for task {task}")
        return self


# loading ----------------------------------------------------------------------

def _locate(text: str, loc: tuple) -> Optional[int]:
    """1-based line of the deepest existing key along `loc`."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == str(key)]
            if not match:
                break
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) \
                and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def validate_scenario(raw: dict, text: str = "") -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigInvalid("scenario must be a mapping", field="")
    try:
        return Scenario.model_validate(raw)
    except ValidationError as err:
        first = err.errors()[0]
        loc = tuple(part for part in first["loc"]
                    if not str(part).startswith("function-"))
        field = ".".join(str(part) for part in loc)
        message = first["msg"]
        if first["type"] == "missing":
            message = f"missing required field '{field}'"
        raise ConfigInvalid(f"{field}: {message}" if field else message, field=field,
                            line=_locate(text, loc)) from err


def load_scenario(path) -> tuple:
    """Read and validate a scenario file. Returns (Scenario, raw mapping)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigInvalid(f"cannot read scenario {path}: {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigInvalid(f"scenario {path} does not parse: {err}",
                            line=None if mark is None else mark.line + 1) from err
    scenario = validate_scenario(raw, text)
    logger.info(f"scenario {path}: task {scenario.task}")
    return scenario, raw


# construction -----------------------------------------------------------------

_TOKEN = re.compile(r"\s+|[A-Za-z_][A-Za-z_0-9]*"
                    r"|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+*()]")
_FUNCTIONS = {"cos": sp.cos, "sin": sp.sin, "exp": sp.exp}


def parse_expression(text: str, n: int, field: str = "expression") -> sp.Expr:
    """Parse a potential expression of the closed grammar over x1..x{2n}."""
    coordinates = {f"x{a + 1}": sp.Symbol(f"x{a + 1}", real=True) for a in range(2 * n)}
    tokens = _TOKEN.findall(text)
    if "".join(tokens) != text or "**" in text:
        raise ConfigInvalid(f"{field}: unsupported characters in {text!r}", field=field)
    allowed = set(coordinates) | set(_FUNCTIONS) | {"pi"}
    for token in tokens:
        if token[:1].isalpha() or token[:1] == "_":
            if token not in allowed:
                raise ConfigInvalid(f"{field}: unknown name {token!r}", field=field)
    local = dict(coordinates, pi=sp.pi, **_FUNCTIONS)
    try:
        return sp.parse_expr(text, local_dict=local, global_dict={"Integer": sp.Integer,
                                                                  "Float": sp.Float,
                                                                  "Symbol": sp.Symbol})
    except Exception as err:
        raise ConfigInvalid(f"{field}: cannot parse {text!r}", field=field) from err


def evaluate_expression(text: str, grid: Grid, field: str = "expression") -> np.ndarray:
    expr = parse_expression(text, grid.n, field)
    symbols = [sp.Symbol(f"x{a + 1}", real=True) for a in range(2 * grid.n)]
    values = sp.lambdify(symbols, expr, "numpy")(*grid.coordinates())
    return np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy()


def build_grid(section: GridSection) -> Grid:
    try:
        return Grid(section.n, section.N, None if section.periods is None
                    else tuple(section.periods))
    except ValueError as err:
        raise ConfigInvalid(f"grid: {err}", field="grid") from err


def build_potential(text: str, grid: Grid, field: str) -> PotentialField:
    return PotentialField(grid, evaluate_expression(text, grid, field))


def build_form(section: FormSection, grid: Grid, field: str) -> HermitianField:
    n = grid.n
    flat = np.eye(n) if section.flat is None else np.asarray(section.flat, dtype=float)
    imag = np.zeros((n, n)) if section.flat_imag is None \
        else np.asarray(section.flat_imag)
    if flat.shape != (n, n) or imag.shape != (n, n):
        raise ConfigInvalid(f"{field}.flat must be a {n}x{n} matrix",
                            field=f"{field}.flat")
    form = HermitianField.constant(grid, flat + 1j * imag)
    if section.potential is not None:
        phi = build_potential(section.potential, grid, f"{field}.potential")
        form = form + ddc(phi)
    return form


def build_metrics(scenario: Scenario, grid: Grid) -> tuple:
    metrics = scenario.metrics
    return (build_form(metrics.omega, grid, "metrics.omega"),
            build_form(metrics.chi, grid, "metrics.chi"))


def path_config(section: PathSection) -> PathConfig:
    try:
        return PathConfig(
            eps0=section.eps0, eps_floor=section.eps_floor, t_step=section.t_step,
            newton_tol=section.newton_tol, delta0_monitor=section.delta0_monitor,
            max_newton_iters=section.max_newton_iters, min_t_step=section.min_t_step,
            krylov_rtol=section.krylov_rtol, krylov_restart=section.krylov_restart)
    except ValueError as err:
        raise ConfigInvalid(f"path: {err}", field="path") from err


def build_cusp(section: CuspSection) -> tuple:
    """(CuspGeometry, boundary values) of a cusp section."""
    common = dict(A=section.A, T=section.T, Mt=section.Mt, chi_tail=section.chi_tail,
                  chi_rate=section.chi_rate)
    try:
        if section.divisor == "flat_torus":
            divisor = FlatTorusDivisor(omega_D=section.omega_D, chi_D=section.chi_D,
                                       perturbation=section.perturbation, N=section.N_D)
            a = section.a
            if a is None:
                a = section.b / (section.n - divisor.s)
            geometry = CuspGeometry(n=section.n, a=a, b=section.b, divisor=divisor,
                                    **common)
            x = divisor.grid.coordinates()[0]
            boundary = section.boundary + section.boundary_perturbation * np.cos(x)
            return geometry, boundary
        if section.CD is not None:
            a = background_coefficients(section.b, section.CD, section.n) \
                if section.a is None else section.a
            geometry = CuspGeometry.from_classes(section.n, section.b, section.CD, a=a,
                                                 **common)
        else:
            a = section.b / (section.n - section.sD) if section.a is None else section.a
            geometry = CuspGeometry(n=section.n, a=a, b=section.b,
                                    divisor=PointDivisor(section.sD), **common)
    except (ValueError, DegenerateClass) as err:
        raise ConfigInvalid(f"cusp: {err}", field="cusp") from err
    return geometry, section.boundary


def build_classes(section: ClassesSection) -> SurfaceClassData:
    try:
        return SurfaceClassData(Q=section.Q, omega=section.omega, chi=section.chi,
                                D=section.D, KX=section.KX,
                                no_negative_curves=section.no_negative_curves)
    except (ValueError, sp.SympifyError) as err:
        raise ConfigInvalid(f"classes: {err}", field="classes") from err


def set_dotted(raw: dict, dotted: str, value) -> None:
    """Set raw["a"]["b"] = value for dotted = "a.b"."""
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigInvalid(f"sweep parameter {dotted!r} does not exist",
                                field="sweep.parameter")
        node = node[key]
    node[keys[-1]] = value
