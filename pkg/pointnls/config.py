"""
Run configuration: a flat ``key = value`` document (or JSON) validated into a RunConfig.

    sigma = 1
    beta = 1
    q0 = 0.5
    t_end = 1
    match_boundary = true

    [gaussian.1]
    amplitude = 1
    width = 1

    [green.1]
    coefficient = 1
    pole = 2
"""

import configparser
import json
import logging
from pathlib import Path
from typing import Any

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pointnls import PointNLSError
from pointnls.charge import SolverConfig
from pointnls.propagator import InitialDatum
from pointnls.states import ModelParams, match_boundary, rebase_lambda

logger = logging.getLogger(__name__)

DEFAULT_CADENCE_FRACTION = 0.1
_TOP_SECTION = "run"
_PARAM_KEYS = ("sigma", "beta")
_SOLVER_KEYS = ("t_end", "h_init", "h_min", "tol_fp", "q_cap", "max_iter")
_OUTPUT_KEYS = {"output_dir": "directory", "cadence": "cadence", "k_max": "k_max"}
_TOP_KEYS = set(_PARAM_KEYS + _SOLVER_KEYS) | set(_OUTPUT_KEYS) | {"lambda", "q0", "match_boundary", "anchor_width"}
_SECTION_KEYS = {"gaussian": ("amplitude", "width"), "green": ("coefficient", "pole")}
_COMPLEX_KEYS = {"q0", "amplitude", "coefficient"}


class ConfigError(PointNLSError):
    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = violations
        lines = "\n".join(f"  {where}: {message}" for where, message in violations)
        super().__init__(f"invalid configuration ({len(violations)} violation(s)):\n{lines}")


class OutputConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: Path = Path("results")
    cadence: float | None = Field(default=None, gt=0)
    k_max: float = Field(default=200.0, gt=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    params: ModelParams
    datum: InitialDatum
    solver: SolverConfig
    output: OutputConfig = OutputConfig()
    match_boundary: bool = False
    anchor_width: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_run(self) -> Self:
        if self.datum.lam != self.params.lam:
            raise ValueError(f"datum lambda {self.datum.lam!r} differs from model lambda {self.params.lam!r}")
        if abs(self.datum.q0) >= self.solver.q_cap:
            raise ValueError(f"q_cap={self.solver.q_cap!r} must exceed |q0|={abs(self.datum.q0)!r}")
        windows = self.solver.t_end / self.cadence
        if abs(windows - round(windows)) > 1e-9 * windows:
            raise ValueError(f"cadence {self.cadence!r} does not divide t_end {self.solver.t_end!r}")
        return self

    @property
    def cadence(self) -> float:
        return self.output.cadence or DEFAULT_CADENCE_FRACTION * self.solver.t_end

    def output_times(self) -> list[float]:
        count = int(round(self.solver.t_end / self.cadence))
        return [i * self.cadence for i in range(count + 1)]

    def initial_datum(self) -> InitialDatum:
        """The configured datum, boundary-matched on request, in the λ = 1 frame of the solver."""
        datum = self.datum
        if self.match_boundary:
            datum = match_boundary(datum, self.params, self.anchor_width)
        return rebase_lambda(datum, 1.0)

    def solver_params(self) -> ModelParams:
        return self.params.at_lambda(1.0)


def _violations(error: ValidationError) -> list[tuple[str, str]]:
    return [(".".join(str(part) for part in e["loc"]) or "config", e["msg"]) for e in error.errors()]


def _value(key: str, text: str) -> Any:
    if key in _COMPLEX_KEYS:
        try:
            return complex(text.replace(" ", ""))
        except ValueError:
            return text
    return text


def _flat_to_raw(text: str) -> tuple[dict, list[tuple[str, str]]]:
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None)
    problems = []
    try:
        parser.read_string(f"[{_TOP_SECTION}]\n{text}")
    except configparser.Error as e:
        raise ConfigError([("document", str(e).splitlines()[0])])

    top = dict(parser[_TOP_SECTION])
    for key in top:
        if key not in _TOP_KEYS:
            problems.append((key, "unknown key"))
    lam = top.get("lambda", 1.0)

    primitives: dict[str, list[dict]] = {"gaussian": [], "green": []}
    for name in parser.sections():
        if name == _TOP_SECTION:
            continue
        kind, _, index = name.partition(".")
        if kind not in _SECTION_KEYS or not index:
            problems.append((name, "unknown section, expected [gaussian.N] or [green.N]"))
            continue
        entry = {}
        for key, value in parser[name].items():
            if key not in _SECTION_KEYS[kind]:
                problems.append((f"{name}.{key}", "unknown key"))
            entry[key] = _value(key, value)
        primitives[kind].append(entry)

    raw = {
        "params": {key: top[key] for key in _PARAM_KEYS if key in top} | {"lambda": lam},
        "datum": {
            "regular": {"gaussians": primitives["gaussian"],
                        "green_terms": primitives["green"]},
            "q0": _value("q0", top.get("q0", "0")),
            "lambda": lam,
        },
        "solver": {key: top[key] for key in _SOLVER_KEYS if key in top},
        "output": {field: top[key] for key, field in _OUTPUT_KEYS.items() if key in top},
    }
    for key in ("match_boundary", "anchor_width"):
        if key in top:
            raw[key] = top[key]
    return raw, problems


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a run configuration.

    :param text: flat key-value document, or JSON when the first non-blank character is ``{``
    :return: RunConfig with defaults applied
    :raises ConfigError: listing every violation found
    """

    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([("document", f"invalid JSON: {e}")])
        problems = []
    else:
        raw, problems = _flat_to_raw(text)

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(problems + _violations(e))
    if problems:
        raise ConfigError(problems)
    logger.debug("Parsed configuration: sigma=%g beta=%g t_end=%g", config.params.sigma, config.params.beta,
                 config.solver.t_end)
    return config


def load_config(path: Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def serialize_config(config: RunConfig) -> str:
    """Flat document that parses back to an equal RunConfig."""
    params, datum, solver, output = config.params, config.datum, config.solver, config.output
    lines = [
        f"sigma = {params.sigma!r}",
        f"beta = {params.beta!r}",
        f"lambda = {params.lam!r}",
        f"q0 = {datum.q0!r}",
    ]
    lines += [f"{key} = {getattr(solver, key)!r}" for key in _SOLVER_KEYS]
    lines.append(f"output_dir = {output.directory}")
    if output.cadence is not None:
        lines.append(f"cadence = {output.cadence!r}")
    lines.append(f"k_max = {output.k_max!r}")
    lines.append(f"match_boundary = {str(config.match_boundary).lower()}")
    lines.append(f"anchor_width = {config.anchor_width!r}")
    for i, g in enumerate(datum.regular.gaussians, start=1):
        lines += ["", f"[gaussian.{i}]", f"amplitude = {g.amplitude!r}", f"width = {g.width!r}"]
    for i, g in enumerate(datum.regular.green_terms, start=1):
        lines += ["", f"[green.{i}]", f"coefficient = {g.coefficient!r}", f"pole = {g.pole!r}"]
    return "\n".join(lines) + "\n"
