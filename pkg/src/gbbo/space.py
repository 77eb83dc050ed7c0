"""Search spaces, task descriptions, configuration encoding and anonymization.

A search space is an ordered set of typed parameters (FLOAT, INTEGER,
ORDINAL, CATEGORICAL) plus equal-conditions that activate a child parameter
only when its parent holds a specific value.  Tasks are described by a JSON
document (see :func:`parse_task`) that bundles the space with trial budgets
and execution settings.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ParamKind",
    "Parameter",
    "Condition",
    "SearchSpace",
    "Configuration",
    "TaskSpec",
    "PrivacyCodec",
    "TaskParseError",
    "parse_task",
    "sample_random",
    "validate_config",
    "to_unit_vector",
    "from_unit_vector",
    "to_index_vector",
    "encoded_width",
    "anonymize",
    "deanonymize",
]


class ParamKind(Enum):
    FLOAT = "float"
    INTEGER = "int"
    ORDINAL = "ord"
    CATEGORICAL = "cat"


_NUMERIC_KINDS = (ParamKind.FLOAT, ParamKind.INTEGER)
_CHOICE_KINDS = (ParamKind.ORDINAL, ParamKind.CATEGORICAL)


class TaskParseError(ValueError):
    """Raised for malformed task descriptions; message carries a location hint."""


@dataclass(frozen=True)
class Parameter:
    """One typed dimension of a search space."""

    name: str
    kind: ParamKind
    low: float | None = None
    high: float | None = None
    choices: tuple[Any, ...] = ()
    default: Any = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if self.kind in _NUMERIC_KINDS:
            if self.low is None or self.high is None:
                raise ValueError(f"{self.name}: numeric parameter needs bounds")
            if not (math.isfinite(self.low) and math.isfinite(self.high)):
                raise ValueError(f"{self.name}: bounds must be finite")
            if not self.low < self.high:
                raise ValueError(f"{self.name}: low must be < high")
            if self.kind is ParamKind.INTEGER and (
                int(self.low) != self.low or int(self.high) != self.high
            ):
                raise ValueError(f"{self.name}: integer bounds must be integers")
        else:
            if not self.choices:
                raise ValueError(f"{self.name}: choice parameter needs choices")
            if len(set(self.choices)) != len(self.choices):
                raise ValueError(f"{self.name}: duplicate choices")
        if self.default is not None and not self.contains(self.default):
            raise ValueError(f"{self.name}: default {self.default!r} outside domain")

    def contains(self, value: Any) -> bool:
        if self.kind is ParamKind.FLOAT:
            return (
                isinstance(value, (int, float))
                and not isinstance(value, bool)
                and math.isfinite(float(value))
                and self.low <= float(value) <= self.high
            )
        if self.kind is ParamKind.INTEGER:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return False
            return float(value) == int(value) and self.low <= int(value) <= self.high
        return value in self.choices

    def fallback_value(self) -> Any:
        """Value used to impute an inactive parameter: default, else low/first."""
        if self.default is not None:
            return self.default
        if self.kind is ParamKind.FLOAT:
            return self.low
        if self.kind is ParamKind.INTEGER:
            return int(self.low)
        return self.choices[0]

    @property
    def num_values(self) -> int:
        """Domain size for discrete kinds."""
        if self.kind is ParamKind.INTEGER:
            return int(self.high) - int(self.low) + 1
        if self.kind in _CHOICE_KINDS:
            return len(self.choices)
        raise ValueError(f"{self.name}: FLOAT has no finite domain size")


@dataclass(frozen=True)
class Condition:
    """Equal-condition: `child` is active only when `parent` == `value`."""

    parent: str
    child: str
    value: Any

    def __post_init__(self) -> None:
        if self.parent == self.child:
            raise ValueError(f"self-condition on {self.parent!r}")


@dataclass(frozen=True)
class SearchSpace:
    parameters: tuple[Parameter, ...]
    conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        if not self.parameters:
            raise ValueError("no parameters")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        by_name = {p.name: p for p in self.parameters}
        children = set()
        for c in self.conditions:
            if c.parent not in by_name:
                raise ValueError(f"condition references unknown parent {c.parent!r}")
            if c.child not in by_name:
                raise ValueError(f"condition references unknown child {c.child!r}")
            if not by_name[c.parent].contains(c.value):
                raise ValueError(
                    f"condition value {c.value!r} outside domain of {c.parent!r}"
                )
            if c.child in children:
                raise ValueError(f"{c.child!r} is child of multiple conditions")
            children.add(c.child)
        # single-level only: a conditioned child may not be a parent itself
        for c in self.conditions:
            if c.parent in children:
                raise ValueError(
                    f"chained condition: {c.parent!r} is itself conditioned"
                )

    def __getitem__(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(p.name == name for p in self.parameters)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def condition_for(self, name: str) -> Condition | None:
        for c in self.conditions:
            if c.child == name:
                return c
        return None

    def active_names(self, assignments: Mapping[str, Any]) -> list[str]:
        """Parameters active under the given (possibly partial) assignments."""
        active = []
        for p in self.parameters:
            cond = self.condition_for(p.name)
            if cond is None or assignments.get(cond.parent) == cond.value:
                active.append(p.name)
        return active

    def is_purely_numeric(self) -> bool:
        return all(p.kind in _NUMERIC_KINDS for p in self.parameters)

    def signature(self) -> str:
        """Stable digest of the space structure; used to pair codecs to spaces."""
        payload = [
            (p.name, p.kind.value, p.low, p.high, list(p.choices), p.default)
            for p in self.parameters
        ] + [("cond", c.parent, c.child, c.value) for c in self.conditions]
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Configuration:
    """A point in a search space: values for the active parameters only."""

    values: tuple[tuple[str, Any], ...]

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Configuration":
        return cls(tuple(sorted(d.items())))

    def as_dict(self) -> dict[str, Any]:
        return dict(self.values)

    def get(self, name: str, default: Any = None) -> Any:
        return self.as_dict().get(name, default)

    def __contains__(self, name: str) -> bool:
        return any(k == name for k, _ in self.values)


@dataclass(frozen=True)
class TaskSpec:
    """Full task description: space plus budgets and execution settings."""

    space: SearchSpace
    number_of_trials: int = 100
    time_budget: float = math.inf
    task_type: str = "so"
    parallel_strategy: str = "async"
    worker_num: int = 1
    use_history: bool = False
    num_objectives: int = 1
    num_constraints: int = 0
    ref_point: tuple[float, ...] | None = None
    algorithm: str = "auto"
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.number_of_trials < 1:
            raise ValueError("number_of_trials must be positive")
        if self.worker_num < 1:
            raise ValueError("worker_num must be >= 1")
        if self.num_objectives < 1:
            raise ValueError("need at least one objective")
        if self.num_constraints < 0:
            raise ValueError("num_constraints must be >= 0")
        if self.parallel_strategy not in ("sync", "async"):
            raise ValueError(f"unknown parallel_strategy {self.parallel_strategy!r}")
        if self.task_type not in ("so", "soc", "mo", "moc"):
            raise ValueError(f"unknown task_type {self.task_type!r}")
        if self.ref_point is not None and len(self.ref_point) != self.num_objectives:
            raise ValueError("ref_point length must equal num_objectives")
        if self.algorithm not in ("auto", "random"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")


# ---------------------------------------------------------------------------
# Task description parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "parameter",
    "condition",
    "number_of_trials",
    "time_budget",
    "task_type",
    "parallel_strategy",
    "worker_num",
    "use_history",
    # extensions beyond the minimal schema (optional)
    "num_objectives",
    "num_constraints",
    "ref_point",
    "algorithm",
    "seed",
}

_PARAM_KEYS = {"type", "bound", "choice", "default"}

# (num_objectives, num_constraints) implied by each task_type tag when the
# explicit keys are absent
_TYPE_DEFAULTS = {"so": (1, 0), "soc": (1, 1), "mo": (2, 0), "moc": (2, 1)}


def _classify(p: int, q: int) -> str:
    if p == 1:
        return "soc" if q > 0 else "so"
    return "moc" if q > 0 else "mo"


def _parse_parameter(name: str, entry: Any) -> Parameter:
    if not isinstance(entry, dict):
        raise TaskParseError(f"parameter {name!r}: entry must be an object")
    unknown = set(entry) - _PARAM_KEYS
    if unknown:
        raise TaskParseError(f"parameter {name!r}: unknown keys {sorted(unknown)}")
    try:
        kind = ParamKind(entry.get("type"))
    except ValueError:
        raise TaskParseError(
            f"parameter {name!r}: unknown type {entry.get('type')!r}"
        ) from None
    default = entry.get("default")
    try:
        if kind in _NUMERIC_KINDS:
            bound = entry.get("bound")
            if (
                not isinstance(bound, (list, tuple))
                or len(bound) != 2
                or not all(isinstance(b, (int, float)) for b in bound)
            ):
                raise TaskParseError(f"parameter {name!r}: bound must be [low, high]")
            if kind is ParamKind.INTEGER and default is not None:
                default = int(default)
            return Parameter(name, kind, float(bound[0]), float(bound[1]), (), default)
        choices = entry.get("choice")
        if not isinstance(choices, list) or not choices:
            raise TaskParseError(f"parameter {name!r}: choice must be a non-empty list")
        return Parameter(name, kind, None, None, tuple(choices), default)
    except ValueError as exc:
        raise TaskParseError(f"parameter {name!r}: {exc}") from None


def parse_task(text: str) -> TaskSpec:
    """Parse a JSON task description into a validated :class:`TaskSpec`.

    Raises :class:`TaskParseError` with a position or key hint on syntax and
    semantic errors; never raises anything else on arbitrary input.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaskParseError(f"syntax error at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    except (UnicodeDecodeError, RecursionError) as exc:
        raise TaskParseError(f"unreadable document: {exc}") from None
    if not isinstance(doc, dict):
        raise TaskParseError("top level must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise TaskParseError(f"unknown top-level keys {sorted(unknown)}")

    params_doc = doc.get("parameter")
    if not isinstance(params_doc, dict) or not params_doc:
        raise TaskParseError("no parameters")
    parameters = tuple(_parse_parameter(n, e) for n, e in params_doc.items())

    conditions = []
    cond_doc = doc.get("condition", {})
    if not isinstance(cond_doc, dict):
        raise TaskParseError("condition block must be an object")
    for cname, centry in cond_doc.items():
        if not isinstance(centry, dict):
            raise TaskParseError(f"condition {cname!r}: entry must be an object")
        if centry.get("type") != "equal":
            raise TaskParseError(
                f"condition {cname!r}: unknown type {centry.get('type')!r}"
            )
        for key in ("parent", "child", "value"):
            if key not in centry:
                raise TaskParseError(f"condition {cname!r}: missing {key!r}")
        try:
            conditions.append(
                Condition(centry["parent"], centry["child"], centry["value"])
            )
        except ValueError as exc:
            raise TaskParseError(f"condition {cname!r}: {exc}") from None

    try:
        space = SearchSpace(parameters, tuple(conditions))
    except ValueError as exc:
        raise TaskParseError(str(exc)) from None

    task_type = doc.get("task_type")
    p = doc.get("num_objectives")
    q = doc.get("num_constraints")
    if task_type is not None and task_type not in _TYPE_DEFAULTS:
        raise TaskParseError(f"unknown task_type {task_type!r}")
    if p is None and q is None:
        p, q = _TYPE_DEFAULTS[task_type or "so"]
    else:
        p = 1 if p is None else p
        q = 0 if q is None else q
        if not isinstance(p, int) or not isinstance(q, int) or p < 1 or q < 0:
            raise TaskParseError("num_objectives/num_constraints out of range")
        if task_type is not None and _classify(p, q) != task_type:
            raise TaskParseError(
                f"task_type {task_type!r} inconsistent with "
                f"{p} objectives / {q} constraints"
            )
    task_type = task_type or _classify(p, q)

    ref_point = doc.get("ref_point")
    if ref_point is not None:
        if not isinstance(ref_point, list) or not all(
            isinstance(v, (int, float)) for v in ref_point
        ):
            raise TaskParseError("ref_point must be a list of numbers")
        ref_point = tuple(float(v) for v in ref_point)

    n_trials = doc.get("number_of_trials", 100)
    budget = doc.get("time_budget", math.inf)
    workers = doc.get("worker_num", 1)
    seed = doc.get("seed")
    if not isinstance(n_trials, int) or isinstance(n_trials, bool):
        raise TaskParseError("number_of_trials must be an integer")
    if not isinstance(budget, (int, float)) or isinstance(budget, bool):
        raise TaskParseError("time_budget must be a number")
    if not isinstance(workers, int) or isinstance(workers, bool):
        raise TaskParseError("worker_num must be an integer")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise TaskParseError("seed must be an integer")

    try:
        return TaskSpec(
            space=space,
            number_of_trials=n_trials,
            time_budget=float(budget),
            task_type=task_type,
            parallel_strategy=doc.get("parallel_strategy", "async"),
            worker_num=workers,
            use_history=bool(doc.get("use_history", False)),
            num_objectives=p,
            num_constraints=q,
            ref_point=ref_point,
            algorithm=doc.get("algorithm", "auto"),
            seed=seed,
        )
    except ValueError as exc:
        raise TaskParseError(str(exc)) from None


def task_to_json(spec: TaskSpec) -> str:
    """Serialize a TaskSpec back to the JSON task-description format."""
    params: dict[str, Any] = {}
    for prm in spec.space.parameters:
        entry: dict[str, Any] = {"type": prm.kind.value}
        if prm.kind in _NUMERIC_KINDS:
            lo, hi = prm.low, prm.high
            if prm.kind is ParamKind.INTEGER:
                lo, hi = int(lo), int(hi)
            entry["bound"] = [lo, hi]
        else:
            entry["choice"] = list(prm.choices)
        if prm.default is not None:
            entry["default"] = prm.default
        params[prm.name] = entry
    doc: dict[str, Any] = {"parameter": params}
    if spec.space.conditions:
        doc["condition"] = {
            f"cdn{i + 1}": {
                "type": "equal",
                "parent": c.parent,
                "child": c.child,
                "value": c.value,
            }
            for i, c in enumerate(spec.space.conditions)
        }
    doc["number_of_trials"] = spec.number_of_trials
    if math.isfinite(spec.time_budget):
        doc["time_budget"] = spec.time_budget
    doc["task_type"] = spec.task_type
    doc["parallel_strategy"] = spec.parallel_strategy
    doc["worker_num"] = spec.worker_num
    doc["use_history"] = spec.use_history
    doc["num_objectives"] = spec.num_objectives
    doc["num_constraints"] = spec.num_constraints
    if spec.ref_point is not None:
        doc["ref_point"] = list(spec.ref_point)
    if spec.algorithm != "auto":
        doc["algorithm"] = spec.algorithm
    if spec.seed is not None:
        doc["seed"] = spec.seed
    return json.dumps(doc)


# ---------------------------------------------------------------------------
# Sampling and validation
# ---------------------------------------------------------------------------


def _draw_value(param: Parameter, rng: np.random.Generator) -> Any:
    if param.kind is ParamKind.FLOAT:
        return float(rng.uniform(param.low, param.high))
    if param.kind is ParamKind.INTEGER:
        return int(rng.integers(int(param.low), int(param.high) + 1))
    return param.choices[int(rng.integers(len(param.choices)))]


def sample_random(space: SearchSpace, seed: int, n: int) -> list[Configuration]:
    """Draw n valid configurations uniformly; deterministic given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        assignments: dict[str, Any] = {}
        for p in space.parameters:
            if space.condition_for(p.name) is None:
                assignments[p.name] = _draw_value(p, rng)
        for p in space.parameters:
            cond = space.condition_for(p.name)
            if cond is not None and assignments.get(cond.parent) == cond.value:
                assignments[p.name] = _draw_value(p, rng)
        out.append(Configuration.from_dict(assignments))
    return out


def default_configuration(space: SearchSpace) -> Configuration:
    """Configuration built from per-parameter defaults, conditions respected."""
    assignments: dict[str, Any] = {}
    for p in space.parameters:
        if space.condition_for(p.name) is None:
            assignments[p.name] = p.fallback_value()
    for p in space.parameters:
        cond = space.condition_for(p.name)
        if cond is not None and assignments.get(cond.parent) == cond.value:
            assignments[p.name] = p.fallback_value()
    return Configuration.from_dict(assignments)


def validate_config(space: SearchSpace, config: Configuration) -> list[str]:
    """Return a list of violation messages; empty means the config is valid."""
    violations = []
    values = config.as_dict()
    for name in values:
        if name not in space:
            violations.append(f"{name}: unknown parameter")
    active = set(space.active_names(values))
    for p in space.parameters:
        if p.name in active:
            if p.name not in values:
                violations.append(f"{p.name}: required (active)")
            elif not p.contains(values[p.name]):
                violations.append(
                    f"{p.name}: value {values[p.name]!r} out of bounds"
                )
        elif p.name in values:
            violations.append(f"{p.name}: assigned but inactive")
    return violations


# ---------------------------------------------------------------------------
# Numeric encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodingLayout:
    """Column layout of the unit-cube encoding of a space.

    FLOAT maps affinely onto [0, 1].  INTEGER maps onto cell midpoints
    (2i+1)/(2m) so adjacent values are equidistant.  ORDINAL maps onto the
    scaled rank i/(m-1).  CATEGORICAL occupies one column per choice
    (one-hot).  `cat_groups` lists (start, width) column spans of the
    categorical parameters, which kernels treat as single dimensions.
    """

    names: tuple[str, ...]
    kinds: tuple[ParamKind, ...]
    offsets: tuple[int, ...]
    widths: tuple[int, ...]

    @property
    def total_width(self) -> int:
        return self.offsets[-1] + self.widths[-1] if self.offsets else 0

    @property
    def cat_groups(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (o, w)
            for o, w, k in zip(self.offsets, self.widths, self.kinds)
            if k is ParamKind.CATEGORICAL
        )

    @property
    def continuous_columns(self) -> tuple[int, ...]:
        cols: list[int] = []
        for o, w, k in zip(self.offsets, self.widths, self.kinds):
            if k is not ParamKind.CATEGORICAL:
                cols.extend(range(o, o + w))
        return tuple(cols)


def encoding_layout(space: SearchSpace) -> EncodingLayout:
    names, kinds, offsets, widths = [], [], [], []
    off = 0
    for p in space.parameters:
        w = len(p.choices) if p.kind is ParamKind.CATEGORICAL else 1
        names.append(p.name)
        kinds.append(p.kind)
        offsets.append(off)
        widths.append(w)
        off += w
    return EncodingLayout(tuple(names), tuple(kinds), tuple(offsets), tuple(widths))


def encoded_width(space: SearchSpace) -> int:
    return encoding_layout(space).total_width


def _encode_value(param: Parameter, value: Any) -> list[float]:
    if param.kind is ParamKind.FLOAT:
        return [(float(value) - param.low) / (param.high - param.low)]
    if param.kind is ParamKind.INTEGER:
        m = param.num_values
        i = int(value) - int(param.low)
        return [(2 * i + 1) / (2 * m)]
    if param.kind is ParamKind.ORDINAL:
        m = len(param.choices)
        i = param.choices.index(value)
        return [0.0 if m == 1 else i / (m - 1)]
    onehot = [0.0] * len(param.choices)
    onehot[param.choices.index(value)] = 1.0
    return onehot


def _decode_value(param: Parameter, coords: Sequence[float]) -> Any:
    if param.kind is ParamKind.FLOAT:
        v = param.low + float(coords[0]) * (param.high - param.low)
        return float(min(max(v, param.low), param.high))
    if param.kind is ParamKind.INTEGER:
        m = param.num_values
        i = min(max(int(math.floor(float(coords[0]) * m)), 0), m - 1)
        return int(param.low) + i
    if param.kind is ParamKind.ORDINAL:
        m = len(param.choices)
        i = min(max(int(round(float(coords[0]) * (m - 1))), 0), m - 1)
        return param.choices[i]
    return param.choices[int(np.argmax(coords))]


def to_unit_vector(space: SearchSpace, config: Configuration) -> np.ndarray:
    """Encode a configuration as a fixed-length vector in the unit cube.

    Inactive parameters are imputed with their fallback value so the vector
    length never depends on which conditions fire.
    """
    values = config.as_dict()
    coords: list[float] = []
    for p in space.parameters:
        value = values.get(p.name)
        if value is None:
            value = p.fallback_value()
        coords.extend(_encode_value(p, value))
    return np.asarray(coords, dtype=float)


def from_unit_vector(space: SearchSpace, vector: np.ndarray) -> Configuration:
    """Decode a unit-cube vector back into a configuration.

    Conditions are re-evaluated on the decoded values: inactive children are
    dropped, making decode the exact inverse of encode for valid inputs.
    """
    layout = encoding_layout(space)
    vec = np.asarray(vector, dtype=float).ravel()
    if vec.shape[0] != layout.total_width:
        raise ValueError(
            f"dimension mismatch: expected {layout.total_width}, got {vec.shape[0]}"
        )
    assignments: dict[str, Any] = {}
    for p, off, w in zip(space.parameters, layout.offsets, layout.widths):
        assignments[p.name] = _decode_value(p, vec[off : off + w])
    active = set(space.active_names(assignments))
    return Configuration.from_dict(
        {k: v for k, v in assignments.items() if k in active}
    )


def to_index_vector(space: SearchSpace, config: Configuration) -> np.ndarray:
    """Raw-index encoding (one column per parameter) for tree surrogates.

    FLOAT passes through numerically; discrete kinds map to their index.
    """
    values = config.as_dict()
    coords = []
    for p in space.parameters:
        value = values.get(p.name)
        if value is None:
            value = p.fallback_value()
        if p.kind is ParamKind.FLOAT:
            coords.append(float(value))
        elif p.kind is ParamKind.INTEGER:
            coords.append(float(int(value)))
        else:
            coords.append(float(p.choices.index(value)))
    return np.asarray(coords, dtype=float)


# ---------------------------------------------------------------------------
# Anonymization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrivacyCodec:
    """Bidirectional parameter-name and value-scale transform.

    The anonymized space exposes names "param1..paramN" and semantic-free
    domains: FLOAT becomes [0, 1], INTEGER becomes the cell midpoints
    (2i+1)/(2m), and ORDINAL/CATEGORICAL become the index set 0..K-1.
    """

    name_map: tuple[tuple[str, str], ...]  # (real, anonymous) pairs
    original: SearchSpace = field(repr=False)
    anonymized: SearchSpace | None = field(repr=False, default=None)

    def _forward_name(self, real: str) -> str:
        for r, a in self.name_map:
            if r == real:
                return a
        raise KeyError(real)

    def _inverse_name(self, anon: str) -> str:
        for r, a in self.name_map:
            if a == anon:
                return r
        raise KeyError(anon)

    def _forward_value(self, param: Parameter, value: Any) -> Any:
        if param.kind is ParamKind.FLOAT:
            return (float(value) - param.low) / (param.high - param.low)
        if param.kind is ParamKind.INTEGER:
            m = param.num_values
            i = int(value) - int(param.low)
            return (2 * i + 1) / (2 * m)
        return param.choices.index(value)

    def _inverse_value(self, param: Parameter, value: Any) -> Any:
        if param.kind is ParamKind.FLOAT:
            return param.low + float(value) * (param.high - param.low)
        if param.kind is ParamKind.INTEGER:
            m = param.num_values
            i = int(round(float(value) * 2 * m - 1)) // 2
            return int(param.low) + min(max(i, 0), m - 1)
        return param.choices[int(value)]

    def encode_config(self, config: Configuration) -> Configuration:
        out = {}
        for name, value in config.values:
            param = self.original[name]
            out[self._forward_name(name)] = self._forward_value(param, value)
        return Configuration.from_dict(out)

    def decode_config(self, config: Configuration) -> Configuration:
        if self.anonymized is not None:
            violations = validate_config(self.anonymized, config)
            if violations:
                raise ValueError(f"codec mismatch: {violations[0]}")
        out = {}
        for anon, value in config.values:
            try:
                real = self._inverse_name(anon)
            except KeyError:
                raise ValueError(f"codec mismatch: unknown parameter {anon!r}") from None
            out[real] = self._inverse_value(self.original[real], value)
        return Configuration.from_dict(out)


def anonymize(space: SearchSpace) -> tuple[SearchSpace, PrivacyCodec]:
    """Strip names and semantics from a space; returns the codec to undo it."""
    name_map = tuple(
        (p.name, f"param{i + 1}") for i, p in enumerate(space.parameters)
    )
    forward = dict(name_map)
    anon_params = []
    probe = PrivacyCodec(name_map, space)
    for p in space.parameters:
        anon_name = forward[p.name]
        default = None if p.default is None else probe._forward_value(p, p.default)
        if p.kind is ParamKind.FLOAT:
            anon_params.append(Parameter(anon_name, ParamKind.FLOAT, 0.0, 1.0, (), default))
        elif p.kind is ParamKind.INTEGER:
            m = p.num_values
            cells = tuple((2 * i + 1) / (2 * m) for i in range(m))
            anon_params.append(
                Parameter(anon_name, ParamKind.ORDINAL, None, None, cells, default)
            )
        else:
            idx = tuple(range(len(p.choices)))
            anon_params.append(Parameter(anon_name, p.kind, None, None, idx, default))
    anon_conditions = tuple(
        Condition(
            forward[c.parent],
            forward[c.child],
            probe._forward_value(space[c.parent], c.value),
        )
        for c in space.conditions
    )
    anon_space = SearchSpace(tuple(anon_params), anon_conditions)
    return anon_space, PrivacyCodec(name_map, space, anon_space)


def deanonymize(codec: PrivacyCodec, config: Configuration) -> Configuration:
    """Invert an anonymized configuration; errors on a codec/space mismatch."""
    return codec.decode_config(config)
