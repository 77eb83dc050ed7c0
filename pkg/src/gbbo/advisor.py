"""Stateless suggestion logic.

`suggest` is a pure function of (task spec, history, seed): it rebuilds the
surrogates from the observation history on every call, which lets any server
resume a task from the shared log.  Pending evaluations are imputed with the
per-dimension median of the completed results before refitting, which drives
the acquisition to zero at the pending points and so keeps parallel
suggestions apart.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import acquisition as acq
from .space import (
    Configuration,
    SearchSpace,
    TaskSpec,
    default_configuration,
    encoded_width,
    encoding_layout,
    from_unit_vector,
    sample_random,
    to_index_vector,
    to_unit_vector,
)
from .surrogate import (
    GPHyper,
    GPModel,
    PRFModel,
    PRFParams,
    SurrogateKind,
    fit_gp,
    fit_gp_fixed,
    fit_prf,
)

__all__ = [
    "COMPLETED",
    "RUNNING",
    "READY",
    "Observation",
    "History",
    "AlgorithmPlan",
    "AdvisorError",
    "select_algorithm",
    "impute_pending",
    "initial_design",
    "suggest",
    "suggest_batch",
    "derive_seed",
]

COMPLETED = "Completed"
RUNNING = "Running"
READY = "Ready"


class AdvisorError(RuntimeError):
    """Structured advisor failure; the service treats it as 'fall back to random'."""


@dataclass(frozen=True)
class Observation:
    config: Configuration
    objectives: tuple[float, ...] = ()
    constraints: tuple[float, ...] = ()
    trial_state: str = COMPLETED
    elapsed: float = 0.0
    timestamp: float = 0.0
    trial_id: str = ""

    def __post_init__(self) -> None:
        if self.trial_state == COMPLETED:
            values = list(self.objectives) + list(self.constraints)
            if not all(np.isfinite(values)):
                raise ValueError("completed observation must be finite")


@dataclass(frozen=True)
class History:
    task_id: str = ""
    completed: tuple[Observation, ...] = ()
    pending: tuple[Observation, ...] = ()

    def __post_init__(self) -> None:
        done = {o.trial_id for o in self.completed if o.trial_id}
        running = {o.trial_id for o in self.pending if o.trial_id}
        if done & running:
            raise ValueError(f"trials both completed and pending: {done & running}")

    def with_pending(self, config: Configuration, trial_id: str = "") -> "History":
        obs = Observation(config=config, trial_state=RUNNING, trial_id=trial_id)
        return replace(self, pending=self.pending + (obs,))


@dataclass(frozen=True)
class AlgorithmPlan:
    surrogate: str
    acquisition: str  # EI | EHVI | EHVI-MC | Random
    constraint_handling: str  # none | PoF
    acq_optimizer: str  # continuous | mixed


def select_algorithm(spec: TaskSpec, history_len: int) -> AlgorithmPlan:
    """Decision table mapping task shape to surrogate/acquisition choices.

    The forest replaces the GP whenever conditions, more than 50 parameters,
    or more than 500 trials would make the GP awkward or cubic-cost heavy.
    """
    surrogate = SurrogateKind.GP
    if (
        spec.space.conditions
        or len(spec.space.parameters) > 50
        or history_len > 500
    ):
        surrogate = SurrogateKind.PRF
    p = spec.num_objectives
    if spec.algorithm == "random":
        acquisition = "Random"
    elif p == 1:
        acquisition = "EI"
    elif p < 5:
        acquisition = "EHVI"
    else:
        acquisition = "EHVI-MC"
    return AlgorithmPlan(
        surrogate=surrogate,
        acquisition=acquisition,
        constraint_handling="PoF" if spec.num_constraints > 0 else "none",
        acq_optimizer="continuous" if spec.space.is_purely_numeric() else "mixed",
    )


def impute_pending(
    completed: Sequence[Observation], pending: Sequence[Observation]
) -> tuple[Observation, ...]:
    """Augment the history with pending configs imputed at the median result."""
    if not completed:
        raise AdvisorError("need observations before imputation")
    y = np.array([o.objectives for o in completed], dtype=float)
    med_y = tuple(float(v) for v in np.median(y, axis=0))
    if completed[0].constraints:
        c = np.array([o.constraints for o in completed], dtype=float)
        med_c = tuple(float(v) for v in np.median(c, axis=0))
    else:
        med_c = ()
    imputed = tuple(
        Observation(
            config=o.config,
            objectives=med_y,
            constraints=med_c,
            trial_state=COMPLETED,
            trial_id=o.trial_id,
        )
        for o in pending
    )
    return tuple(completed) + imputed


def derive_seed(*parts) -> int:
    """Stable cross-process seed from arbitrary hashable parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


# ---------------------------------------------------------------------------
# Initial design
# ---------------------------------------------------------------------------


def n_initial(space: SearchSpace) -> int:
    return max(3, len(space.parameters) + 1)


def initial_design(spec: TaskSpec, seed: int) -> list[Configuration]:
    """Space defaults first, then latin-hypercube style stratified samples."""
    space = spec.space
    n = n_initial(space)
    designs = [default_configuration(space)]
    m = n - 1
    if m > 0:
        rng = np.random.default_rng(derive_seed("init", seed))
        dim = encoded_width(space)
        cols = np.empty((m, dim))
        for d in range(dim):
            cols[:, d] = (rng.permutation(m) + rng.uniform(size=m)) / m
        designs.extend(from_unit_vector(space, row) for row in cols)
    return designs


# ---------------------------------------------------------------------------
# Surrogate fitting with memoized hyperparameter search
# ---------------------------------------------------------------------------

_HYPER_CACHE: OrderedDict[bytes, GPHyper] = OrderedDict()
_HYPER_CACHE_LIMIT = 512


def _mle_anchor(n: int) -> int:
    """History size the evidence search is anchored at for history size n.

    Every size below 20; steps of 10/20/40 beyond that, so hyperparameters
    (memoized by data digest) are reused between anchor crossings.  Pure
    function of n, so suggestions stay reproducible.
    """
    if n <= 20:
        return n
    if n <= 100:
        return max(n - n % 10, 20)
    if n <= 200:
        return n - n % 20
    return n - n % 40


_MLE_CAP = 100  # strided-subsample size cap for the cubic-cost evidence search


def _gp_restarts(m: int) -> int:
    if m <= 40:
        return 4
    return 2


def fit_gp_cached(
    X: np.ndarray,
    y: np.ndarray,
    cont_cols: Sequence[int],
    cat_groups: Sequence[tuple[int, int]],
    n_hyper: int | None = None,
) -> GPModel:
    """GP fit whose evidence search runs on an anchored subsample and is
    memoized by content digest; the returned posterior conditions on all rows.

    `n_hyper` bounds the rows the evidence search may see (the advisor passes
    the completed count so imputed pending rows never churn the cache).
    Memoization only skips recomputing a deterministic function, so results
    are identical across processes and restarts.
    """
    n = len(y)
    n_hyper = n if n_hyper is None else max(min(n_hyper, n), 2)
    anchor = _mle_anchor(n_hyper)
    if anchor >= n:
        X_fit, y_fit = X, y
    elif anchor <= _MLE_CAP:
        X_fit, y_fit = X[:anchor], y[:anchor]
    else:
        idx = np.unique(np.linspace(0, anchor - 1, _MLE_CAP).round().astype(int))
        X_fit, y_fit = X[idx], y[idx]
    key = hashlib.sha256(
        X_fit.tobytes() + y_fit.tobytes() + repr((tuple(cont_cols), tuple(cat_groups))).encode()
    ).digest()
    hyper = _HYPER_CACHE.get(key)
    if hyper is None:
        fit_seed = int.from_bytes(key[:4], "big")
        model = fit_gp(
            X_fit,
            y_fit,
            seed=fit_seed,
            cont_cols=cont_cols,
            cat_groups=cat_groups,
            restarts=_gp_restarts(len(y_fit)),
            maxiter=40,
        )
        hyper = model.hyper
        _HYPER_CACHE[key] = hyper
        if len(_HYPER_CACHE) > _HYPER_CACHE_LIMIT:
            _HYPER_CACHE.popitem(last=False)
        if len(y_fit) == n:
            return model
    return fit_gp_fixed(X, y, hyper, cont_cols=cont_cols, cat_groups=cat_groups)


ModelFactory = Callable[[int, np.ndarray, np.ndarray], object]


class SurrogateSet:
    """Fitted objective and constraint models plus batched prediction."""

    def __init__(
        self,
        spec: TaskSpec,
        plan: AlgorithmPlan,
        observations: Sequence[Observation],
        seed: int,
        objective_model_fn: ModelFactory | None = None,
        n_real: int | None = None,
    ) -> None:
        self.spec = spec
        self.plan = plan
        space = spec.space
        self.layout = encoding_layout(space)
        # imputed pending rows sit at the tail; hyperparameter search sees
        # only the first `n_real` (truly observed) rows
        self.n_real = len(observations) if n_real is None else n_real
        self.unit_X = np.vstack([to_unit_vector(space, o.config) for o in observations])
        if plan.surrogate == SurrogateKind.PRF:
            self.fit_X = np.vstack(
                [to_index_vector(space, o.config) for o in observations]
            )
        else:
            self.fit_X = self.unit_X
        Y = np.array([o.objectives for o in observations], dtype=float)
        C = (
            np.array([o.constraints for o in observations], dtype=float)
            if spec.num_constraints
            else np.zeros((len(observations), 0))
        )
        self.objective_models = []
        for k in range(spec.num_objectives):
            if objective_model_fn is not None:
                self.objective_models.append(objective_model_fn(k, self.fit_X, Y[:, k]))
            else:
                self.objective_models.append(self._fit(Y[:, k], seed + k))
        self.constraint_models = [
            self._fit(C[:, j], seed + 1000 + j) for j in range(spec.num_constraints)
        ]

    def _fit(self, targets: np.ndarray, seed: int):
        if self.plan.surrogate == SurrogateKind.PRF:
            return fit_prf(self.fit_X, targets, PRFParams(), seed=seed)
        return fit_gp_cached(
            self.fit_X,
            targets,
            cont_cols=self.layout.continuous_columns,
            cat_groups=self.layout.cat_groups,
            n_hyper=self.n_real,
        )

    def _rows_for_model(self, unit_rows: np.ndarray) -> np.ndarray:
        if self.plan.surrogate == SurrogateKind.PRF:
            space = self.spec.space
            return np.vstack(
                [
                    to_index_vector(space, from_unit_vector(space, row))
                    for row in unit_rows
                ]
            )
        return unit_rows

    def predict_objectives(self, unit_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = self._rows_for_model(unit_rows)
        means, stds = [], []
        for model in self.objective_models:
            mu, var = model.predict_batch(rows)
            means.append(mu)
            stds.append(np.sqrt(np.maximum(var, 0.0)))
        return np.column_stack(means), np.column_stack(stds)

    def predict_constraints(self, unit_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = self._rows_for_model(unit_rows)
        means, stds = [], []
        for model in self.constraint_models:
            mu, var = model.predict_batch(rows)
            means.append(mu)
            stds.append(np.sqrt(np.maximum(var, 0.0)))
        if not means:
            n = unit_rows.shape[0]
            return np.zeros((n, 0)), np.zeros((n, 0))
        return np.column_stack(means), np.column_stack(stds)


# ---------------------------------------------------------------------------
# Acquisition construction
# ---------------------------------------------------------------------------


def derive_ref_point(spec: TaskSpec, Y: np.ndarray) -> np.ndarray:
    """Task reference point, or nadir + 10% of the observed range."""
    if spec.ref_point is not None:
        return np.asarray(spec.ref_point, dtype=float)
    hi = Y.max(axis=0)
    span = Y.max(axis=0) - Y.min(axis=0)
    return hi + 0.1 * span + 1e-6


def _feasible_mask(observations: Sequence[Observation]) -> np.ndarray:
    return np.array(
        [all(c <= 0 for c in o.constraints) for o in observations], dtype=bool
    )


def build_batch_scorer(
    spec: TaskSpec,
    plan: AlgorithmPlan,
    models: SurrogateSet,
    completed: Sequence[Observation],
    seed: int,
) -> Callable[[np.ndarray], np.ndarray]:
    """Score a matrix of unit-cube rows under the plan's acquisition."""
    Y = np.array([o.objectives for o in completed], dtype=float)
    q = spec.num_constraints
    feasible = _feasible_mask(completed) if q else np.ones(len(completed), dtype=bool)

    if plan.acquisition == "EI":
        feasible_any = bool(feasible.any())
        eta = float(Y[feasible, 0].min()) if feasible_any else float("inf")

        def score(rows: np.ndarray) -> np.ndarray:
            mu, sd = models.predict_objectives(rows)
            if q:
                mu_c, sd_c = models.predict_constraints(rows)
                prob = acq.pof_vec(mu_c, sd_c)
                if not feasible_any:
                    # nothing feasible yet: hunt for feasibility alone
                    return prob
                return acq.ei_vec(mu[:, 0], sd[:, 0], eta) * prob
            return acq.ei_vec(mu[:, 0], sd[:, 0], eta)

        return score

    # multi-objective: expected hypervolume improvement over the feasible front
    ref = derive_ref_point(spec, Y)
    front = acq.ParetoFront.from_points(Y[feasible], ref)

    if plan.acquisition == "EHVI":

        def score(rows: np.ndarray) -> np.ndarray:
            mu, sd = models.predict_objectives(rows)
            values = acq.ehvi2d_vec(mu, sd, front)
            if q:
                mu_c, sd_c = models.predict_constraints(rows)
                values = values * acq.pof_vec(mu_c, sd_c)
            return values

        return score

    mc_seed = derive_seed("ehvi-mc", seed)

    def score(rows: np.ndarray) -> np.ndarray:
        from .surrogate import GaussianPrediction

        mu, sd = models.predict_objectives(rows)
        values = np.zeros(rows.shape[0])
        for i in range(rows.shape[0]):
            preds = [
                GaussianPrediction(float(mu[i, k]), float(sd[i, k] ** 2))
                for k in range(mu.shape[1])
            ]
            values[i] = acq.ehvi_mc(preds, front, draws=128, seed=mc_seed + i)[0]
        if q:
            mu_c, sd_c = models.predict_constraints(rows)
            values = values * acq.pof_vec(mu_c, sd_c)
        return values

    return score


# ---------------------------------------------------------------------------
# Suggestion entry points
# ---------------------------------------------------------------------------


def _used_vectors(spec: TaskSpec, history: History) -> np.ndarray:
    rows = [to_unit_vector(spec.space, o.config) for o in history.pending]
    if rows:
        return np.vstack(rows)
    return np.zeros((0, encoded_width(spec.space)))


def _collides(vec: np.ndarray, used: np.ndarray, tol: float = 1e-12) -> bool:
    if used.shape[0] == 0:
        return False
    return bool(np.any(np.max(np.abs(used - vec), axis=1) <= tol))


def _fresh_random(
    spec: TaskSpec, used: np.ndarray, seed: int, attempts: int = 200
) -> Configuration:
    for i in range(attempts):
        config = sample_random(spec.space, derive_seed("fresh", seed, i), 1)[0]
        if not _collides(to_unit_vector(spec.space, config), used):
            return config
    raise AdvisorError("could not draw a configuration distinct from pending set")


def _acq_budget(plan: AlgorithmPlan, n: int) -> dict:
    """Probe/restart budget for the inner acquisition optimizer."""
    if plan.acquisition == "EHVI-MC":
        return {"n_probes": 96, "restarts": 4, "iterations": 6}
    if n < 300:
        return {"n_probes": 320, "restarts": 3, "iterations": 16}
    return {"n_probes": 256, "restarts": 3, "iterations": 12}


def suggest(
    spec: TaskSpec,
    history: History,
    seed: int,
    objective_model_fn: ModelFactory | None = None,
) -> Configuration:
    """Propose the next configuration to evaluate.

    Cold start walks through the initial design; afterwards the history
    (with pending points median-imputed) is refit and the planned
    acquisition is maximized.  Identical (spec, history, seed) give an
    identical suggestion in any process.
    """
    used = _used_vectors(spec, history)
    completed = history.completed
    plan = select_algorithm(spec, len(completed))

    if plan.acquisition == "Random":
        return _fresh_random(spec, used, seed)

    if len(completed) < n_initial(spec.space):
        for config in initial_design(spec, seed):
            vec = to_unit_vector(spec.space, config)
            if not _collides(vec, used) and not any(
                np.max(np.abs(to_unit_vector(spec.space, o.config) - vec)) <= 1e-12
                for o in completed
            ):
                return config
        return _fresh_random(spec, used, seed)

    d_aug = impute_pending(completed, history.pending)
    try:
        models = SurrogateSet(
            spec, plan, d_aug, seed, objective_model_fn, n_real=len(completed)
        )
        scorer = build_batch_scorer(spec, plan, models, d_aug, seed)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise AdvisorError(f"surrogate fit failed: {exc}") from exc

    def score_one(config: Configuration) -> float:
        return float(scorer(to_unit_vector(spec.space, config)[None, :])[0])

    best = acq.optimize_acq(
        spec.space,
        score_one,
        strategy=plan.acq_optimizer,
        seed=seed,
        batch_score=scorer,
        **_acq_budget(plan, len(d_aug)),
    )
    if _collides(to_unit_vector(spec.space, best), used):
        return _fresh_random(spec, used, seed)
    return best


def suggest_batch(
    spec: TaskSpec,
    history: History,
    m: int,
    seed: int,
    objective_model_fn: ModelFactory | None = None,
) -> list[Configuration]:
    """m suggestions, each computed with the previous ones marked pending."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    configs: list[Configuration] = []
    current = history
    for i in range(m):
        call_seed = seed if i == 0 else derive_seed("batch", seed, i)
        config = suggest(spec, current, call_seed, objective_model_fn)
        configs.append(config)
        current = current.with_pending(config, trial_id=f"__batch{i}")
    return configs
