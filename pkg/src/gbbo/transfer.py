"""Transfer learning: ranking-weighted ensembles of per-task surrogates.

One base surrogate is fitted per source task and objective dimension (once,
then cached); the target surrogate is refit every iteration.  Ensemble
weights are the probability, under posterior sampling, that each model has
the fewest misranked pairs on the target observations; prediction combines
the members precision-weighted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import advisor as adv
from .advisor import History, Observation, fit_gp_cached
from .space import TaskSpec, encoding_layout, to_index_vector, to_unit_vector
from .surrogate import (
    GaussianPrediction,
    GPModel,
    PRFParams,
    SurrogateKind,
    fit_prf,
)

__all__ = [
    "TransferEnsemble",
    "TransferAdvisor",
    "ranking_loss",
    "rgpe_weights",
    "combined_predict",
    "build_transfer_advisor",
]

MIN_MODEL_VAR = 1e-8


def ranking_loss(preds: np.ndarray, y: np.ndarray) -> int:
    """Misranked ordered pairs: (pred_j < pred_k) XOR (y_j < y_k) over all (j, k)."""
    preds = np.asarray(preds, dtype=float)
    y = np.asarray(y, dtype=float)
    p_less = preds[:, None] < preds[None, :]
    y_less = y[:, None] < y[None, :]
    return int(np.logical_xor(p_less, y_less).sum())


def _loo_mean_std(model, X: np.ndarray, y: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-out predictive moments of the target model at its own points."""
    if isinstance(model, GPModel):
        mu, var = model.loo_posteriors()
        return mu, np.sqrt(np.maximum(var, 0.0))
    # tree ensembles have no closed form: refit on each held-out split
    n = len(y)
    mu = np.zeros(n)
    sd = np.zeros(n)
    for j in range(n):
        mask = np.arange(n) != j
        refit = fit_prf(X[mask], y[mask], PRFParams(), seed=seed)
        pred = refit.predict(X[j])
        mu[j], sd[j] = pred.mean, pred.std
    return mu, sd


def rgpe_weights(
    base_models: Sequence,
    target_model,
    X_t: np.ndarray,
    y_t: np.ndarray,
    samples: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Simplex weights over [bases..., target] by minimal-ranking-loss frequency.

    Each posterior sample draws every model's predictions at the target
    points; the target's own predictions come from leave-one-out posteriors
    so it cannot trivially win by interpolating its training data.  Ties for
    the minimum split their sample's mass uniformly.
    """
    X_t = np.asarray(X_t, dtype=float)
    y_t = np.asarray(y_t, dtype=float).ravel()
    n = len(y_t)
    if n < 2:
        raise ValueError("need at least two target observations")
    if samples < 1:
        raise ValueError("need at least one posterior sample")

    means, stds = [], []
    for model in base_models:
        mu, var = model.predict_batch(X_t)
        means.append(mu)
        stds.append(np.sqrt(np.maximum(var, 0.0)))
    mu_t, sd_t = _loo_mean_std(target_model, X_t, y_t, seed=seed)
    means.append(mu_t)
    stds.append(sd_t)
    mu_all = np.stack(means)  # (K+1, n)
    sd_all = np.stack(stds)

    rng = np.random.default_rng(seed)
    n_models = mu_all.shape[0]
    z = rng.standard_normal((samples, n_models, n))
    draws = mu_all[None, :, :] + sd_all[None, :, :] * z
    y_less = y_t[:, None] < y_t[None, :]
    p_less = draws[:, :, :, None] < draws[:, :, None, :]
    losses = np.logical_xor(p_less, y_less[None, None, :, :]).sum(axis=(2, 3))

    minima = losses.min(axis=1, keepdims=True)
    winners = losses == minima
    weights = (winners / winners.sum(axis=1, keepdims=True)).sum(axis=0) / samples
    return weights


@dataclass(frozen=True)
class TransferEnsemble:
    """Linear combination of surrogates; last member is the target model."""

    models: tuple
    weights: np.ndarray  # on the simplex, aligned with `models`

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.models):
            raise ValueError("one weight per model required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must lie on the probability simplex")
        if not np.any(w > 0):
            raise ValueError("at least one positive weight required")

    def predict_batch(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        active = [i for i, w in enumerate(self.weights) if w > 0]
        if len(active) == 1:
            return self.models[active[0]].predict_batch(rows)
        mus, precisions = [], []
        for i in active:
            mu, var = self.models[i].predict_batch(rows)
            mus.append(mu)
            precisions.append(self.weights[i] / np.maximum(var, MIN_MODEL_VAR))
        mus = np.stack(mus)
        precisions = np.stack(precisions)
        var_tl = 1.0 / precisions.sum(axis=0)
        mu_tl = (mus * precisions).sum(axis=0) * var_tl
        return mu_tl, var_tl

    def predict(self, x: np.ndarray) -> GaussianPrediction:
        mu, var = self.predict_batch(np.asarray(x, dtype=float).reshape(1, -1))
        return GaussianPrediction(float(mu[0]), float(var[0]))


def combined_predict(ensemble: TransferEnsemble, x: np.ndarray) -> GaussianPrediction:
    """Precision-weighted ensemble prediction at a single point."""
    return ensemble.predict(x)


class TransferAdvisor:
    """Suggestion advisor that folds source-task histories into the surrogate."""

    def __init__(
        self,
        source_histories: Sequence[History],
        spec: TaskSpec,
        weight_samples: int = 100,
    ) -> None:
        self.spec = spec
        self.weight_samples = weight_samples
        self.sources = tuple(source_histories)
        for i, src in enumerate(self.sources):
            mismatched = self._space_mismatches(src)
            if mismatched:
                raise ValueError(
                    f"source history {i} has an incompatible space; "
                    f"mismatched parameters: {sorted(mismatched)}"
                )
        self._layout = encoding_layout(spec.space)
        self._base_models: dict[tuple[int, int], object] = {}

    def _space_mismatches(self, src: History) -> set[str]:
        names = set(self.spec.space.names)
        seen: set[str] = set()
        for o in src.completed:
            seen.update(o.config.as_dict().keys())
        return seen - names

    def _encode(self, observations: Sequence[Observation], kind: str) -> np.ndarray:
        space = self.spec.space
        if kind == SurrogateKind.PRF:
            return np.vstack([to_index_vector(space, o.config) for o in observations])
        return np.vstack([to_unit_vector(space, o.config) for o in observations])

    def _fit_model(self, X: np.ndarray, y: np.ndarray, kind: str, seed: int):
        if kind == SurrogateKind.PRF:
            return fit_prf(X, y, PRFParams(), seed=seed)
        return fit_gp_cached(
            X,
            y,
            cont_cols=self._layout.continuous_columns,
            cat_groups=self._layout.cat_groups,
        )

    def base_model(self, source_idx: int, dim: int, kind: str):
        """Fitted surrogate for one source task and objective dimension (cached)."""
        key = (source_idx, dim)
        if key not in self._base_models:
            src = self.sources[source_idx]
            X = self._encode(src.completed, kind)
            y = np.array([o.objectives[dim] for o in src.completed], dtype=float)
            self._base_models[key] = self._fit_model(X, y, kind, seed=source_idx)
        return self._base_models[key]

    def ensemble_for(
        self, history: History, dim: int, kind: str, seed: int, target_model=None
    ) -> TransferEnsemble:
        completed = history.completed
        X_t = self._encode(completed, kind)
        y_t = np.array([o.objectives[dim] for o in completed], dtype=float)
        # ranking weights always come from the completed observations; the
        # prediction target may additionally carry imputed pending points
        weight_target = self._fit_model(X_t, y_t, kind, seed=seed)
        if target_model is None:
            target_model = weight_target
        if not self.sources:
            return TransferEnsemble((target_model,), np.array([1.0]))
        bases = [self.base_model(i, dim, kind) for i in range(len(self.sources))]
        weights = rgpe_weights(
            bases,
            weight_target,
            X_t,
            y_t,
            samples=self.weight_samples,
            seed=adv.derive_seed("weights", history.task_id, dim, len(completed)),
        )
        return TransferEnsemble(tuple(bases) + (target_model,), weights)

    def weights_for(self, history: History, dim: int = 0) -> np.ndarray:
        """Current ensemble weights [sources..., target] for one objective."""
        kind = adv.select_algorithm(self.spec, len(history.completed)).surrogate
        return self.ensemble_for(history, dim, kind, seed=0).weights

    def suggest(self, history: History, seed: int):
        plan = adv.select_algorithm(self.spec, len(history.completed))

        def factory(dim: int, X_aug: np.ndarray, y_aug: np.ndarray):
            # posterior (with pending imputation) comes from the target fit on
            # the augmented data; ranking weights use real observations only
            target = self._fit_model(X_aug, y_aug, plan.surrogate, seed=seed + dim)
            return self.ensemble_for(
                history, dim, plan.surrogate, seed=seed, target_model=target
            )

        return adv.suggest(self.spec, history, seed, objective_model_fn=factory)

    def suggest_batch(self, history: History, m: int, seed: int):
        configs = []
        current = history
        for i in range(m):
            call_seed = seed if i == 0 else adv.derive_seed("batch", seed, i)
            config = self.suggest(current, call_seed)
            configs.append(config)
            current = current.with_pending(config, trial_id=f"__batch{i}")
        return configs


def build_transfer_advisor(
    source_histories: Sequence[History], spec: TaskSpec, weight_samples: int = 100
) -> TransferAdvisor:
    """Advisor that leverages completed source-task histories over the same space."""
    return TransferAdvisor(source_histories, spec, weight_samples)
