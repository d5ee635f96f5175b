"""Estimator-style front end: configure, ``fit``, ``predict``.

:class:`PinnSolver` trains one network over the whole domain;
:class:`XpinnSolver` trains one network per subdomain and stitches their
predictions.  Both follow the scikit-learn estimator protocol — constructor
arguments are stored verbatim, ``fit`` does the work, and fitted state lands
in trailing-underscore attributes — so they compose with scikit-learn
utilities (cloning, parameter search over method switches, pipelines).

The training data are generated (or ingested) from the experiment preset,
not passed to ``fit``: these are inverse problems whose measurements are
part of the problem statement.  ``fit`` therefore ignores ``X`` and ``y``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConfigurationError
from .experiments import (
    ExperimentConfig,
    Problem,
    apply_overrides,
    build_problem,
    preset,
)
from .network import FieldEval, stitched_forward
from .optimize import TrainResult, train

__all__ = ["PinnSolver", "XpinnSolver"]


class PinnSolver(BaseEstimator):
    """Single-network flow solver over one of the built-in experiments.

    Parameters
    ----------
    experiment:
        Preset name (``smooth``, ``expansion``, ``oblique``, ``bow``) or a
        full :class:`ExperimentConfig`; a config's own experiment name wins.
    overrides:
        ``section.key=value`` strings layered onto the resolved config.
    seed:
        Replaces the config seed when given (network initialization and
        every sampled point set derive from it).
    history_path, checkpoint_dir:
        Optional artifact locations passed through to the training driver.

    Attributes (after ``fit``)
    --------------------------
    config_ : the fully resolved :class:`ExperimentConfig`
    problem_ : the materialized :class:`~shockpinn.experiments.Problem`
    networks_ : trained networks (one per subdomain)
    result_ : the driver's :class:`~shockpinn.optimize.TrainResult`
    history_ : list of per-iteration loss-breakdown rows
    """

    _stitched = False

    def __init__(
        self,
        experiment="smooth",
        overrides: Sequence[str] = (),
        seed: Optional[int] = None,
        history_path=None,
        checkpoint_dir=None,
    ):
        self.experiment = experiment
        self.overrides = overrides
        self.seed = seed
        self.history_path = history_path
        self.checkpoint_dir = checkpoint_dir

    # -- configuration -----------------------------------------------------

    def resolve_config(self) -> ExperimentConfig:
        """The exact config ``fit`` would run, after overrides and seed."""
        if isinstance(self.experiment, ExperimentConfig):
            config = self.experiment
        elif isinstance(self.experiment, str):
            config = preset(self.experiment)
        else:
            raise ConfigurationError(
                "experiment must be a preset name or an ExperimentConfig, "
                "got %r" % (self.experiment,)
            )
        layered = list(self.overrides)
        layered.append("method.stitched=%s" % ("true" if self._stitched else "false"))
        if self.seed is not None:
            layered.append("seed=%d" % int(self.seed))
        return ExperimentConfig.from_dict(
            apply_overrides(config.to_dict(), layered)
        )

    # -- estimator protocol --------------------------------------------------

    def fit(self, X=None, y=None) -> "PinnSolver":
        """Generate (or ingest) the experiment data and train.

        ``X`` and ``y`` are accepted for interface compatibility and ignored.
        """
        config = self.resolve_config()
        problem = build_problem(config)
        result = train(
            problem.networks,
            problem.datasets,
            interfaces=problem.interfaces,
            config=problem.loss_config,
            schedule=config.schedule.optimizer(),
            dynamic=problem.dynamic,
            history_path=self.history_path,
            checkpoint_dir=self.checkpoint_dir,
        )
        self.config_ = config
        self.problem_ = problem
        self.networks_ = list(result.networks)
        self.result_ = result
        self.history_ = result.history
        return self

    def _check_fitted(self) -> Problem:
        if not hasattr(self, "problem_"):
            raise NotFittedError(
                "%s is not fitted yet; call fit() first" % type(self).__name__
            )
        return self.problem_

    def evaluate(self, X) -> FieldEval:
        """Field values and coordinate derivatives at the given points.

        ``X`` is (N, 2) spatial coordinates — the evaluation time is appended
        automatically for unsteady experiments — or full (N, 3) coordinates.
        """
        problem = self._check_fitted()
        pts = problem.eval_points(X)
        return stitched_forward(problem.members(), pts)

    def predict(self, X) -> np.ndarray:
        """Primitive variables (rho, u, v, p) at the given points, (N, 4)."""
        return self.evaluate(X).values

    def score(self, X, y=None) -> float:
        """Negative mean relative L2 error against the problem's reference.

        Larger is better (scikit-learn convention); the best score is 0.
        """
        problem = self._check_fitted()
        pts = problem.eval_points(X)
        pred = stitched_forward(problem.members(), pts).values
        ref = problem.reference(pts)
        errs = []
        for j in range(4):
            denom = float(np.linalg.norm(ref[:, j]))
            if denom == 0.0:
                continue
            errs.append(float(np.linalg.norm(pred[:, j] - ref[:, j])) / denom)
        if not errs:
            raise ConfigurationError("reference field is identically zero")
        return -float(np.mean(errs))


class XpinnSolver(PinnSolver):
    """Domain-decomposed variant: one network per subdomain, predictions
    stitched across interfaces (interface points average the neighbors)."""

    _stitched = True
