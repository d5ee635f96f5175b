"""Two-phase training: Adam with optional dynamic weights, then L-BFGS.

The optimizers act on one flat parameter vector.  For stitched runs the
vector concatenates every network's trainable parameters, so the interface
terms couple the networks and all of them are optimized jointly.

Gradients are full batch: every iteration evaluates the complete objective
over all point sets, which keeps the L-BFGS objective deterministic.  The
driver records the full component breakdown and the weights in effect at
every iteration, and tracks the best-so-far parameters by total loss.
"""

from __future__ import annotations

import csv
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import AutodiffError, Tape
from .errors import ConfigurationError, DivergenceError
from .loss import (
    COMPONENT_GROUP,
    GROUP_OMEGA_LABEL,
    DynamicWeights,
    LossConfig,
    pinn_loss_node,
    update_dynamic_weights,
    xpinn_loss_node,
)
from .network import Network, save_checkpoint

__all__ = [
    "AdamSchedule",
    "LbfgsSchedule",
    "OptimizerSchedule",
    "TrainState",
    "TrainResult",
    "adam_step",
    "lbfgs_run",
    "train",
]


# ---------------------------------------------------------------------------
# Schedules and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamSchedule:
    """First-phase settings: standard Adam with bias correction."""

    iterations: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError("adam iterations must be nonnegative")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")


@dataclass(frozen=True)
class LbfgsSchedule:
    """Second-phase settings: limited-memory BFGS with strong Wolfe search.

    ``tol_grad`` stops on the gradient 2-norm; ``tol_loss`` stops when the
    relative loss decrease between accepted iterates falls below it (zero
    disables that rule).  ``max_evals`` caps objective evaluations per line
    search.
    """

    iterations: int = 0
    memory: int = 50
    tol_grad: float = 1e-9
    tol_loss: float = 0.0
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_evals: int = 25

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError("lbfgs iterations must be nonnegative")
        if self.memory < 1:
            raise ConfigurationError("lbfgs memory must be at least 1")
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ConfigurationError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.tol_grad < 0 or self.tol_loss < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        if self.max_evals < 3:
            raise ConfigurationError("max_evals must be at least 3")


@dataclass(frozen=True)
class OptimizerSchedule:
    """Adam phase followed by an L-BFGS phase, plus checkpoint cadence."""

    adam: AdamSchedule = field(default_factory=AdamSchedule)
    lbfgs: LbfgsSchedule = field(default_factory=LbfgsSchedule)
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be nonnegative")


@dataclass
class TrainState:
    """Mutable optimizer state over the flat parameter vector."""

    params: np.ndarray
    iteration: int = 0
    adam_m: Optional[np.ndarray] = None
    adam_v: Optional[np.ndarray] = None
    adam_t: int = 0
    history_s: List[np.ndarray] = field(default_factory=list)
    history_y: List[np.ndarray] = field(default_factory=list)
    best_loss: float = np.inf
    best_params: Optional[np.ndarray] = None
    status: str = "running"

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64).ravel().copy()
        n = self.params.size
        if self.adam_m is None:
            self.adam_m = np.zeros(n)
        if self.adam_v is None:
            self.adam_v = np.zeros(n)
        if self.best_params is None:
            self.best_params = self.params.copy()
        if self.adam_m.shape != (n,) or self.adam_v.shape != (n,):
            raise ConfigurationError("adam moment vectors must match the parameter size")

    def note_loss(self, loss: float):
        """Update the best-so-far pair."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_params = self.params.copy()


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def adam_step(state: TrainState, gradient, schedule: AdamSchedule = AdamSchedule()) -> TrainState:
    """One bias-corrected Adam update in place; returns the state."""
    g = np.asarray(gradient, dtype=np.float64).ravel()
    if g.shape != state.params.shape:
        raise ConfigurationError(
            "gradient size %d does not match parameter size %d"
            % (g.size, state.params.size)
        )
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient in Adam update")
    state.adam_t += 1
    state.adam_m = schedule.beta1 * state.adam_m + (1.0 - schedule.beta1) * g
    state.adam_v = schedule.beta2 * state.adam_v + (1.0 - schedule.beta2) * g * g
    m_hat = state.adam_m / (1.0 - schedule.beta1 ** state.adam_t)
    v_hat = state.adam_v / (1.0 - schedule.beta2 ** state.adam_t)
    state.params = state.params - schedule.learning_rate * m_hat / (np.sqrt(v_hat) + schedule.eps)
    state.iteration += 1
    return state


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------


def _two_loop_direction(grad: np.ndarray, s_list, y_list) -> np.ndarray:
    """Two-loop recursion for the quasi-Newton direction -H*grad."""
    q = grad.copy()
    rhos = [1.0 / float(np.dot(y, s)) for s, y in zip(s_list, y_list)]
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rhos)):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    if s_list:
        s_last, y_last = s_list[-1], y_list[-1]
        gamma = float(np.dot(s_last, y_last)) / float(np.dot(y_last, y_last))
        r = gamma * q
    else:
        r = q
    for (s, y, rho), a in zip(zip(s_list, y_list, rhos), reversed(alphas)):
        b = rho * float(np.dot(y, r))
        r += s * (a - b)
    return -r


class _LineSearchFailure(Exception):
    pass


def _strong_wolfe(evaluate, f0: float, dphi0: float, c1: float, c2: float, max_evals: int):
    """Strong Wolfe line search (bracket then zoom by bisection).

    ``evaluate(alpha)`` returns (f, dphi) at the trial step; the accepted
    step is always the last one evaluated.  Raises ``_LineSearchFailure``
    when no acceptable step is found within ``max_evals`` evaluations.
    """
    if dphi0 >= 0:
        raise _LineSearchFailure("search direction is not a descent direction")
    evals = [0]

    def probe(alpha):
        if evals[0] >= max_evals:
            raise _LineSearchFailure("line-search evaluation budget exhausted")
        evals[0] += 1
        f, dphi = evaluate(alpha)
        return f, dphi

    def zoom(lo, f_lo, dphi_lo, hi, f_hi):
        while True:
            alpha = 0.5 * (lo + hi)
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                raise _LineSearchFailure("line-search bracket collapsed")
            f, dphi = probe(alpha)
            if f > f0 + c1 * alpha * dphi0 or f >= f_lo:
                hi, f_hi = alpha, f
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return alpha, f, dphi
                if dphi * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, dphi_lo = alpha, f, dphi

    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = 1.0
    first = True
    while True:
        f, dphi = probe(alpha)
        if f > f0 + c1 * alpha * dphi0 or (not first and f >= f_prev):
            return zoom(alpha_prev, f_prev, dphi_prev, alpha, f)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, dphi
        if dphi >= 0:
            return zoom(alpha, f, dphi, alpha_prev, f_prev)
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha *= 2.0
        first = False


def lbfgs_run(
    state: TrainState,
    fg: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    schedule: LbfgsSchedule = LbfgsSchedule(),
    callback: Optional[Callable[[TrainState, float], None]] = None,
) -> TrainState:
    """L-BFGS iterations from ``state.params`` until a stopping rule fires.

    ``fg`` maps a parameter vector to (loss, gradient).  Stops on the
    gradient norm, on a small relative loss decrease, or at the iteration
    cap; a failed line search falls back to one steepest-descent step and
    then terminates the phase.  The best-so-far pair is maintained
    throughout.  ``callback`` runs after every accepted iterate.
    """
    if schedule.iterations == 0:
        state.status = "iteration-cap"
        return state

    f, g = fg(state.params)
    state.note_loss(f)
    if float(np.linalg.norm(g)) < schedule.tol_grad:
        state.status = "converged-grad"
        return state

    for _ in range(schedule.iterations):
        direction = _two_loop_direction(g, state.history_s, state.history_y)
        dphi0 = float(np.dot(g, direction))
        if dphi0 >= 0.0:
            state.history_s.clear()
            state.history_y.clear()
            direction = -g
            dphi0 = float(np.dot(g, direction))

        x0, f0, g0 = state.params, f, g
        last = {}

        def evaluate(alpha, _x0=x0, _d=direction, _last=last):
            f_a, g_a = fg(_x0 + alpha * _d)
            _last["alpha"], _last["f"], _last["g"] = alpha, f_a, g_a
            return f_a, float(np.dot(g_a, _d))

        try:
            alpha, f, _ = _strong_wolfe(
                evaluate, f0, dphi0, schedule.wolfe_c1, schedule.wolfe_c2, schedule.max_evals
            )
            g = last["g"]
        except _LineSearchFailure:
            # One steepest-descent rescue step, then stop the phase.
            moved = False
            alpha_sd = 1.0
            for _ in range(40):
                f_try, g_try = fg(x0 - alpha_sd * g0)
                if np.isfinite(f_try) and f_try < f0:
                    state.params = x0 - alpha_sd * g0
                    state.iteration += 1
                    state.note_loss(f_try)
                    if callback is not None:
                        callback(state, f_try)
                    moved = True
                    break
                alpha_sd *= 0.5
            state.status = "line-search" if moved else "line-search-stalled"
            return state

        state.params = x0 + alpha * direction
        state.iteration += 1
        state.note_loss(f)
        if callback is not None:
            callback(state, f)

        s = state.params - x0
        y = g - g0
        if float(np.dot(s, y)) > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            state.history_s.append(s)
            state.history_y.append(y)
            if len(state.history_s) > schedule.memory:
                state.history_s.pop(0)
                state.history_y.pop(0)

        if float(np.linalg.norm(g)) < schedule.tol_grad:
            state.status = "converged-grad"
            return state
        decrease = (f0 - f) / max(abs(f0), abs(f), 1.0)
        if schedule.tol_loss > 0.0 and decrease < schedule.tol_loss:
            state.status = "converged-loss"
            return state

    state.status = "iteration-cap"
    return state


# ---------------------------------------------------------------------------
# Objective plumbing
# ---------------------------------------------------------------------------


class _Objective:
    """Flat-vector view of the (possibly stitched) training objective."""

    def __init__(self, networks, datasets, interfaces, config, dynamic):
        if isinstance(networks, Network):
            networks = [networks]
            datasets = [datasets]
        self.networks = list(networks)
        self.datasets = list(datasets)
        self.interfaces = tuple(interfaces)
        if len(self.networks) != len(self.datasets):
            raise ConfigurationError(
                "got %d networks but %d dataset groups"
                % (len(self.networks), len(self.datasets))
            )
        self.stitched = len(self.networks) > 1 or bool(self.interfaces)
        self.config = config if config is not None else LossConfig()
        self.dynamic = dynamic
        self.params = [p for net in self.networks for p in net.trainable_parameters()]
        if not self.params:
            raise ConfigurationError("no trainable parameters")
        self.sizes = [p.value.size for p in self.params]
        self.shapes = [np.shape(p.value) for p in self.params]

    @property
    def n_params(self) -> int:
        return int(sum(self.sizes))

    def pack(self) -> np.ndarray:
        return np.concatenate([np.ravel(p.value) for p in self.params])

    def unpack(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != self.n_params:
            raise ConfigurationError(
                "parameter vector has size %d, expected %d" % (vec.size, self.n_params)
            )
        offset = 0
        for p, size, shape in zip(self.params, self.sizes, self.shapes):
            p.value = vec[offset : offset + size].reshape(shape).copy()
            offset += size

    def _build(self, tape: Tape):
        """Record the objective; returns (components-for-rows, group_sums, total, weights)."""
        if self.stitched:
            nodes = xpinn_loss_node(
                tape, self.networks, self.datasets, self.interfaces, self.config, self.dynamic
            )
            row_components = OrderedDict()
            for q, sub in enumerate(nodes.per_subdomain):
                for name, node in sub.components.items():
                    row_components["sub%d_%s" % (q, name)] = node
            for name, node in nodes.shared_components.items():
                row_components[name] = node
            return row_components, nodes.group_sums, nodes.total, nodes.weights
        nodes = pinn_loss_node(
            tape, self.networks[0], self.datasets[0], self.config, self.dynamic
        )
        return OrderedDict(nodes.components), nodes.group_sums, nodes.total, nodes.weights

    def _gradient_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(p.grad_or_zeros()) for p in self.params])

    def evaluate(self, vec: np.ndarray):
        """Loss, gradient, and the per-component row at ``vec``."""
        self.unpack(vec)
        tape = Tape()
        try:
            row_components, _, total, weights = self._build(tape)
            loss = float(total.val[0, 0])
            tape.backward(total)
        except AutodiffError as exc:
            raise DivergenceError("non-finite loss: %s" % exc) from exc
        grad = self._gradient_vector()
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(
                "non-finite gradient in loss component %r"
                % self._nonfinite_component(tape, row_components)
            )
        row = OrderedDict((name, float(node.val[0, 0])) for name, node in row_components.items())
        return loss, grad, row, weights

    def _nonfinite_component(self, tape: Tape, row_components) -> str:
        for name, node in row_components.items():
            try:
                tape.backward(node)
            except AutodiffError:
                return name
            if not np.all(np.isfinite(self._gradient_vector())):
                return name
        return "<unidentified>"

    def gradient_stats(self, vec: np.ndarray):
        """Per-group parameter gradients of the unweighted component sums."""
        self.unpack(vec)
        tape = Tape()
        try:
            _, group_sums, total, _ = self._build(tape)
            stats = {}
            for group, node in group_sums.items():
                tape.backward(node)
                stats[group] = self._gradient_vector()
        except AutodiffError as exc:
            raise DivergenceError("non-finite loss: %s" % exc) from exc
        return stats


# ---------------------------------------------------------------------------
# History recording
# ---------------------------------------------------------------------------


class _HistoryRecorder:
    """Accumulates per-iteration rows and mirrors them to a CSV file."""

    def __init__(self, path=None):
        self.path = path
        self.rows: List[OrderedDict] = []
        self._columns = None
        self._handle = None
        self._writer = None

    def record(self, iteration: int, phase: str, components, weights, total: float):
        row = OrderedDict()
        row["iteration"] = iteration
        row["phase"] = phase
        for name, value in components.items():
            row[name] = value
        for group, label in GROUP_OMEGA_LABEL.items():
            if group in weights:
                row[label] = weights[group]
        row["total"] = total
        self.rows.append(row)
        if self.path is not None:
            if self._writer is None:
                self._columns = list(row)
                self._handle = open(self.path, "w", newline="")
                self._writer = csv.writer(self._handle)
                self._writer.writerow(self._columns)
            if list(row) != self._columns:
                raise ConfigurationError("loss-history columns changed mid-run")
            self._writer.writerow(
                [row["iteration"], row["phase"]]
                + ["%.17g" % row[c] for c in self._columns[2:]]
            )

    def close(self):
        if self._handle is not None:
            self._handle.flush()
            self._handle.close()
            self._handle = None


@dataclass
class TrainResult:
    """Outcome of a run: final state, history rows, and the tuned networks."""

    state: TrainState
    history: List[OrderedDict]
    networks: List[Network]
    dynamic: Optional[DynamicWeights]
    history_path: Optional[str] = None


# ---------------------------------------------------------------------------
# Training driver
# ---------------------------------------------------------------------------


def _checkpoint(networks, directory, iteration):
    for q, net in enumerate(networks):
        path = os.path.join(directory, "net%02d_iter%06d.ckpt" % (q, iteration))
        save_checkpoint(net, path)


def train(
    networks,
    datasets,
    interfaces=(),
    config: Optional[LossConfig] = None,
    schedule: Optional[OptimizerSchedule] = None,
    dynamic: Optional[DynamicWeights] = None,
    history_path=None,
    checkpoint_dir=None,
) -> TrainResult:
    """Adam phase (with optional dynamic-weight updates) then L-BFGS phase.

    ``networks``/``datasets`` may be a single network with its dataset dict
    or parallel sequences for a stitched run.  Dynamic weights update every
    ``dynamic.period`` Adam iterations from gradient statistics at the
    current iterate and stay frozen during L-BFGS.  Returns the best-so-far
    parameters loaded back into the networks, plus the full history.
    """
    schedule = schedule if schedule is not None else OptimizerSchedule()
    objective = _Objective(networks, datasets, interfaces, config, dynamic)
    state = TrainState(objective.pack())
    recorder = _HistoryRecorder(history_path)

    try:
        for it in range(schedule.adam.iterations):
            if (
                objective.dynamic is not None
                and it > 0
                and it % objective.dynamic.period == 0
            ):
                stats = objective.gradient_stats(state.params)
                objective.dynamic = update_dynamic_weights(objective.dynamic, stats)
            loss, grad, row, weights = objective.evaluate(state.params)
            state.note_loss(loss)
            recorder.record(state.iteration, "adam", row, weights, loss)
            adam_step(state, grad, schedule.adam)
            if (
                checkpoint_dir is not None
                and schedule.checkpoint_every
                and state.iteration % schedule.checkpoint_every == 0
            ):
                objective.unpack(state.params)
                _checkpoint(objective.networks, checkpoint_dir, state.iteration)

        def fg(vec):
            loss, grad, row, weights = objective.evaluate(vec)
            fg.last_row, fg.last_weights, fg.last_loss = row, weights, loss
            return loss, grad

        def on_accept(st: TrainState, f: float):
            recorder.record(st.iteration, "lbfgs", fg.last_row, fg.last_weights, f)
            if (
                checkpoint_dir is not None
                and schedule.checkpoint_every
                and st.iteration % schedule.checkpoint_every == 0
            ):
                objective.unpack(st.params)
                _checkpoint(objective.networks, checkpoint_dir, st.iteration)

        if schedule.lbfgs.iterations > 0:
            lbfgs_run(state, fg, schedule.lbfgs, callback=on_accept)
    finally:
        recorder.close()

    objective.unpack(state.best_params)
    return TrainResult(
        state=state,
        history=recorder.rows,
        networks=objective.networks,
        dynamic=objective.dynamic,
        history_path=history_path,
    )
