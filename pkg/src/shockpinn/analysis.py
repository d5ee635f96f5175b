"""Error metrics, field exports, interface diagnostics, and capacity reports.

Post-processing for trained runs: relative L2 errors per primitive variable
on a masked evaluation grid, pointwise-error fields, maximum interface jumps
for stitched runs, weight-norm capacity measures relative to a baseline
network, CSV field exports, and static plots of fields and loss histories.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AnalysisError
from .experiments import Problem
from .network import Network, stitched_forward

__all__ = [
    "VARIABLES",
    "relative_l2",
    "EvalGrid",
    "eval_grid",
    "evaluate_on_grid",
    "ErrorReport",
    "error_report",
    "error_report_from_values",
    "interface_jump",
    "wall_slip_rms",
    "layer_norm_product",
    "ComplexityRow",
    "ComplexityReport",
    "complexity_norms",
    "export_fields",
    "load_summary",
    "load_fields",
    "load_history",
    "comparison_table",
    "plot_fields",
    "plot_history",
]


VARIABLES = ("rho", "u", "v", "p")


def relative_l2(predicted, reference) -> float:
    """``‖pred − ref‖₂ / ‖ref‖₂`` over matching evaluation points.

    For stitched runs the caller passes the pooled values from every
    subdomain, so the result is the total relative error over the whole
    domain, not a per-subdomain figure.
    """
    pred = np.asarray(predicted, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise AnalysisError(
            "prediction and reference must align: %r vs %r"
            % (pred.shape, ref.shape)
        )
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(ref))):
        raise AnalysisError("non-finite values in relative L2 inputs")
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise AnalysisError("reference field has zero norm; relative error undefined")
    return float(np.linalg.norm(pred - ref)) / denom


# ---------------------------------------------------------------------------
# Evaluation grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalGrid:
    """Uniform grid over the experiment box, masked to the fluid region."""

    xs: np.ndarray
    ys: np.ndarray
    mask: np.ndarray  # (nx, ny) fluid flags
    points: np.ndarray  # (M, 2) the masked-in points, x-major

    @property
    def shape(self) -> tuple:
        return (len(self.xs), len(self.ys))

    def scatter(self, column: np.ndarray) -> np.ndarray:
        """Spread an (M,) masked vector back onto the (nx, ny) grid (NaN
        outside the fluid region)."""
        out = np.full(self.shape, np.nan)
        out[self.mask] = np.asarray(column, dtype=np.float64)
        return out


def eval_grid(problem: Problem, resolution: int = 200) -> EvalGrid:
    """The run's evaluation lattice: ``resolution``² cells over its bounding
    box, keeping only points inside the fluid region."""
    if resolution < 2:
        raise AnalysisError("grid resolution must be at least 2")
    xlo, xhi, ylo, yhi = problem.grid_box
    xs = np.linspace(xlo, xhi, resolution)
    ys = np.linspace(ylo, yhi, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mask = np.asarray(problem.region.contains(pts), dtype=bool).reshape(
        resolution, resolution
    )
    if not mask.any():
        raise AnalysisError("evaluation grid does not intersect the fluid region")
    return EvalGrid(xs=xs, ys=ys, mask=mask, points=pts[mask.ravel()])


def evaluate_on_grid(problem: Problem, resolution: int = 200):
    """(grid, predicted (M, 4), reference (M, 4)) over the masked grid."""
    grid = eval_grid(problem, resolution)
    pts = problem.eval_points(grid.points)
    predicted = stitched_forward(problem.members(), pts).values
    reference = problem.reference(pts)
    return grid, predicted, reference


# ---------------------------------------------------------------------------
# Error reports
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    """Per-variable relative L2 errors plus run metadata."""

    experiment: str
    method: str
    adaptive_activations: bool
    dynamic_weights: bool
    errors: Mapping[str, float]
    interface_jumps: Optional[Mapping[str, float]]
    grid_shape: tuple
    n_points: int

    def __post_init__(self):
        for var, value in self.errors.items():
            if value < 0:
                raise AnalysisError("negative relative error for %r" % var)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "method": self.method,
            "adaptive_activations": self.adaptive_activations,
            "dynamic_weights": self.dynamic_weights,
            "errors": {k: float(v) for k, v in self.errors.items()},
            "interface_jumps": None
            if self.interface_jumps is None
            else {k: float(v) for k, v in self.interface_jumps.items()},
            "grid_shape": list(self.grid_shape),
            "n_points": int(self.n_points),
        }


def interface_jump(networks: Sequence[Network], interfaces) -> dict:
    """Max over interface points of |ξ_left − ξ_right| per primitive.

    Diagnoses how well the stitching terms closed the gap between neighbor
    networks; identical subnetworks give exactly zero.
    """
    if len(networks) < 2 or not interfaces:
        raise AnalysisError(
            "interface jump is only defined for stitched runs with at least "
            "one interface"
        )
    worst = {var: 0.0 for var in VARIABLES}
    for batch in interfaces:
        a, b = batch.pair
        va = networks[a].forward_values(batch.points).values
        vb = networks[b].forward_values(batch.points).values
        gap = np.max(np.abs(va - vb), axis=0)
        for j, var in enumerate(VARIABLES):
            worst[var] = max(worst[var], float(gap[j]))
    return worst


def wall_slip_rms(problem: Problem, count: int = 400) -> float:
    """RMS normal velocity on the problem's solid wall, per unit freestream.

    Zero for a perfectly enforced no-penetration condition; reported as a
    fraction of the freestream speed so it is comparable across experiments.
    """
    if problem.wall is None:
        raise AnalysisError(
            "experiment %r has no solid wall to evaluate"
            % problem.config.experiment
        )
    t = np.linspace(0.0, 1.0, count)
    points = problem.wall.point(t)
    normals = problem.wall.normal(t)
    values = stitched_forward(problem.members(), problem.eval_points(points)).values
    normal_speed = np.sum(values[:, 1:3] * normals, axis=1)
    return float(np.sqrt(np.mean(normal_speed**2))) / problem.freestream_speed


def error_report(problem: Problem, resolution: int = 200) -> ErrorReport:
    """Relative L2 errors of the trained fields against the run's reference,
    pooled over every subdomain's points on the masked evaluation grid."""
    grid, predicted, reference = evaluate_on_grid(problem, resolution)
    return error_report_from_values(problem, grid, predicted, reference)


def error_report_from_values(
    problem: Problem, grid: EvalGrid, predicted, reference
) -> ErrorReport:
    """Like :func:`error_report`, but for fields already evaluated on a grid."""
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    errors = {
        var: relative_l2(predicted[:, j], reference[:, j])
        for j, var in enumerate(VARIABLES)
    }
    jumps = None
    if problem.stitched and problem.interfaces:
        jumps = interface_jump(problem.networks, problem.interfaces)
    return ErrorReport(
        experiment=problem.config.experiment,
        method=problem.method_tag,
        adaptive_activations=problem.config.method.adaptive_activations,
        dynamic_weights=problem.config.method.dynamic_weights,
        errors=errors,
        interface_jumps=jumps,
        grid_shape=grid.shape,
        n_points=len(grid.points),
    )


# ---------------------------------------------------------------------------
# Capacity (weight-norm) reports
# ---------------------------------------------------------------------------


_MEASURES = ("spectral", "frobenius")


def layer_norm_product(network: Network, measure: str = "spectral") -> float:
    """Product over layers of a weight-matrix norm.

    ``spectral`` multiplies largest singular values; ``frobenius`` multiplies
    Frobenius norms.  Both scale linearly when one layer is scaled, so ratios
    between networks are meaningful capacity comparisons.
    """
    if measure not in _MEASURES:
        raise AnalysisError(
            "unknown norm measure %r (expected one of %s)" % (measure, _MEASURES)
        )
    product = 1.0
    for w in network.weights:
        if measure == "spectral":
            product *= float(np.linalg.norm(w.value, 2))
        else:
            product *= float(np.linalg.norm(w.value))
    return product


@dataclass(frozen=True)
class ComplexityRow:
    label: str
    measure: float
    percent: float


@dataclass
class ComplexityReport:
    """Per-network norm measures as percentages of a baseline network.

    The baseline row is exactly 100% by construction; a stitched run also
    gets a combined row (sum of its subnetwork measures).
    """

    measure_kind: str
    baseline_label: str
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure_kind,
            "baseline": self.baseline_label,
            "rows": [
                {
                    "label": r.label,
                    "measure": float(r.measure),
                    "percent": float(r.percent),
                }
                for r in self.rows
            ],
        }


def complexity_norms(
    networks: Sequence[Network],
    baseline: Optional[Network] = None,
    measure: str = "spectral",
    labels: Optional[Sequence[str]] = None,
) -> ComplexityReport:
    """Norm-product capacity of each network relative to a baseline (=100%).

    Without an explicit baseline the first network anchors the scale.  For a
    stitched run pass its subnetworks plus the single-network baseline; each
    subnetwork gets a row, and a combined row sums their measures.
    """
    networks = list(networks)
    if not networks:
        raise AnalysisError("complexity report needs at least one network")
    if baseline is None:
        baseline = networks[0]
    base = layer_norm_product(baseline, measure)
    if base == 0.0:
        raise AnalysisError("baseline network has zero norm product")
    if labels is None:
        if len(networks) == 1:
            labels = ["PINN"]
        else:
            labels = ["XPINN-%d" % (q + 1) for q in range(len(networks))]
    elif len(labels) != len(networks):
        raise AnalysisError("need one label per network")
    report = ComplexityReport(
        measure_kind=measure,
        baseline_label="baseline",
    )
    for label, net in zip(labels, networks):
        m = layer_norm_product(net, measure)
        report.rows.append(ComplexityRow(label, m, 100.0 * m / base))
    if len(networks) > 1:
        total = sum(r.measure for r in report.rows)
        report.rows.append(
            ComplexityRow("combined", total, 100.0 * total / base)
        )
    return report


# ---------------------------------------------------------------------------
# Field CSV export
# ---------------------------------------------------------------------------


def export_fields(path, grid: EvalGrid, predicted, reference) -> None:
    """Long-format field table: one row per grid point per variable.

    Columns: x, y, var, predicted, reference, abs-error, rel-error.  The
    pointwise relative error divides by |reference| and is empty where the
    reference is exactly zero.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if predicted.shape != (len(grid.points), 4) or reference.shape != predicted.shape:
        raise AnalysisError(
            "field export needs (N, 4) prediction and reference matching the "
            "grid's %d points" % len(grid.points)
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["x", "y", "var", "predicted", "reference", "abs-error", "rel-error"]
        )
        for j, var in enumerate(VARIABLES):
            pred = predicted[:, j]
            ref = reference[:, j]
            err = np.abs(pred - ref)
            for (x, y), pv, rv, ev in zip(grid.points, pred, ref, err):
                rel = "" if rv == 0.0 else "%.17g" % (ev / abs(rv))
                writer.writerow(
                    [
                        "%.17g" % x,
                        "%.17g" % y,
                        var,
                        "%.17g" % pv,
                        "%.17g" % rv,
                        "%.17g" % ev,
                        rel,
                    ]
                )


# ---------------------------------------------------------------------------
# Run summaries and comparisons
# ---------------------------------------------------------------------------


def load_summary(run_dir) -> dict:
    """The ``summary.json`` a finished run directory carries."""
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        raise AnalysisError("no summary.json in %s (is it a run directory?)" % run_dir)
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise AnalysisError("could not read %s: %s" % (path, exc)) from None


def load_fields(path):
    """Rebuild ``(grid, predicted, reference)`` from a field CSV.

    Inverse of :func:`export_fields`: coordinates are written with full
    float64 precision, so the original evaluation grid reconstructs exactly.
    """
    path = Path(path)
    per_var = {var: [] for var in VARIABLES}
    points = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header[:3] != ["x", "y", "var"]:
                raise AnalysisError("%s is not a field CSV" % path)
            for row in reader:
                x, y, var, pred, ref = row[0], row[1], row[2], row[3], row[4]
                if var not in per_var:
                    raise AnalysisError("unknown variable %r in %s" % (var, path))
                if var == VARIABLES[0]:
                    points.append((float(x), float(y)))
                per_var[var].append((float(pred), float(ref)))
    except (OSError, ValueError, IndexError, TypeError) as exc:
        raise AnalysisError("could not read %s: %s" % (path, exc)) from None
    counts = {len(rows) for rows in per_var.values()}
    if not points or counts != {len(points)}:
        raise AnalysisError("%s has unbalanced variable blocks" % path)
    points = np.asarray(points)
    columns = [np.asarray(per_var[var]) for var in VARIABLES]
    predicted = np.stack([c[:, 0] for c in columns], axis=1)
    reference = np.stack([c[:, 1] for c in columns], axis=1)
    xs = np.unique(points[:, 0])
    ys = np.unique(points[:, 1])
    ix = np.searchsorted(xs, points[:, 0])
    iy = np.searchsorted(ys, points[:, 1])
    mask = np.zeros((xs.size, ys.size), dtype=bool)
    mask[ix, iy] = True
    return EvalGrid(xs=xs, ys=ys, mask=mask, points=points), predicted, reference


def load_history(path) -> list:
    """Loss-history rows (dicts) from the CSV a training run mirrors to."""
    path = Path(path)
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:2] != ["iteration", "phase"]:
                raise AnalysisError("%s is not a loss-history CSV" % path)
            for record in reader:
                row = {"iteration": int(record[0]), "phase": record[1]}
                for key, cell in zip(header[2:], record[2:]):
                    row[key] = float(cell)
                rows.append(row)
    except (OSError, ValueError, IndexError) as exc:
        raise AnalysisError("could not read %s: %s" % (path, exc)) from None
    if not rows:
        raise AnalysisError("%s has no history rows" % path)
    return rows


def comparison_table(summaries: Sequence[Mapping]) -> str:
    """Side-by-side per-variable relative L2 errors for several runs.

    All runs must target the same experiment on the same grid.  Columns are
    method tags (with activation-slope/dynamic-weight markers); a norms block
    follows when any run carries a capacity report.
    """
    if len(summaries) < 2:
        raise AnalysisError("comparison needs at least two runs")
    experiments = {s["report"]["experiment"] for s in summaries}
    if len(experiments) != 1:
        raise AnalysisError(
            "runs target different experiments: %s" % sorted(experiments)
        )
    grids = {tuple(s["report"]["grid_shape"]) for s in summaries}
    if len(grids) != 1:
        raise AnalysisError("runs use different evaluation grids: %s" % sorted(grids))

    def column_name(s: Mapping) -> str:
        rep = s["report"]
        tag = rep["method"]
        marks = []
        if rep.get("adaptive_activations"):
            marks.append("AA")
        if rep.get("dynamic_weights"):
            marks.append("DW")
        return tag + (" (%s)" % "+".join(marks) if marks else "")

    names = [column_name(s) for s in summaries]
    width = max(12, *(len(n) for n in names))
    head = "variable".ljust(10) + "".join(n.rjust(width + 2) for n in names)
    lines = [
        "experiment: %s" % next(iter(experiments)),
        head,
        "-" * len(head),
    ]
    for var in VARIABLES:
        cells = []
        for s in summaries:
            value = s["report"]["errors"].get(var)
            cells.append(
                ("%.4e" % value if value is not None else "-").rjust(width + 2)
            )
        lines.append(var.ljust(10) + "".join(cells))

    norm_lines = _norm_block(summaries, names)
    if norm_lines:
        lines.append("")
        lines.extend(norm_lines)
    return "\n".join(lines)


def _norm_block(summaries: Sequence[Mapping], names: Sequence[str]) -> list:
    """Weight-norm products as percentages of the baseline run.

    The baseline is the first single-network run (falling back to the first
    run with norms at all); a multi-network run lists each subnetwork and a
    combined (summed) measure.
    """
    products = [
        (s.get("norm_products") or {}).get("spectral") for s in summaries
    ]
    if not any(products):
        return []
    base = next(
        (p for p in products if p and len(p) == 1),
        next(p for p in products if p),
    )
    base_total = float(sum(base))
    if base_total <= 0.0:
        raise AnalysisError("baseline run has a non-positive norm product")
    block = ["spectral norm product (%% of %s)" % names[products.index(base)]]
    for name, prods in zip(names, products):
        if not prods:
            continue
        if len(prods) == 1:
            block.append(
                "  %-18s %10.4g  (%.2f%%)"
                % (name, prods[0], 100.0 * prods[0] / base_total)
            )
            continue
        for q, value in enumerate(prods):
            block.append(
                "  %-18s %10.4g  (%.2f%%)"
                % ("%s net %d" % (name, q + 1), value, 100.0 * value / base_total)
            )
        total = float(sum(prods))
        block.append(
            "  %-18s %10.4g  (%.2f%%)"
            % ("%s combined" % name, total, 100.0 * total / base_total)
        )
    return block


# ---------------------------------------------------------------------------
# Plots
# ---------------------------------------------------------------------------


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_fields(path, grid: EvalGrid, predicted, reference, title: str = "") -> None:
    """Predicted/reference/|error| panels for each primitive variable."""
    plt = _matplotlib()
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    fig, axes = plt.subplots(4, 3, figsize=(13, 14), constrained_layout=True)
    extent = (grid.xs[0], grid.xs[-1], grid.ys[0], grid.ys[-1])
    for j, var in enumerate(VARIABLES):
        panels = (
            ("predicted", predicted[:, j]),
            ("reference", reference[:, j]),
            ("|error|", np.abs(predicted[:, j] - reference[:, j])),
        )
        for k, (name, column) in enumerate(panels):
            ax = axes[j][k]
            img = grid.scatter(column)
            im = ax.imshow(
                img.T, origin="lower", extent=extent, aspect="auto",
                interpolation="nearest",
            )
            fig.colorbar(im, ax=ax, shrink=0.85)
            ax.set_title("%s %s" % (var, name))
    if title:
        fig.suptitle(title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_history(path, history: Sequence[Mapping], title: str = "") -> None:
    """Loss components, total, and any adaptive weights over iterations."""
    plt = _matplotlib()
    if not history:
        raise AnalysisError("empty loss history")
    iterations = [row["iteration"] for row in history]
    numeric = [
        key
        for key in history[0]
        if key not in ("iteration", "phase") and isinstance(history[0][key], float)
    ]
    weights = [k for k in numeric if k.startswith("omega")]
    losses = [k for k in numeric if not k.startswith("omega")]
    n_rows = 2 if weights else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(9, 4.5 * n_rows), squeeze=False)
    ax = axes[0][0]
    for key in losses:
        values = [row[key] for row in history]
        if key == "total":
            ax.plot(iterations, values, "k-", linewidth=2, label="total")
        elif any(v > 0 for v in values):
            ax.plot(iterations, values, label=key, alpha=0.7)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7, ncol=2)
    if weights:
        ax = axes[1][0]
        for key in weights:
            ax.plot(iterations, [row[key] for row in history], label=key)
        ax.set_xlabel("iteration")
        ax.set_ylabel("weight")
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
