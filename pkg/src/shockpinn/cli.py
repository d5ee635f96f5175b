"""Config-driven experiment runner.

Subcommands
-----------
``run <preset|config-path>``
    Resolve a config (named preset or config file), apply overrides,
    generate or ingest the data, train, analyze, and write a run directory
    containing the resolved config, network checkpoints, the loss-history
    CSV, the field CSV, and a JSON summary.
``compare <run-dir> [<run-dir> ...]``
    Side-by-side error table (plus weight-norm capacity percentages) for
    runs of the same experiment.
``plot <run-dir>``
    Static images of the exported fields and the loss history.
``check``
    Fast self-tests: derivative consistency against finite differences,
    the entropy-pair identity, and the exact-solution oracles.

Exit codes: 0 success; 2 configuration error; 3 ingestion error;
4 training divergence; 5 analysis error.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    AnalysisError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    ShockPinnError,
)
from .oracles import IngestionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_DIVERGENCE = 4
EXIT_ANALYSIS = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shockpinn",
        description="Inverse supersonic-flow problems with physics-informed "
        "networks: four built-in experiments, single- or multi-network.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment end to end")
    run.add_argument("source", help="preset name or path to a config file")
    run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override, e.g. schedule.adam_iterations=500 "
        "(repeatable; dotted keys reach into sections)",
    )
    run.add_argument("--seed", type=int, default=None, help="replace the config seed")
    run.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap numerical-library threads (1 = bit-reproducible)",
    )
    run.add_argument("--out", default=None, help="run directory (default: runs/<experiment>)")
    run.add_argument(
        "--grid",
        type=int,
        default=None,
        help="evaluation-grid resolution per axis (default from config: 200)",
    )
    run.set_defaults(func=_cmd_run)

    compare = sub.add_parser("compare", help="tabulate several finished runs")
    compare.add_argument("run_dirs", nargs="+", metavar="run-dir")
    compare.set_defaults(func=_cmd_compare)

    plot = sub.add_parser("plot", help="render field and loss-history images")
    plot.add_argument("run_dir", metavar="run-dir")
    plot.set_defaults(func=_cmd_plot)

    check = sub.add_parser("check", help="run the built-in self-test suite")
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestionError as exc:
        print("ingestion error: %s" % exc, file=sys.stderr)
        return EXIT_INGESTION
    except (ConfigurationError, DomainError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print("training diverged: %s" % exc, file=sys.stderr)
        return EXIT_DIVERGENCE
    except AnalysisError as exc:
        print("analysis error: %s" % exc, file=sys.stderr)
        return EXIT_ANALYSIS


@contextlib.contextmanager
def _phase(name: str):
    """Tag package errors with the pipeline phase they interrupted."""
    try:
        yield
    except ShockPinnError as exc:
        exc.args = ("%s phase: %s" % (name, exc),)
        raise


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _resolve_config(source: str):
    from .experiments import EXPERIMENTS, ExperimentConfig, preset

    if source in EXPERIMENTS:
        return preset(source)
    path = Path(source)
    if path.exists():
        return ExperimentConfig.from_text(path.read_text())
    raise ConfigurationError(
        "%r is neither a preset (%s) nor an existing config file"
        % (source, ", ".join(EXPERIMENTS))
    )


def _allocate_run_dir(config) -> Path:
    if config.output_dir:
        path = Path(config.output_dir)
    else:
        base = Path("runs") / config.experiment
        path = base
        n = 1
        while path.exists():
            n += 1
            path = Path("%s-%d" % (base, n))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _thread_limits(threads: int):
    if threads <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _cmd_run(args) -> int:
    from .experiments import ExperimentConfig, apply_overrides, build_problem
    from .analysis import (
        error_report_from_values,
        evaluate_on_grid,
        export_fields,
        layer_norm_product,
        wall_slip_rms,
    )
    from .network import save_checkpoint
    from .optimize import train

    started = time.perf_counter()
    with _phase("configure"):
        config = _resolve_config(args.source)
        if args.override:
            config = ExperimentConfig.from_dict(
                apply_overrides(config.to_dict(), args.override)
            )
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.threads is not None:
            updates["threads"] = args.threads
        if args.grid is not None:
            updates["grid"] = args.grid
        if args.out is not None:
            updates["output_dir"] = args.out
        if updates:
            config = replace(config, **updates)

    run_dir = _allocate_run_dir(config)
    config_text = config.to_text()
    (run_dir / "config.yaml").write_text(config_text)
    config_hash = hashlib.sha256(config_text.encode()).hexdigest()[:16]
    print("run directory: %s" % run_dir)
    print("config hash:   %s" % config_hash)

    with _thread_limits(config.threads):
        with _phase("generate"):
            problem = build_problem(config)
            n_points = {}
            for ds in problem.datasets:
                for key, pointset in ds.items():
                    n_points[key] = n_points.get(key, 0) + len(pointset.points)
            print(
                "experiment %s (%s), %d network(s), datasets: %s"
                % (
                    config.experiment,
                    problem.method_tag,
                    len(problem.networks),
                    ", ".join("%s=%d" % kv for kv in sorted(n_points.items())),
                )
            )

        history_path = run_dir / "loss_history.csv"
        checkpoint_dir = run_dir / "checkpoints"
        try:
            with _phase("train"):
                result = train(
                    problem.networks,
                    problem.datasets,
                    interfaces=problem.interfaces,
                    config=problem.loss_config,
                    schedule=config.schedule.optimizer(),
                    dynamic=problem.dynamic,
                    history_path=history_path,
                    checkpoint_dir=checkpoint_dir,
                )
        except DivergenceError:
            _write_summary(
                run_dir,
                {
                    "version": 1,
                    "config_hash": config_hash,
                    "train_status": "diverged",
                    "wall_clock_seconds": time.perf_counter() - started,
                },
            )
            raise
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        for q, net in enumerate(result.networks):
            save_checkpoint(net, checkpoint_dir / ("net%02d_final.ckpt" % q))
        print(
            "training finished: %d iterations recorded, best loss %.6g (%s)"
            % (len(result.history), result.state.best_loss, result.state.status)
        )

        with _phase("analyze"):
            grid, predicted, reference = evaluate_on_grid(problem, config.grid)
            report = error_report_from_values(problem, grid, predicted, reference)
            export_fields(run_dir / "fields.csv", grid, predicted, reference)
            norm_products = {
                kind: [layer_norm_product(net, kind) for net in result.networks]
                for kind in ("spectral", "frobenius")
            }
            summary = {
                "version": 1,
                "config_hash": config_hash,
                "wall_clock_seconds": time.perf_counter() - started,
                "train_status": result.state.status,
                "best_loss": result.state.best_loss,
                "iterations_recorded": len(result.history),
                "report": report.to_dict(),
                "wall_slip_rms": None
                if problem.wall is None
                else wall_slip_rms(problem),
                "norm_products": norm_products,
                "dynamic_weights": None
                if result.dynamic is None
                else {k: float(v) for k, v in result.dynamic.omega.items()},
                "artifacts": {
                    "config": "config.yaml",
                    "history": "loss_history.csv",
                    "fields": "fields.csv",
                    "checkpoints": sorted(
                        p.name for p in checkpoint_dir.glob("*.ckpt")
                    ),
                },
            }
            _write_summary(run_dir, summary)

    for var, value in report.errors.items():
        print("relative L2 %-4s %.4e" % (var, value))
    if report.interface_jumps:
        worst = max(report.interface_jumps.items(), key=lambda kv: kv[1])
        print("max interface jump: %s = %.4e" % worst)
    if summary["wall_slip_rms"] is not None:
        print("wall-slip RMS: %.4e of freestream" % summary["wall_slip_rms"])
    print("summary: %s" % (run_dir / "summary.json"))
    return EXIT_OK


def _write_summary(run_dir: Path, summary: dict) -> None:
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# compare / plot
# ---------------------------------------------------------------------------


def _cmd_compare(args) -> int:
    from .analysis import comparison_table, load_summary

    summaries = [load_summary(d) for d in args.run_dirs]
    print(comparison_table(summaries))
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .analysis import load_fields, load_history, plot_fields, plot_history

    run_dir = Path(args.run_dir)
    fields_csv = run_dir / "fields.csv"
    history_csv = run_dir / "loss_history.csv"
    made = []
    if fields_csv.exists():
        grid, predicted, reference = load_fields(fields_csv)
        out = run_dir / "fields.png"
        plot_fields(out, grid, predicted, reference, title=run_dir.name)
        made.append(out)
    if history_csv.exists():
        out = run_dir / "loss_history.png"
        plot_history(out, load_history(history_csv), title=run_dir.name)
        made.append(out)
    if not made:
        raise AnalysisError(
            "nothing to plot in %s (no fields.csv or loss_history.csv)" % run_dir
        )
    for path in made:
        print("wrote %s" % path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _check_gradients() -> tuple:
    """Loss gradients against central finite differences on small networks.

    Runs with the entropy term switched off: its one-sided ramp is correct
    but non-differentiable at zero, which a finite-difference probe cannot
    distinguish from an error.  Everything else (forward pass, positivity
    floors, field derivatives, residual and data terms) is exercised.
    """
    from .network import xavier_init
    from .optimize import _Objective
    from .sampling import PointSet
    from .loss import LossConfig

    rng = np.random.default_rng(20240817)
    worst = 0.0
    for trial in range(3):
        net = xavier_init([2, 8, 8, 4], seed=100 + trial)
        # lift raw density/pressure outputs well above the positivity floor
        # so the floor's own kink cannot sit inside the probe stencil
        bias = net.biases[-1]
        lifted = np.asarray(bias.value, dtype=np.float64).copy()
        lifted.reshape(-1)[0] += 1.0
        lifted.reshape(-1)[3] += 1.0
        bias.value = lifted
        pts = PointSet(role="residual", points=rng.uniform(-1.0, 1.0, (20, 2)))
        data = PointSet(
            role="inflow",
            points=rng.uniform(-1.0, 1.0, (8, 2)),
            targets=np.abs(rng.normal(1.0, 0.2, (8, 4))) + 0.2,
        )
        objective = _Objective(
            [net],
            [{"residual": pts, "inflow": data}],
            (),
            LossConfig(entropy_mode="off"),
            None,
        )
        theta = objective.pack()
        _, grad, _, _ = objective.evaluate(theta)
        h = 1e-4
        for idx in rng.choice(theta.size, size=12, replace=False):
            plus = theta.copy()
            plus[idx] += h
            minus = theta.copy()
            minus[idx] -= h
            fd = (objective.evaluate(plus)[0] - objective.evaluate(minus)[0]) / (2 * h)
            scale = max(abs(grad[idx]), abs(fd), 1e-8)
            worst = max(worst, abs(grad[idx] - fd) / scale)
    return worst < 1e-5, "max relative gradient mismatch %.3g" % worst


def _check_entropy_pair() -> tuple:
    """The entropy/entropy-flux compatibility identity at random states."""
    from .physics import conserved_from_primitive, entropy_compatibility_residuals

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        rho = rng.uniform(0.1, 5.0)
        u, v = rng.uniform(-3.0, 3.0, 2)
        p = rng.uniform(0.1, 10.0)
        U = conserved_from_primitive(rho, u, v, p)
        r1, r2 = entropy_compatibility_residuals(U)
        scale = max(1.0, abs(rho * u), abs(rho * v))
        worst = max(worst, np.max(np.abs(r1)) / scale, np.max(np.abs(r2)) / scale)
    return worst < 1e-7, "max relative identity residual %.3g" % worst


def _check_smooth_oracle() -> tuple:
    """Exact advection solution: conservation and entropy residuals vanish."""
    from .oracles import smooth_advection_duals
    from .physics import entropy_residual, unsteady_euler_residuals

    rng = np.random.default_rng(11)
    x = rng.uniform(-1.0, 1.0, 2000)
    y = rng.uniform(-1.0, 1.0, 2000)
    t = rng.uniform(0.0, 1.0, 2000)
    rho, u, v, p = smooth_advection_duals(x, y, t)
    worst = max(
        float(np.max(np.abs(r.value)))
        for r in unsteady_euler_residuals(rho, u, v, p)
    )
    ent = entropy_residual(rho, u, v, p, mode="relu", unsteady=True)
    worst = max(worst, float(np.max(np.abs(ent.value))))
    return worst < 1e-10, "max residual %.3g" % worst


def _check_fan_oracle() -> tuple:
    """Rarefaction-fan field satisfies the steady equations (FD derivatives)."""
    from .oracles import ExpansionFan
    from .physics import ReferenceScales, flux_x, flux_y

    fan = ExpansionFan(mach_in=2.0, rho_in=1.23, p_in=1.01e5, deflection=math.radians(10.0))
    scales = ReferenceScales.from_state(fan.inlet_state())
    rng = np.random.default_rng(3)
    # sample rays strictly inside the fan, away from its edges
    phis = rng.uniform(fan.tail_angle + 0.02, fan.lead_angle - 0.02, 200)
    radii = rng.uniform(0.2, 0.9, 200)
    x = radii * np.cos(phis)
    y = radii * np.sin(phis)
    h = 1e-6

    def fluxes(xq, yq):
        st = scales.nondim(fan.state(xq, yq))
        g1 = flux_x(st.rho, st.u, st.v, st.p)
        g2 = flux_y(st.rho, st.u, st.v, st.p)
        return g1, g2

    g1p, _ = fluxes(x + h, y)
    g1m, _ = fluxes(x - h, y)
    _, g2p = fluxes(x, y + h)
    _, g2m = fluxes(x, y - h)
    worst = 0.0
    for c in range(4):
        resid = (g1p[c] - g1m[c]) / (2 * h) + (g2p[c] - g2m[c]) / (2 * h)
        worst = max(worst, float(np.max(np.abs(resid))))
    return worst < 1e-6, "max nondimensional steady residual %.3g" % worst


def _check_jump_relations() -> tuple:
    """Attached-shock oracle satisfies the jump conditions."""
    from .oracles import ObliqueShock
    from .oracles import verify_jump_relations
    from .physics import PrimitiveState

    pre = PrimitiveState(0.06688, 738.2, 0.0, 9485.0)
    oracle = ObliqueShock(pre=pre, deflection=math.radians(10.0))
    resid = verify_jump_relations(pre, oracle.post, oracle.shock_angle)
    worst = float(np.max(resid))
    return worst < 1e-12, "max flux mismatch %.3g" % worst


def _cmd_check(args) -> int:
    checks = [
        ("derivatives vs finite differences", _check_gradients),
        ("entropy-pair identity", _check_entropy_pair),
        ("smooth advection oracle residuals", _check_smooth_oracle),
        ("expansion-fan oracle residuals", _check_fan_oracle),
        ("attached-shock jump relations", _check_jump_relations),
    ]
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        print("%s %-38s %s" % ("PASS" if ok else "FAIL", name, detail))
        failures += 0 if ok else 1
    if failures:
        print("%d check(s) failed" % failures, file=sys.stderr)
        return 1
    print("all checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
