"""Physics-informed neural networks for inverse problems in supersonic flow.

A small, numpy-only stack: a reverse-over-forward automatic-differentiation
engine, tanh networks with trainable activation slopes, compressible-flow
algebra with entropy constraints, exact gas-dynamics references, loss
assembly for single-network and domain-decomposed training, deterministic
full-batch optimizers, and an experiment CLI.
"""

__version__ = "0.1.0"

__all__ = ["Dual", "Param", "Tape", "PinnSolver", "XpinnSolver", "__version__"]


def __getattr__(name):
    # Lazy re-exports keep `import shockpinn.autodiff` free of heavier deps.
    if name in ("Dual", "Param", "Tape"):
        from . import autodiff

        return getattr(autodiff, name)
    if name in ("PinnSolver", "XpinnSolver"):
        from . import solver

        return getattr(solver, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
