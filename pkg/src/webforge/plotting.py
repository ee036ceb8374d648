"""Figure rendering for cost reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

from .costs import (
    CostModelParams,
    cost_continuous,
    cost_continuous_cached,
    cost_lazy,
    cost_oneshot,
)

_SERIES = (
    ("Continuous re-reasoning", cost_continuous, "tab:red", "-"),
    ("Continuous, cached", cost_continuous_cached, "tab:orange", "--"),
    ("One-shot compile", cost_oneshot, "tab:blue", "-"),
    ("One-shot + lazy heals", cost_lazy, "tab:cyan", ":"),
)


def render_cost_figure(grid: Sequence[CostModelParams],
                       out_path: Union[str, Path]) -> Path:
    """Render cost-vs-executions curves for a parameter grid to an image
    file (format from the suffix). Headless-safe."""
    if not grid:
        raise ValueError("empty parameter grid")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ms = [p.executions for p in grid]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, fn, color, style in _SERIES:
        ax.plot(ms, [float(fn(p)) for p in grid], style, color=color, label=label)
    ax.set_xlabel("Executions (M)")
    ax.set_ylabel("Cumulative inference cost (USD)")
    ax.set_title("Inference cost scaling: continuous vs compiled execution")
    # 0.002..150 only reads on a log axis; zero-cost points are clipped
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
