"""Inference-cost model: continuous re-reasoning vs one-shot compilation.

All currency flows through Decimal; floats are rejected at the boundary so
CSV goldens stay bit-exact across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

DecimalLike = Union[Decimal, int, str]

# Per-token price that makes 500 runs of a five-page, 20k-token workflow
# cost exactly $150.00.
DEFAULT_TOKEN_RATE = Decimal("3.0E-6")

# Upper end of the observed per-compilation price envelope; used as the
# conservative denominator for headline cost ratios.
COMPILE_COST_ENVELOPE = Decimal("0.10")

_QUANTUM = Decimal("0.0001")


def _dec(value: DecimalLike, name: str) -> Decimal:
    if isinstance(value, float):
        raise TypeError(f"{name} must be Decimal, int, or str, not float "
                        "(binary floating point corrupts currency)")
    return value if isinstance(value, Decimal) else Decimal(value)


@dataclass(frozen=True)
class CostModelParams:
    """Inputs for every cost formula.

    executions: workflow run count.
    step_tokens: per-step payload sizes for one run of the workflow.
    usd_per_token: price of one inference token.
    compile_tokens: one-time compilation payload.
    exec_cost_usd: non-inference cost of one run (compute, bandwidth).
    cache_efficiency: fraction of continuous-mode spend removed by caching.
    heal_events: selector heals over the whole run series.
    heal_tokens: payload of one heal call.
    """

    executions: int
    step_tokens: tuple[int, ...]
    usd_per_token: Decimal = DEFAULT_TOKEN_RATE
    compile_tokens: int = 0
    exec_cost_usd: Decimal = Decimal("0")
    cache_efficiency: Decimal = Decimal("0")
    heal_events: int = 0
    heal_tokens: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "step_tokens", tuple(self.step_tokens))
        object.__setattr__(self, "usd_per_token", _dec(self.usd_per_token, "usd_per_token"))
        object.__setattr__(self, "exec_cost_usd", _dec(self.exec_cost_usd, "exec_cost_usd"))
        object.__setattr__(self, "cache_efficiency",
                           _dec(self.cache_efficiency, "cache_efficiency"))
        for name in ("executions", "compile_tokens", "heal_events", "heal_tokens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if any(s < 0 for s in self.step_tokens):
            raise ValueError("step_tokens must be >= 0")
        if self.usd_per_token < 0 or self.exec_cost_usd < 0:
            raise ValueError("prices must be >= 0")
        if not Decimal(0) <= self.cache_efficiency <= Decimal(1):
            raise ValueError("cache_efficiency must be in [0, 1]")

    @property
    def tokens_per_run(self) -> int:
        return sum(self.step_tokens)

    @classmethod
    def from_dict(cls, raw: dict) -> "CostModelParams":
        known = {"executions", "step_tokens", "usd_per_token", "compile_tokens",
                 "exec_cost_usd", "cache_efficiency", "heal_events", "heal_tokens"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown param fields: {sorted(unknown)}")
        kwargs = dict(raw)
        if "step_tokens" in kwargs:
            kwargs["step_tokens"] = tuple(kwargs["step_tokens"])
        return cls(**kwargs)


def cost_continuous(p: CostModelParams) -> Decimal:
    """Every run re-reasons every step: executions * sum(step_tokens) * rate."""
    return p.executions * Decimal(p.tokens_per_run) * p.usd_per_token


def cost_continuous_cached(p: CostModelParams) -> Decimal:
    """Continuous spend with a multiplicative caching discount."""
    return (Decimal(1) - p.cache_efficiency) * cost_continuous(p)


def cost_oneshot(p: CostModelParams) -> Decimal:
    """One compilation, then inference-free runs at exec_cost_usd each."""
    return Decimal(p.compile_tokens) * p.usd_per_token \
        + p.executions * p.exec_cost_usd


def cost_lazy(p: CostModelParams) -> Decimal:
    """One-shot plus heal calls: repair spend scales with UI volatility, not
    with executions."""
    return cost_oneshot(p) + p.heal_events * Decimal(p.heal_tokens) * p.usd_per_token


def blended_token_rate(input_tokens: int, output_tokens: int,
                       usd_per_input_token: DecimalLike,
                       usd_per_output_token: DecimalLike) -> Decimal:
    """Single effective rate for a call with asymmetric input/output prices."""
    total = input_tokens + output_tokens
    if total <= 0:
        raise ValueError("token counts must sum to > 0")
    spend = (input_tokens * _dec(usd_per_input_token, "usd_per_input_token")
             + output_tokens * _dec(usd_per_output_token, "usd_per_output_token"))
    return spend / Decimal(total)


@dataclass(frozen=True)
class Breakeven:
    m_star: Optional[int]          # None: one-shot never undercuts continuous
    ratio: Optional[Decimal]       # continuous/oneshot at the requested M


def breakeven(p: CostModelParams, *, compile_cost: Optional[DecimalLike] = None,
              ratio_at: Optional[int] = None) -> Breakeven:
    """Smallest run count where one-shot beats continuous, and the cost
    ratio at a chosen M.

    ``compile_cost`` overrides compile_tokens * rate with an explicit
    envelope figure so headline ratios stay exact.
    """
    per_exec = Decimal(p.tokens_per_run) * p.usd_per_token
    if per_exec == 0:
        raise ValueError("per-execution continuous cost is zero; breakeven undefined")
    compile_usd = (_dec(compile_cost, "compile_cost") if compile_cost is not None
                   else Decimal(p.compile_tokens) * p.usd_per_token)

    if per_exec <= p.exec_cost_usd:
        m_star = None
    else:
        # smallest integer M with compile + M*exec < M*per_exec
        step_gain = per_exec - p.exec_cost_usd
        m_star = int(compile_usd // step_gain) + 1

    ratio = None
    if ratio_at is not None:
        oneshot = compile_usd + ratio_at * p.exec_cost_usd
        if oneshot == 0:
            raise ValueError("one-shot cost is zero at the requested M; ratio undefined")
        ratio = (ratio_at * per_exec) / oneshot
    return Breakeven(m_star, ratio)


# -- reporting ---------------------------------------------------------


def format_usd(value: Decimal) -> str:
    """Fixed-point money: 4-decimal quantum, trailing zeros trimmed, never
    fewer than 2 decimals, no scientific notation."""
    q = value.quantize(_QUANTUM, rounding=ROUND_HALF_UP)
    text = f"{q:f}"
    whole, _, frac = text.partition(".")
    frac = frac.rstrip("0")
    if len(frac) < 2:
        frac = (frac + "00")[:2]
    return f"{whole}.{frac}"


CSV_COLUMNS = ("M", "cost_continuous", "cost_cached", "cost_oneshot", "cost_lazy")


@dataclass(frozen=True)
class CostReport:
    csv: str
    warnings: tuple[str, ...]

    @property
    def rows(self) -> list[dict[str, str]]:
        lines = self.csv.strip().splitlines()
        return [dict(zip(CSV_COLUMNS, line.split(","))) for line in lines[1:]]


def emit_report(grid: Sequence[CostModelParams]) -> CostReport:
    """Deterministic CSV over a parameter grid, one row per entry.

    Rows where healing spend reaches continuous spend defeat the point of
    lazy repair; those are flagged in warnings, never silently reshaped.
    """
    if not grid:
        raise ValueError("empty parameter grid")
    lines = [",".join(CSV_COLUMNS)]
    warnings: list[str] = []
    for p in grid:
        cont = cost_continuous(p)
        lazy = cost_lazy(p)
        lines.append(",".join((
            str(p.executions),
            format_usd(cont),
            format_usd(cost_continuous_cached(p)),
            format_usd(cost_oneshot(p)),
            format_usd(lazy),
        )))
        if p.heal_events > 0 and p.executions > 0 and lazy >= cont:
            warnings.append(
                f"M={p.executions}: healing spend ({format_usd(lazy)}) reaches "
                f"continuous spend ({format_usd(cont)}); lazy repair degenerate")
    return CostReport("\n".join(lines) + "\n", tuple(warnings))


def standard_grid(m_values: Iterable[int] = range(0, 501, 50)) -> tuple[CostModelParams, ...]:
    """The benchmark grid: five 20k-token steps per run, 90% caching
    baseline, compile payload at the top of the observed envelope, one
    2k-token heal over the series."""
    rows = []
    for m in m_values:
        rows.append(CostModelParams(
            executions=m,
            step_tokens=(20_000,) * 5,
            usd_per_token=DEFAULT_TOKEN_RATE,
            compile_tokens=33_000,
            exec_cost_usd=Decimal("0"),
            cache_efficiency=Decimal("0.9"),
            heal_events=0 if m == 0 else 1,
            heal_tokens=2_000,
        ))
    return tuple(rows)


def load_grid(path: Union[str, Path]) -> tuple[CostModelParams, ...]:
    """Read a JSON array of param objects; numbers with fraction parts are
    parsed straight to Decimal."""
    raw = json.loads(Path(path).read_text(), parse_float=Decimal)
    if not isinstance(raw, list) or not raw:
        raise ValueError("grid file must be a non-empty JSON array")
    return tuple(CostModelParams.from_dict(entry) for entry in raw)
