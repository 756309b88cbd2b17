"""Backtesting of portfolio rules on cap paths with transaction costs.

Wealth mechanics: the portfolio is initialized to the rule's first target at
no cost (the endowment is assumed already allocated); between rebalances the
held weights drift buy-and-hold, w_i <- w_i R_i / sum_j w_j R_j.  At a
rebalance, cost = rate * wealth * sum_i |target_i - drifted_i| (one-way
convention; a config flag doubles it to round-trip) is deducted before the
target is applied, in a single pass.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Optional

import numpy as np

from .markets import MarketPath
from .rules import PortfolioRule
from .simplex import ROW_SUM_TOL

_METRICS = ("total_variation", "relative_entropy")
# Turnover at or below this is float noise (e.g. the market rule's drifted
# weights vs its target); such rebalances are treated as holds.
_TRADE_TOL = 1e-12


@dataclass
class CostModel:
    """Proportional cost on traded dollar value."""

    rate: float = 0.0
    round_trip: bool = False

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"cost rate must be nonnegative, got {self.rate}")

    def cost(self, wealth: float, turnover: float) -> float:
        c = self.rate * wealth * turnover
        return 2.0 * c if self.round_trip else c


@dataclass
class RebalancePolicy:
    """every_k_steps fires at steps with index % k == 0; threshold fires when
    the chosen divergence of target from drifted weights exceeds the band."""

    kind: str = "every_k_steps"
    k: int = 1
    metric: str = "total_variation"
    band: float = 0.0

    def __post_init__(self):
        if self.kind not in ("every_k_steps", "threshold"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "every_k_steps" and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.kind == "threshold":
            if self.metric not in _METRICS:
                raise ValueError(f"unknown metric {self.metric!r}, expected one of {_METRICS}")
            if self.band < 0:
                raise ValueError(f"band must be nonnegative, got {self.band}")


def rebalance_decision(drifted, target, policy: RebalancePolicy, step_index: int) -> bool:
    """Whether to trade into `target` at this step.  Step 0 always trades."""
    if step_index == 0:
        return True
    if policy.kind == "every_k_steps":
        return step_index % policy.k == 0
    drifted = np.asarray(drifted, dtype=float)
    target = np.asarray(target, dtype=float)
    if policy.metric == "total_variation":
        div = 0.5 * float(np.sum(np.abs(target - drifted)))
    else:
        if np.any(target < 0) or np.any(drifted < 0):
            raise ValueError("relative_entropy rebalancing requires long-only rows")
        if np.any((target > 0) & (drifted == 0)):
            return True  # infinite divergence
        pos = target > 0
        div = float(np.sum(target[pos] * np.log(target[pos] / drifted[pos])))
    return div > policy.band


@dataclass
class BacktestReport:
    times: np.ndarray
    wealth: np.ndarray
    market_wealth: np.ndarray
    costs_cum: np.ndarray
    held_weights: np.ndarray
    trade_steps: list
    traded_value: np.ndarray
    rule_name: str

    @property
    def n_trades(self) -> int:
        # the free initial allocation is not counted
        return sum(1 for s in self.trade_steps if s > 0)

    @property
    def total_costs(self) -> float:
        return float(self.costs_cum[-1])

    @property
    def terminal_log_relative(self) -> float:
        return float(math.log(self.wealth[-1]) - math.log(self.market_wealth[-1]))

    def summary(self) -> dict:
        return {
            "terminal_log_relative": self.terminal_log_relative,
            "total_costs": self.total_costs,
            "n_trades": self.n_trades,
        }

    def save(self, out_dir, stem: str) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "V", "V_mkt", "costs_cum"])
            for row in zip(self.times, self.wealth, self.market_wealth, self.costs_cum):
                writer.writerow([repr(float(v)) for v in row])
        with open(out_dir / f"{stem}.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _validate_target(target, caps_row, step: int, rule_name: str) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError(f"{rule_name} emitted non-finite weights at step {step}")
    if abs(target.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(
            f"{rule_name} emitted weights summing to {target.sum():.12g} at step {step}"
        )
    dead = caps_row == 0.0
    if np.any(dead & (np.abs(target) > ROW_SUM_TOL)):
        i_bad = int(np.flatnonzero(dead & (np.abs(target) > ROW_SUM_TOL))[0])
        raise ValueError(
            f"{rule_name} puts weight on bankrupt stock {i_bad + 1} at step {step}"
        )
    return target


def run_backtest(rule: PortfolioRule, path: MarketPath, costs: CostModel,
                 policy: RebalancePolicy) -> BacktestReport:
    """Propagate wealth for `rule` along `path` under `costs` and `policy`."""
    caps = path.caps
    times = path.times
    mu = path.weights()
    rows, n = caps.shape
    rule.reset()

    wealth = np.empty(rows)
    totals = caps.sum(axis=1)
    market = totals / totals[0]
    costs_cum = np.zeros(rows)
    traded = np.zeros(rows)
    held = np.empty((rows, n))
    trade_steps = [0]

    target = _validate_target(rule.step(times[0], mu[0]), caps[0], 0, rule.name)
    w = target.copy()  # initial allocation is free
    v = 1.0
    wealth[0] = v
    held[0] = w

    for s in range(rows - 1):
        prev = caps[s]
        ratio = np.divide(caps[s + 1], prev, out=np.ones(n), where=prev > 0)
        growth = float(w @ ratio)
        if growth <= 0 or not math.isfinite(growth):
            raise ValueError(
                f"{rule.name}: wealth wiped out over step {s} -> {s + 1} "
                f"(growth factor {growth:g})"
            )
        v *= growth
        w = w * ratio / growth
        t = s + 1
        costs_cum[t] = costs_cum[t - 1]

        target = _validate_target(rule.step(times[t], mu[t]), caps[t], t, rule.name)
        if rebalance_decision(w, target, policy, t):
            turnover = float(np.sum(np.abs(target - w)))
            if turnover > _TRADE_TOL:
                fee = costs.cost(v, turnover)
                traded[t] = v * turnover
                v -= fee
                costs_cum[t] += fee
                if v <= 0:
                    raise ValueError(f"{rule.name}: costs wiped out wealth at step {t}")
                trade_steps.append(t)
                w = target.copy()
        wealth[t] = v
        held[t] = w

    return BacktestReport(
        times=times,
        wealth=wealth,
        market_wealth=market,
        costs_cum=costs_cum,
        held_weights=held,
        trade_steps=trade_steps,
        traded_value=traded,
        rule_name=rule.name,
    )


# ---------------------------------------------------------------------------
# cap data ingestion


def _parse_date(token: str, row_num: int) -> date:
    try:
        return datetime.strptime(token.strip(), "%Y-%m-%d").date()
    except ValueError as exc:
        raise ValueError(f"row {row_num}: bad date {token!r} (expected YYYY-MM-DD)") from exc


def load_caps_csv(source) -> MarketPath:
    """Load a cap history in wide (`date,<name>,...`) or long (`date,ticker,cap`) form.

    The form is auto-detected from the header.  Dates must be strictly
    increasing ISO days; times are day offsets from the first date.  Missing
    values after a stock's first record are forward-filled and flagged in the
    path diagnostics; zero caps are kept as bankruptcies (zero is absorbing).
    """
    source = Path(source)
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip().lower() != "date":
            raise ValueError(f"{source}: first column must be 'date'")
        names = [h.strip() for h in header[1:]]
        is_long = [h.lower() for h in names] == ["ticker", "cap"]
        rows = [row for row in reader if any(cell.strip() for cell in row)]

    if is_long:
        dates: list[date] = []
        by_ticker: dict[str, dict[int, float]] = {}
        for num, row in enumerate(rows, start=2):
            if len(row) != 3:
                raise ValueError(f"{source} row {num}: expected 3 columns, got {len(row)}")
            d = _parse_date(row[0], num)
            if not dates or d > dates[-1]:
                dates.append(d)
            elif d != dates[-1]:
                raise ValueError(f"{source} row {num}: dates must be non-decreasing")
            ticker = row[1].strip()
            try:
                cap = float(row[2])
            except ValueError as exc:
                raise ValueError(f"{source} row {num}: bad cap {row[2]!r}") from exc
            by_ticker.setdefault(ticker, {})[len(dates) - 1] = cap
        tickers = sorted(by_ticker)
        table = np.full((len(dates), len(tickers)), np.nan)
        for j, tk in enumerate(tickers):
            for i, cap in by_ticker[tk].items():
                table[i, j] = cap
        names = tickers
        day0 = dates[0]
        times = np.array([(d - day0).days for d in dates], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"{source}: dates must be strictly increasing")
    else:
        dates = []
        vals = []
        for num, row in enumerate(rows, start=2):
            if len(row) != len(names) + 1:
                raise ValueError(
                    f"{source} row {num}: expected {len(names) + 1} columns, got {len(row)}"
                )
            dates.append(_parse_date(row[0], num))
            vals.append([float(v) if v.strip() else math.nan for v in row[1:]])
        day0 = dates[0]
        times = np.array([(d - day0).days for d in dates], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"{source}: dates must be strictly increasing")
        table = np.asarray(vals, dtype=float)

    if np.any(np.isnan(table[0])):
        j = int(np.flatnonzero(np.isnan(table[0]))[0])
        raise ValueError(f"{source}: {names[j]} has no value on the first date")
    if np.any(table[np.isfinite(table)] < 0):
        i, j = np.argwhere(np.isfinite(table) & (table < 0))[0]
        raise ValueError(f"{source}: negative cap for {names[j]} at row {i + 2}")

    filled = {}
    for j in range(table.shape[1]):
        col = table[:, j]
        missing = np.isnan(col)
        if missing.any():
            filled[names[j]] = int(missing.sum())
            last = col[0]
            for i in range(col.size):
                if math.isnan(col[i]):
                    col[i] = last
                else:
                    last = col[i]

    path = MarketPath(
        times=times,
        caps=table,
        spec_label=source.stem,
        seed=None,
        scheme="observed",
    )
    path.diagnostics["stock_names"] = list(names)
    if filled:
        path.diagnostics["forward_filled"] = filled
    bankrupt = [names[j] for j in range(table.shape[1]) if np.any(table[:, j] == 0.0)]
    if bankrupt:
        path.diagnostics["bankrupt_stocks"] = bankrupt
    return path
