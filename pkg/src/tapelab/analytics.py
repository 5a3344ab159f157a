"""Measurements over tapes: latency, sequencing accuracy, and activity.

Everything here is a pure function of an immutable tape. Each result type
knows how to dump a plot-ready CSV (`to_csv`) and a JSON-able summary
(`summary`), so the CLI and the report bundle are thin shells.

Quantiles use the sorted lower-index convention (value at
floor((n-1)*q)), which keeps grouped box statistics reproducible to the
bit across runs and platforms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nbbo import NbboSeries, Ordering, count_states, stream_nbbo
from .tape import Tape
from .types import (
    DEFAULT_EXCHANGES,
    SESSION_END_US,
    MsgKind,
    SipId,
    SymbolDirectory,
    TapeRecord,
    TRF_EXCHANGE_IDS,
)


class UnsortedInputError(ValueError):
    pass


class MixedSymbolInputError(ValueError):
    pass


class DegenerateFitError(ValueError):
    """OLS fit is undefined: fewer than two points or zero x-variance."""


def record_latency(record: TapeRecord) -> int:
    """Report latency of one message: sip_ts minus exchange_ts, signed.

    Captured data may legitimately be negative; simulated data may not.
    """
    return record.sip_ts - record.exchange_ts


def latencies(tape: Tape) -> np.ndarray:
    """Signed per-record latency column (microseconds, int64)."""
    return tape.sip_ts - tape.exchange_ts


def _quantile_lower(sorted_vals: np.ndarray, q: float):
    return sorted_vals[int(math.floor((len(sorted_vals) - 1) * q))]


@dataclass(frozen=True)
class LatencyStat:
    """Box-plot statistics for one (SIP, exchange) latency group."""

    sip_id: Optional[int]
    exchange_id: Optional[int]
    count: int
    median_us: float
    mean_us: float
    std_us: float
    min_us: int
    max_us: int
    q1_us: float
    q3_us: float
    whisker_lo: int
    whisker_hi: int
    outlier_count: int


def box_stats(values: np.ndarray, sip_id=None, exchange_id=None) -> LatencyStat:
    """Five-number-plus summary with 1.5*IQR whiskers clamped to data."""
    v = np.sort(np.asarray(values, dtype=np.int64))
    if len(v) == 0:
        raise ValueError("box_stats needs a non-empty group")
    q1 = _quantile_lower(v, 0.25)
    med = _quantile_lower(v, 0.5)
    q3 = _quantile_lower(v, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return LatencyStat(
        sip_id=sip_id,
        exchange_id=exchange_id,
        count=len(v),
        median_us=float(med),
        mean_us=float(v.mean()),
        std_us=float(v.std()),
        min_us=int(v[0]),
        max_us=int(v[-1]),
        q1_us=float(q1),
        q3_us=float(q3),
        whisker_lo=int(inside[0]),
        whisker_hi=int(inside[-1]),
        outlier_count=int(len(v) - len(inside)),
    )


LATENCY_CSV_COLUMNS = ["sip", "exchange", "count", "median_us", "mean_us",
                       "std_us", "min_us", "max_us", "q1_us", "q3_us",
                       "whisker_lo", "whisker_hi", "outlier_count"]


@dataclass(frozen=True)
class LatencyStatsResult:
    group_by: str
    stats: tuple

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(LATENCY_CSV_COLUMNS)
            for s in self.stats:
                w.writerow([
                    SipId(s.sip_id).name if s.sip_id is not None else "",
                    (DEFAULT_EXCHANGES[s.exchange_id].abbreviation
                     if s.exchange_id is not None else ""),
                    s.count, s.median_us, s.mean_us, s.std_us, s.min_us,
                    s.max_us, s.q1_us, s.q3_us, s.whisker_lo, s.whisker_hi,
                    s.outlier_count,
                ])

    def summary(self) -> dict:
        groups = {}
        for s in self.stats:
            parts = []
            if s.sip_id is not None:
                parts.append(SipId(s.sip_id).name)
            if s.exchange_id is not None:
                parts.append(DEFAULT_EXCHANGES[s.exchange_id].abbreviation)
            groups["/".join(parts)] = {
                "count": s.count, "median_us": s.median_us,
                "mean_us": s.mean_us, "std_us": s.std_us,
                "outlier_count": s.outlier_count,
            }
        return {"group_by": self.group_by, "groups": groups}


def latency_stats(tape: Tape, group_by: str = "sip_exchange",
                  directory: SymbolDirectory | None = None,
                  include_quotes: bool = False) -> LatencyStatsResult:
    """Grouped latency box statistics (trades by default).

    group_by is "sip", "exchange", or "sip_exchange"; the SIP groupings
    need a directory to resolve each symbol's consolidator. Groups with
    no records are omitted.
    """
    if group_by not in ("sip", "exchange", "sip_exchange"):
        raise ValueError(f"unknown group_by: {group_by!r}")
    sub = tape if include_quotes else tape.trades()
    lat = latencies(sub)
    need_sip = group_by in ("sip", "sip_exchange")
    if need_sip:
        if directory is None:
            raise ValueError("SIP grouping needs a symbol directory")
        sip_of = np.array([int(s.sip) for s in directory], dtype=np.int64)
        sips = sip_of[sub.symbol_id]
    exchanges = sub.exchange_id.astype(np.int64)
    if group_by == "sip":
        key = sips
        decode = lambda k: (int(k), None)
    elif group_by == "exchange":
        key = exchanges
        decode = lambda k: (None, int(k))
    else:
        key = sips * 256 + exchanges
        decode = lambda k: (int(k) // 256, int(k) % 256)
    stats = []
    for k in np.unique(key):
        sip_id, ex_id = decode(k)
        stats.append(box_stats(lat[key == k], sip_id=sip_id,
                               exchange_id=ex_id))
    return LatencyStatsResult(group_by, tuple(stats))


# ---------------------------------------------------------------------------
# Out-of-sequence detection (first differences of exchange time in SIP order)

@dataclass(frozen=True)
class OosReport:
    symbol_id: int
    total_trades: int
    oos_count: int
    oos_percent: float
    max_reversal_us: int

    def summary(self) -> dict:
        return {
            "symbol_id": self.symbol_id,
            "total_trades": self.total_trades,
            "oos_count": self.oos_count,
            "oos_percent": self.oos_percent,
            "max_reversal_us": self.max_reversal_us,
        }


def _require_single_symbol_trades(tape: Tape) -> int:
    if np.any(tape.msg_kind != int(MsgKind.TRADE)):
        raise ValueError("input must contain trades only")
    symbols = np.unique(tape.symbol_id)
    if len(symbols) > 1:
        raise MixedSymbolInputError(
            f"expected one symbol, found {len(symbols)}")
    return int(symbols[0]) if len(symbols) else -1


def _require_sip_sorted(tape: Tape) -> None:
    sts = tape.sip_ts
    seq = tape.sip_seq
    d_ts = np.diff(sts)
    if np.any(d_ts < 0) or np.any((d_ts == 0) & (np.diff(seq) <= 0)):
        raise UnsortedInputError("input must be sorted by (sip_ts, sip_seq)")


def detect_out_of_sequence(tape: Tape) -> OosReport:
    """Count trades whose venue send time runs backwards in SIP order.

    First differences of exchange_ts along the SIP-sorted tape; strictly
    negative differences are out of sequence (zero is a legitimate tie).
    The percentage denominator is the total trade count.
    """
    symbol_id = _require_single_symbol_trades(tape)
    _require_sip_sorted(tape)
    n = len(tape)
    if n <= 1:
        return OosReport(symbol_id, n, 0, 0.0, 0)
    d = np.diff(tape.exchange_ts)
    neg = d < 0
    oos = int(neg.sum())
    max_rev = int(-d[neg].min()) if oos else 0
    return OosReport(symbol_id, n, oos, oos / n, max_rev)


def oos_diff_series(tape: Tape) -> np.ndarray:
    """First-difference detail rows behind an OOS report:
    (sip_ts, exchange_ts, first_diff) per trade, diff 0 for the first."""
    _require_single_symbol_trades(tape)
    _require_sip_sorted(tape)
    ets = tape.exchange_ts
    d = np.concatenate(([0], np.diff(ets)))
    return np.rec.fromarrays([tape.sip_ts, ets, d],
                             names=["sip_ts_us", "exchange_ts_us",
                                    "first_diff_us"])


# ---------------------------------------------------------------------------
# Trend fit (ordinary least squares)

@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_points": self.n_points}


def fit_trend(points) -> TrendFit:
    """Least-squares line through (x, y) pairs with R-squared.

    Raises DegenerateFitError for fewer than two points or zero variance
    in x.
    """
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateFitError("need at least two points")
    x, y = pts[:, 0], pts[:, 1]
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateFitError("zero variance in x")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return TrendFit(slope, intercept, r2, len(x))


# ---------------------------------------------------------------------------
# Latency-window event counts

WINDOW_KINDS = ("trades", "quotes", "both")


@dataclass(frozen=True)
class WindowCounts:
    counts: np.ndarray       # per message, tape order
    hist_edges: np.ndarray   # decade bin lower edges (0, 1, 10, ...)
    hist_counts: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_lo", "bin_hi", "messages"])
            for i, c in enumerate(self.hist_counts):
                hi = (self.hist_edges[i + 1] if i + 1 < len(self.hist_edges)
                      else "")
                w.writerow([self.hist_edges[i], hi, int(c)])

    def summary(self) -> dict:
        nonzero = self.counts[self.counts > 0]
        modal = int(np.argmax(self.hist_counts))
        return {
            "messages": int(len(self.counts)),
            "max_events_in_window": int(self.counts.max(initial=0)),
            "median_events_in_window": (float(np.median(self.counts))
                                        if len(self.counts) else 0.0),
            "median_nonzero": (float(np.median(nonzero))
                               if len(nonzero) else 0.0),
            "modal_bin_lo": int(self.hist_edges[modal]),
        }


def latency_window_events(tape: Tape, kinds: str = "both") -> WindowCounts:
    """How many same-symbol prints land inside each message's latency
    window [sent, reported).

    The window is half-open so a message never counts itself; `kinds`
    picks what gets counted (the windows themselves belong to every
    message in the tape).
    """
    if kinds not in WINDOW_KINDS:
        raise ValueError(f"kinds must be one of {WINDOW_KINDS}")
    symbols = np.unique(tape.symbol_id)
    if len(symbols) > 1:
        raise MixedSymbolInputError(
            f"expected one symbol, found {len(symbols)}")
    sts = tape.sip_ts
    if np.any(np.diff(sts) < 0):
        raise UnsortedInputError("input must be sorted by sip_ts")
    if kinds == "trades":
        counted = sts[tape.msg_kind == int(MsgKind.TRADE)]
    elif kinds == "quotes":
        counted = sts[tape.msg_kind != int(MsgKind.TRADE)]
    else:
        counted = sts
    ets = tape.exchange_ts
    counts = (np.searchsorted(counted, sts, side="left")
              - np.searchsorted(counted, ets, side="left"))
    counts = np.maximum(counts, 0).astype(np.int64)
    top = int(counts.max(initial=0))
    edges = [0, 1]
    while edges[-1] <= top:
        edges.append(edges[-1] * 10)
    edges_arr = np.array(edges, dtype=np.int64)
    hist, _ = np.histogram(counts, bins=np.append(edges_arr, edges_arr[-1] * 10))
    return WindowCounts(counts, edges_arr, hist)


# ---------------------------------------------------------------------------
# Per-second activity series

AGGREGATE_METRICS = ("trade_count", "dollar_volume", "message_count",
                     "share_volume")


class SecondSeries:
    """Per-second values over the session, one array per group.

    Groups are exchange ids, SIP ids, or the single key "all"; empty
    seconds are present as zeros.
    """

    def __init__(self, metric: str, group_by: str, start_s: int,
                 values: dict):
        self.metric = metric
        self.group_by = group_by
        self.start_s = start_s
        self.values = values

    def __len__(self) -> int:
        return len(next(iter(self.values.values())))

    @property
    def seconds(self) -> np.ndarray:
        return self.start_s + np.arange(len(self))

    def group_label(self, key) -> str:
        if key == "all":
            return "all"
        if self.group_by == "exchange":
            return DEFAULT_EXCHANGES[key].abbreviation
        return SipId(key).name

    def total(self):
        return sum(float(v.sum()) for v in self.values.values())

    def cumulative(self) -> "SecondSeries":
        return SecondSeries(self.metric, self.group_by, self.start_s,
                            {k: np.cumsum(v) for k, v in self.values.items()})

    def to_csv(self, path) -> None:
        keys = sorted(self.values, key=lambda k: (k == "all", k))
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["second"] + [self.group_label(k) for k in keys])
            cols = [self.values[k] for k in keys]
            for i, sec in enumerate(self.seconds):
                w.writerow([int(sec)] + [col[i] for col in cols])


def per_second_aggregate(tape: Tape, metric: str, group_by: str = "none",
                         directory: SymbolDirectory | None = None,
                         session_window=(0, SESSION_END_US)) -> SecondSeries:
    """Bucket activity into session seconds (keyed by SIP report time).

    dollar_volume sums price*size over trades, in dollars; share_volume
    sums shares; message_count counts every record. Grouping by SIP needs
    a directory.
    """
    if metric not in AGGREGATE_METRICS:
        raise ValueError(f"unknown metric: {metric!r}")
    if group_by not in ("none", "exchange", "sip"):
        raise ValueError(f"unknown group_by: {group_by!r}")
    start_s = int(session_window[0] // 1_000_000)
    end_s = int(math.ceil(session_window[1] / 1_000_000))
    n_seconds = end_s - start_s

    if metric == "message_count":
        sub = tape
    else:
        sub = tape.trades()
    second = (sub.sip_ts // 1_000_000).astype(np.int64) - start_s
    in_window = (second >= 0) & (second < n_seconds)
    second = second[in_window]

    if metric == "trade_count" or metric == "message_count":
        weights = None
    elif metric == "share_volume":
        weights = sub.size.astype(np.float64)[in_window]
    else:
        weights = (sub.price * sub.size.astype(np.int64)
                   ).astype(np.float64)[in_window] / 10_000.0

    if group_by == "none":
        group_keys = np.zeros(len(second), dtype=np.int64)
        labels = {0: "all"}
    elif group_by == "exchange":
        group_keys = sub.exchange_id.astype(np.int64)[in_window]
        labels = {int(k): int(k) for k in np.unique(group_keys)}
    else:
        if directory is None:
            raise ValueError("SIP grouping needs a symbol directory")
        sip_of = np.array([int(s.sip) for s in directory], dtype=np.int64)
        group_keys = sip_of[sub.symbol_id[in_window]]
        labels = {int(k): int(k) for k in np.unique(group_keys)}

    values = {}
    for k, label in labels.items():
        mask = group_keys == k
        counts = np.bincount(second[mask], minlength=n_seconds,
                             weights=None if weights is None
                             else weights[mask])
        if weights is None:
            counts = counts.astype(np.int64)
        key = "all" if group_by == "none" else label
        values[key] = counts
    if not values:
        dtype = np.int64 if weights is None else np.float64
        values["all"] = np.zeros(n_seconds, dtype=dtype)
    return SecondSeries(metric, group_by, start_s, values)


def cumulative(series):
    """Running sum of a numeric series (array in, array out; SecondSeries
    in, SecondSeries out)."""
    if isinstance(series, SecondSeries):
        return series.cumulative()
    return np.cumsum(np.asarray(series), axis=0)


# ---------------------------------------------------------------------------
# Cross/lock scatter across symbols

@dataclass(frozen=True)
class ScatterRow:
    symbol_id: int
    ticker: str
    message_count: int      # quotes
    cross_count: int
    lock_count: int
    mean_trade_price: Optional[float]
    penny_flag: bool


@dataclass(frozen=True)
class ScatterResult:
    rows: tuple

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["ticker", "quote_messages", "crosses", "locks",
                        "mean_trade_price", "penny_flag"])
            for r in self.rows:
                w.writerow([r.ticker, r.message_count, r.cross_count,
                            r.lock_count,
                            "" if r.mean_trade_price is None
                            else f"{r.mean_trade_price:.4f}",
                            int(r.penny_flag)])

    def summary(self) -> dict:
        return {"symbols": len(self.rows),
                "total_crosses": sum(r.cross_count for r in self.rows),
                "total_locks": sum(r.lock_count for r in self.rows)}


def cross_lock_scatter(tape: Tape, directory: SymbolDirectory) -> ScatterResult:
    """Per-symbol (quote count, crosses, locks, mean price, penny flag);
    the data behind message-traffic-vs-cross scatter plots. Counts come
    from the SIP-order NBBO replay."""
    rows = []
    for info in directory:
        sub = tape.filter(symbol_id=info.id)
        quotes = sub.quotes()
        if len(quotes):
            states = count_states(stream_nbbo(quotes, Ordering.SIP))
            crosses, locks = states.crosses, states.locks
        else:
            crosses = locks = 0
        trades = sub.trades()
        mean_px = (float(trades.price.mean()) / 10_000.0
                   if len(trades) else None)
        rows.append(ScatterRow(info.id, info.ticker, len(quotes), crosses,
                               locks, mean_px, info.penny_flag))
    return ScatterResult(tuple(rows))


# ---------------------------------------------------------------------------
# Returns under SIP order vs venue-time order

@dataclass(frozen=True)
class ReturnsComparison:
    n_returns: int
    mismatch_count: int
    sign_flip_count: int
    sum_abs_diff: float

    def summary(self) -> dict:
        return {"n_returns": self.n_returns,
                "mismatch_count": self.mismatch_count,
                "sign_flip_count": self.sign_flip_count,
                "sum_abs_diff": self.sum_abs_diff}


def returns_compare(tape: Tape) -> ReturnsComparison:
    """Compare simple trade-to-trade returns computed in SIP order
    against the same trades in venue send order.

    Mismatches are decided exactly on integer cross-products, so no
    floating-point wobble leaks into the counts. Requires at least two
    trades of one symbol.
    """
    _require_single_symbol_trades(tape)
    n = len(tape)
    if n < 2:
        raise ValueError("returns_compare needs at least two trades")
    sip_order = np.lexsort((tape.sip_seq, tape.sip_ts))
    exch_order = np.lexsort((tape.sip_seq, tape.exchange_id.astype(np.int64),
                             tape.exchange_ts))
    p_sip = tape.price[sip_order].astype(np.int64)
    p_tru = tape.price[exch_order].astype(np.int64)
    # Cross-multiplied return equality: p_sip[i] * p_tru[i-1] vs
    # p_tru[i] * p_sip[i-1]. int64 is exact while prices stay under
    # ~3e9 ticks; beyond that fall back to Python integers.
    if max(int(p_sip.max()), int(p_tru.max())) < 3_000_000_000:
        lhs = p_sip[1:] * p_tru[:-1]
        rhs = p_tru[1:] * p_sip[:-1]
        mismatch = lhs != rhs
    else:
        mismatch = np.array(
            [int(a1) * int(b0) != int(b1) * int(a0)
             for a1, b0, b1, a0 in zip(p_sip[1:], p_tru[:-1],
                                       p_tru[1:], p_sip[:-1])],
            dtype=bool)
    s_sip = np.sign(np.diff(p_sip))
    s_tru = np.sign(np.diff(p_tru))
    flips = int(np.sum(s_sip * s_tru < 0))
    r_sip = p_sip[1:] / p_sip[:-1] - 1.0
    r_tru = p_tru[1:] / p_tru[:-1] - 1.0
    return ReturnsComparison(
        n_returns=n - 1,
        mismatch_count=int(mismatch.sum()),
        sign_flip_count=flips,
        sum_abs_diff=float(np.abs(r_sip - r_tru).sum()),
    )


# ---------------------------------------------------------------------------
# Spread histogram (consolidated quote series)

def spread_histogram(series: NbboSeries, bin_width_cents: int = 1):
    """Histogram of two-sided spreads in fixed-width price bins.

    Returns (edges_ticks, counts); edges are bin lower bounds, aligned to
    the bin width so zero is always an edge.
    """
    if bin_width_cents < 1:
        raise ValueError("bin_width_cents must be >= 1")
    w = bin_width_cents * 100
    spreads = series.spread[series.has_spread]
    if len(spreads) == 0:
        return np.array([0], dtype=np.int64), np.array([], dtype=np.int64)
    lo = int(np.floor(spreads.min() / w)) * w
    hi = (int(np.floor(spreads.max() / w)) + 1) * w
    edges = np.arange(lo, hi + w, w, dtype=np.int64)
    counts, _ = np.histogram(spreads, bins=edges)
    return edges, counts


def spread_histogram_csv(series: NbboSeries, path,
                         bin_width_cents: int = 1) -> None:
    edges, counts = spread_histogram(series, bin_width_cents)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["spread_lo_dollars", "spread_hi_dollars", "occurrences"])
        for i, c in enumerate(counts):
            w.writerow([edges[i] / 10_000.0, edges[i + 1] / 10_000.0, int(c)])


def ex_trf(tape: Tape) -> Tape:
    """Drop records reported through a trade reporting facility."""
    mask = ~np.isin(tape.exchange_id, TRF_EXCHANGE_IDS)
    return tape.select(mask)
