"""Out-of-sequence trades, the volume trend, and skewed returns.

Sorting a symbol's trades by consolidator timestamp should give
non-decreasing venue timestamps; every negative first difference is a
trade the public tape reports in the wrong order. This demo measures the
rate per symbol, fits the trade-volume trend, peeks at latency windows,
and shows the knock-on effect on simple returns.

Run:  python3 demos/05_out_of_sequence_returns.py
"""

import numpy as np

import tapelab as tl
from tapelab.analytics import (
    detect_out_of_sequence,
    fit_trend,
    latency_window_events,
    returns_compare,
)
from tapelab.sim import consolidate, generate_events, scenario_preset
import dataclasses

# Mid-weight slice of the stock scenario; heavy enough to reorder.
config = scenario_preset("typical_day", seed=21)
keep = {"DNR", "IBM", "SHAK", "KLIC", "GBX", "WBMD", "EYES", "BRKA", "OHGI"}
infos = [dataclasses.replace(s, id=i) for i, s in
         enumerate(s for s in config.directory if s.ticker in keep)]
profiles = tuple(
    dataclasses.replace(
        next(p for p in config.symbols
             if config.directory.ticker_of(p.symbol_id) == info.ticker),
        symbol_id=info.id)
    for info in infos)
config = dataclasses.replace(config, symbols=profiles,
                             directory=tl.SymbolDirectory(infos))

events = generate_events(config)
result = consolidate(events, config.latency, config.seed, config.directory)

print(f"{'ticker':6s} {'trades':>8s} {'out-of-seq':>10s} {'percent':>8s} "
      f"{'max reversal':>12s}")
points = []
reports = {}
for info in config.directory:
    trades = result.tapes[info.sip].trades(symbol_id=info.id)
    report = detect_out_of_sequence(trades)
    reports[info.ticker] = (report, trades)
    points.append((report.total_trades, report.oos_count))
    print(f"{info.ticker:6s} {report.total_trades:>8d} "
          f"{report.oos_count:>10d} {report.oos_percent:>7.1%} "
          f"{report.max_reversal_us:>10d}us")

fit = fit_trend(points)
print(f"\ntrades vs out-of-sequence count: slope {fit.slope:.2f}, "
      f"R^2 {fit.r_squared:.3f}")

heaviest = max(reports, key=lambda t: reports[t][0].total_trades)
report, trades = reports[heaviest]
cmp_ = returns_compare(trades)
print(f"\n{heaviest} trade-to-trade returns, consolidated vs true order:")
print(f"  {cmp_.mismatch_count} of {cmp_.n_returns} returns differ; "
      f"{cmp_.sign_flip_count} flip sign outright")
print(f"  total absolute return distortion: {cmp_.sum_abs_diff:.4f}")

info = config.directory.by_ticker(heaviest)
full = result.tapes[info.sip].filter(symbol_id=info.id)
windows = latency_window_events(full, kinds="both")
nonzero = windows.counts[windows.counts > 0]
print(f"\nlatency windows for {heaviest}: while a message is in flight, "
      f"a median of {np.median(nonzero):.0f} other prints land "
      f"(p99 {np.percentile(nonzero, 99):.0f})")
