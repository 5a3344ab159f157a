"""Descriptive market-activity series: trades, dollars, and message load.

Reproduces the classic day-overview panels for a simulated heavy symbol:
trades per second, dollars per second, cumulative dollars, cumulative
share volume by venue, and per-SIP message rates. CSVs land in
demo_out/ for plotting with any external tool.

Run:  python3 demos/02_market_activity.py
"""

from pathlib import Path

import numpy as np

import tapelab as tl
from tapelab.analytics import cumulative, per_second_aggregate
from tapelab.sim import consolidate, generate_events, scenario_preset

OUT = Path("demo_out")
OUT.mkdir(exist_ok=True)

# Scale the stock scenario down so the demo runs in a couple of seconds:
# keep only the four lightest symbols plus a trimmed heavy one.
config = scenario_preset("typical_day", seed=3)
keep = {"IBM", "SHAK", "KLIC", "EYES"}
import dataclasses

infos = [s for s in config.directory if s.ticker in keep]
infos = [dataclasses.replace(s, id=i) for i, s in enumerate(infos)]
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
combined = tl.Tape(np.concatenate([t.data for t in result.tapes.values()]))

top = max(config.directory,
          key=lambda s: len(combined.trades(symbol_id=s.id)))
tape = combined.filter(symbol_id=top.id)
print(f"focus symbol: {top.ticker} with {len(tape.trades())} trades")

trades = per_second_aggregate(tape, "trade_count")
dollars = per_second_aggregate(tape, "dollar_volume")
cum_dollars = cumulative(dollars)
print(f"busiest second: {int(trades.values['all'].max())} trades")
print(f"largest one-second dollar flow: "
      f"${dollars.values['all'].max():,.0f}")
print(f"total traded: ${cum_dollars.values['all'][-1]:,.0f}")

trades.to_csv(OUT / f"trades_per_second_{top.ticker}.csv")
dollars.to_csv(OUT / f"dollars_per_second_{top.ticker}.csv")
cum_dollars.to_csv(OUT / f"cumulative_dollars_{top.ticker}.csv")

by_venue = per_second_aggregate(tape, "share_volume",
                                group_by="exchange").cumulative()
by_venue.to_csv(OUT / f"cumulative_shares_by_venue_{top.ticker}.csv")
finals = {by_venue.group_label(k): int(v[-1])
          for k, v in by_venue.values.items()}
print("\ncumulative share volume by venue:")
for venue, shares in sorted(finals.items(), key=lambda kv: -kv[1]):
    print(f"  {venue:4s} {shares:>12,d}")

messages = per_second_aggregate(combined, "message_count", group_by="sip",
                                directory=config.directory)
messages.to_csv(OUT / "messages_per_second_by_sip.csv")
print("\npeak messages in one second, by SIP:")
for key, series in sorted(messages.values.items()):
    print(f"  SIP {messages.group_label(key)}: {int(series.max()):,d}")
print(f"\nCSV output in {OUT}/")
