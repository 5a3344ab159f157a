"""Phantom crosses: the consolidated view disagrees with the venues.

Replays one symbol's quotes twice: in the order the consolidator printed
them (SIP time) and in the order the venues sent them (exchange time).
Every single venue's own book stays sane in both views, yet the
consolidated best bid/offer locks and crosses in the SIP view, because
fast venues' updates overtake slow ones in flight.

Run:  python3 demos/04_crossed_markets.py
"""

from pathlib import Path

import numpy as np

import tapelab as tl
from tapelab.analytics import cross_lock_scatter, spread_histogram
from tapelab.sim import consolidate, generate_events, scenario_preset
import dataclasses

OUT = Path("demo_out")
OUT.mkdir(exist_ok=True)

# Trim the stock scenario to its mid-sized symbols for speed.
config = scenario_preset("typical_day", seed=12)
keep = {"IBM", "SHAK", "KLIC", "GBX", "WBMD", "EYES", "BRKA", "OHGI"}
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
combined = tl.Tape(np.concatenate([t.data for t in result.tapes.values()]))

top = max(config.directory,
          key=lambda s: len(combined.quotes(symbol_id=s.id)))
quotes = combined.quotes(symbol_id=top.id)
print(f"focus symbol: {top.ticker}, {len(quotes)} quote messages")

sip_view = tl.stream_nbbo(quotes, tl.Ordering.SIP)
true_view = tl.stream_nbbo(quotes, tl.Ordering.EXCHANGE)
sip_counts = tl.count_states(sip_view)
true_counts = tl.count_states(true_view)
print(f"consolidated view (SIP order):   {sip_counts.crosses} crosses, "
      f"{sip_counts.locks} locks")
print(f"venue-time view (exchange order): {true_counts.crosses} crosses, "
      f"{true_counts.locks} locks")
us_crossed = sip_counts.time_in_state[tl.MarketState.CROSSED]
print(f"time the consolidated book looked crossed: {us_crossed / 1e6:.3f} s")

# No single venue ever crosses itself, in either replay order.
for ex in np.unique(quotes.exchange_id):
    venue_replay = tl.stream_nbbo(quotes.filter(exchange_id=int(ex)),
                                  tl.Ordering.SIP)
    counts = tl.count_states(venue_replay)
    assert counts.crosses == 0 and counts.locks == 0
print("every per-venue book replay: 0 crosses, 0 locks")

edges, hist = spread_histogram(sip_view, bin_width_cents=1)
print("\nconsolidated spread distribution (1-cent bins):")
for lo, count in zip(edges[:-1], hist):
    if count:
        print(f"  {lo / 10_000:+.2f} .. {(lo + 100) / 10_000:+.2f}  "
              f"{count:>8d}")

scatter = cross_lock_scatter(combined, config.directory)
scatter.to_csv(OUT / "crosses_vs_messages.csv")
print("\nquote traffic vs phantom crosses, per symbol:")
for row in sorted(scatter.rows, key=lambda r: -r.message_count):
    print(f"  {row.ticker:5s} {row.message_count:>9,d} quotes  "
          f"{row.cross_count:>6d} crosses  {row.lock_count:>6d} locks")
print(f"\nCSV output in {OUT}/")
