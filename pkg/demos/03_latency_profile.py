"""Link latency portraits: who reports fast, who drags.

Runs a smooth scenario (no microbursts) so the sampled link delays show
through cleanly, then prints box statistics per SIP and per exchange. The
Chicago venue is configured five times slower than everyone else and the
NASDAQ dark-pool reporting facility has a fat tail; both jump out.

Run:  python3 demos/03_latency_profile.py
"""

from pathlib import Path

import tapelab as tl
from tapelab.analytics import latency_stats
from tapelab.sim import (
    IntradayShape,
    LatencyModel,
    SimConfig,
    SymbolActivityProfile,
    consolidate,
    default_venue_weights,
    generate_events,
)

OUT = Path("demo_out")
OUT.mkdir(exist_ok=True)

shape = IntradayShape(((0, 1200, 1.0),))
infos = [tl.SymbolInfo(0, "NLST", tl.Listing.NYSE),
         tl.SymbolInfo(1, "QLST", tl.Listing.NASDAQ)]
profiles = tuple(
    SymbolActivityProfile(symbol_id=i, trade_rate_per_s=12.0,
                          intraday_shape=shape,
                          venue_weights=default_venue_weights(info.listing),
                          price0=tl.price_from_decimal("75.00"),
                          cluster_prob=0.0)
    for i, info in enumerate(infos))
config = SimConfig(seed=404, symbols=profiles,
                   directory=tl.SymbolDirectory(infos),
                   latency=LatencyModel.default_profile(),
                   session_window=(0, 1200 * 1_000_000))

events = generate_events(config)
result = consolidate(events, config.latency, config.seed, config.directory)

import numpy as np

combined = tl.Tape(np.concatenate([t.data for t in result.tapes.values()]))
by_sip = latency_stats(combined, group_by="sip",
                       directory=config.directory)
print("trade-report latency by SIP (microseconds):")
print(f"{'sip':>4} {'count':>8} {'median':>8} {'mean':>8} {'std':>8} "
      f"{'q1':>7} {'q3':>7} {'outliers':>8}")
for s in by_sip.stats:
    print(f"{tl.SipId(s.sip_id).name:>4} {s.count:>8} {s.median_us:>8.0f} "
          f"{s.mean_us:>8.0f} {s.std_us:>8.0f} {s.q1_us:>7.0f} "
          f"{s.q3_us:>7.0f} {s.outlier_count:>8}")

by_exchange = latency_stats(combined, group_by="exchange")
by_exchange.to_csv(OUT / "latency_by_exchange.csv")
print("\ntrade-report latency by exchange:")
medians = {}
for s in sorted(by_exchange.stats, key=lambda s: -s.median_us):
    abbrev = tl.DEFAULT_EXCHANGES[s.exchange_id].abbreviation
    medians[abbrev] = s.median_us
    bar = "#" * max(1, int(s.median_us / 60))
    print(f"  {abbrev:4s} median {s.median_us:6.0f}  {bar}")

others = [m for a, m in medians.items() if a not in ("CHX",)]
print(f"\nCHX median is {medians['CHX'] / (sum(others) / len(others)):.1f}x "
      "the rest of the market")
print(f"CSV output in {OUT}/")
