from __future__ import annotations

import numpy as np
import pytest

from tapelab import (
    Listing,
    MsgKind,
    QUOTING_EXCHANGE_IDS,
    SymbolDirectory,
    SymbolInfo,
    Tape,
    price_from_decimal,
)
from tapelab.sim import (
    IntradayShape,
    LatencyModel,
    SimConfig,
    SymbolActivityProfile,
    default_venue_weights,
)
from tapelab.tape import RECORD_DTYPE


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {outcome}", flush=True)


def make_directory(n=1, listing=Listing.NASDAQ):
    listings = [Listing.NASDAQ, Listing.NYSE,
                Listing.NYSE_ARCA_MKT_BATS_REGIONAL]
    infos = []
    for i in range(n):
        lst = listing if n == 1 else listings[i % 3]
        infos.append(SymbolInfo(i, f"SYM{i}", lst))
    return SymbolDirectory(infos)


def small_config(seed=42, rate=10.0, duration_s=1000, n_symbols=1,
                 latency=None, cluster_prob=None, trf_fraction=0.15):
    directory = make_directory(n_symbols)
    shape = IntradayShape(((0, duration_s, 1.0),))
    profiles = tuple(
        SymbolActivityProfile(
            symbol_id=i,
            trade_rate_per_s=rate,
            intraday_shape=shape,
            venue_weights=default_venue_weights(directory.by_id(i).listing),
            price0=price_from_decimal("116.00"),
            cluster_prob=cluster_prob,
            trf_fraction=trf_fraction,
        )
        for i in range(n_symbols))
    return SimConfig(
        seed=seed, symbols=profiles, directory=directory,
        latency=latency or LatencyModel.default_profile(),
        session_window=(0, duration_s * 1_000_000))


def build_tape(rows) -> Tape:
    """rows: (symbol_id, kind, exchange_id, price, size, ets, sts, seq)."""
    data = np.zeros(len(rows), dtype=RECORD_DTYPE)
    for i, (sym, kind, ex, px, sz, ets, sts, seq) in enumerate(rows):
        data[i] = (sym, int(kind), ex, 0, px, sz, 0, ets, sts, seq)
    return Tape(data)


def random_quote_tape(rng, n, n_venues=5, symbol_id=0) -> Tape:
    """A structurally valid single-symbol, single-SIP quote tape with
    occasional size-0 clears and scrambled exchange timestamps."""
    venues = rng.choice(np.array(QUOTING_EXCHANGE_IDS), size=n)
    venues = venues if n_venues >= len(QUOTING_EXCHANGE_IDS) else (
        np.asarray(QUOTING_EXCHANGE_IDS)[:n_venues][
            rng.integers(0, n_venues, n)])
    kinds = rng.choice([int(MsgKind.BID_QUOTE), int(MsgKind.ASK_QUOTE)], n)
    prices = 1_000_000 + rng.integers(-500, 500, n) * 100
    sizes = np.where(rng.random(n) < 0.05, 0, rng.integers(1, 50, n) * 100)
    sip_ts = np.sort(rng.integers(0, 10_000_000, n))
    lat = rng.integers(0, 5_000, n)
    exchange_ts = np.maximum(sip_ts - lat, 0)
    data = np.zeros(n, dtype=RECORD_DTYPE)
    data["symbol_id"] = symbol_id
    data["msg_kind"] = kinds
    data["exchange_id"] = venues
    data["price"] = prices
    data["size"] = sizes
    data["exchange_ts"] = exchange_ts
    data["sip_ts"] = sip_ts
    data["sip_seq"] = np.arange(1, n + 1)
    return Tape(data)


@pytest.fixture(scope="session")
def small_run():
    """One simulated symbol with consolidation, reused across read-only
    tests."""
    from tapelab.sim import consolidate, generate_events

    config = small_config()
    events = generate_events(config)
    result = consolidate(events, config.latency, config.seed,
                         config.directory)
    return config, events, result
