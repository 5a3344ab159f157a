"""Consolidated best bid/offer engine.

Maintains per-venue top-of-book state from a quote stream, computes the
market-wide best bid/offer, and classifies the market as normal, locked
(spread zero), or crossed (negative spread). A tape can be replayed in
consolidator order (sip_ts) or in venue send order (exchange_ts), which
is what makes latency-induced phantom crosses observable.

Two implementations ship on purpose: a scalar book (`TopOfBook`,
`apply_quote`, `compute_nbbo`) that rescans every venue per event, and a
columnar `stream_nbbo` that forward-fills venue quotes with numpy. Tests
hold them equal record-for-record.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from .tape import Tape
from .types import DEFAULT_EXCHANGES, MsgKind, TapeRecord, price_to_decimal


class MarketState(IntEnum):
    EMPTY = 0
    ONE_SIDED = 1
    NORMAL = 2
    LOCKED = 3
    CROSSED = 4


class Ordering(IntEnum):
    """Replay order for a tape: as the consolidator printed it, or as the
    venues sent it."""

    SIP = 0
    EXCHANGE = 1


class QuoteSourceError(ValueError):
    """Quote attributed to a venue that only reports trades."""


class MixedSymbolError(ValueError):
    pass


@dataclass(frozen=True)
class NbboRecord:
    ts: int
    bid_price: Optional[int]
    bid_size: int
    bid_venue: Optional[int]
    ask_price: Optional[int]
    ask_size: int
    ask_venue: Optional[int]
    spread: Optional[int]
    state: MarketState


def classify(bid_price: Optional[int], ask_price: Optional[int]) -> MarketState:
    if bid_price is None and ask_price is None:
        return MarketState.EMPTY
    if bid_price is None or ask_price is None:
        return MarketState.ONE_SIDED
    spread = ask_price - bid_price
    if spread > 0:
        return MarketState.NORMAL
    if spread == 0:
        return MarketState.LOCKED
    return MarketState.CROSSED


class TopOfBook:
    """Mutable per-venue best bid/ask, keyed by exchange id.

    Venues that only report trades are rejected as quote sources.
    """

    def __init__(self, registry=DEFAULT_EXCHANGES):
        self._quotes_allowed = tuple(e.quotes_allowed for e in registry)
        self.bids: dict[int, tuple[int, int]] = {}
        self.asks: dict[int, tuple[int, int]] = {}

    def venue_spread(self, exchange_id: int) -> Optional[int]:
        bid = self.bids.get(exchange_id)
        ask = self.asks.get(exchange_id)
        if bid is None or ask is None:
            return None
        return ask[0] - bid[0]


def apply_quote(state: TopOfBook, record: TapeRecord) -> TopOfBook:
    """Replace one venue side with the quoted (price, size); size 0 clears.

    Returns the same state object for chaining.
    """
    kind = MsgKind(record.msg_kind)
    if kind == MsgKind.TRADE:
        raise ValueError("apply_quote expects a quote record")
    if not state._quotes_allowed[record.exchange_id]:
        raise QuoteSourceError(
            f"exchange {record.exchange_id} is a trade reporting facility "
            "and publishes no quotes")
    side = state.bids if kind == MsgKind.BID_QUOTE else state.asks
    if record.size == 0:
        side.pop(record.exchange_id, None)
    else:
        side[record.exchange_id] = (record.price, record.size)
    return state


def compute_nbbo(state: TopOfBook, ts: int) -> NbboRecord:
    """Best bid/offer across all venues by full scan.

    Aggregate size sums every venue quoting exactly the best price; ties
    on price surface the lowest exchange id as the setter.
    """
    bid_price = bid_venue = None
    bid_size = 0
    for venue in sorted(state.bids):
        px, sz = state.bids[venue]
        if bid_price is None or px > bid_price:
            bid_price, bid_size, bid_venue = px, sz, venue
        elif px == bid_price:
            bid_size += sz
    ask_price = ask_venue = None
    ask_size = 0
    for venue in sorted(state.asks):
        px, sz = state.asks[venue]
        if ask_price is None or px < ask_price:
            ask_price, ask_size, ask_venue = px, sz, venue
        elif px == ask_price:
            ask_size += sz
    spread = None
    if bid_price is not None and ask_price is not None:
        spread = ask_price - bid_price
    return NbboRecord(ts, bid_price, bid_size, bid_venue,
                      ask_price, ask_size, ask_venue, spread,
                      classify(bid_price, ask_price))


NBBO_CSV_COLUMNS = ["ts_us", "bid", "bid_size", "ask", "ask_size", "spread",
                    "state"]

_PX_ABSENT = np.iinfo(np.int64).min
_VENUE_ABSENT = 255


class NbboSeries:
    """Columnar sequence of NbboRecords (one per applied quote)."""

    def __init__(self, ts, bid_px, bid_sz, bid_venue, ask_px, ask_sz,
                 ask_venue):
        self.ts = ts
        self.bid_px = bid_px
        self.bid_sz = bid_sz
        self.bid_venue = bid_venue
        self.ask_px = ask_px
        self.ask_sz = ask_sz
        self.ask_venue = ask_venue
        two_sided = (bid_px != _PX_ABSENT) & (ask_px != _PX_ABSENT)
        self.spread = np.where(two_sided, ask_px - bid_px, 0)
        self.has_spread = two_sided
        state = np.full(len(ts), int(MarketState.EMPTY), dtype=np.uint8)
        one = (bid_px != _PX_ABSENT) ^ (ask_px != _PX_ABSENT)
        state[one] = int(MarketState.ONE_SIDED)
        state[two_sided & (self.spread > 0)] = int(MarketState.NORMAL)
        state[two_sided & (self.spread == 0)] = int(MarketState.LOCKED)
        state[two_sided & (self.spread < 0)] = int(MarketState.CROSSED)
        self.state = state

    def __len__(self) -> int:
        return len(self.ts)

    def __getitem__(self, i: int) -> NbboRecord:
        i = int(i)
        bid_present = self.bid_px[i] != _PX_ABSENT
        ask_present = self.ask_px[i] != _PX_ABSENT
        return NbboRecord(
            ts=int(self.ts[i]),
            bid_price=int(self.bid_px[i]) if bid_present else None,
            bid_size=int(self.bid_sz[i]) if bid_present else 0,
            bid_venue=int(self.bid_venue[i]) if bid_present else None,
            ask_price=int(self.ask_px[i]) if ask_present else None,
            ask_size=int(self.ask_sz[i]) if ask_present else 0,
            ask_venue=int(self.ask_venue[i]) if ask_present else None,
            spread=(int(self.spread[i])
                    if bid_present and ask_present else None),
            state=MarketState(int(self.state[i])),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(NBBO_CSV_COLUMNS)
            for i in range(len(self)):
                r = self[i]
                w.writerow([
                    r.ts,
                    price_to_decimal(r.bid_price) if r.bid_price is not None else "",
                    r.bid_size,
                    price_to_decimal(r.ask_price) if r.ask_price is not None else "",
                    r.ask_size,
                    price_to_decimal(r.spread) if r.spread is not None else "",
                    r.state.name,
                ])


def order_indices(tape: Tape, ordering: Ordering) -> np.ndarray:
    """Permutation that sorts a tape by the requested replay order.

    SIP order sorts on (sip_ts, sip_seq); exchange order on
    (exchange_ts, exchange_id, sip_seq).
    """
    if ordering == Ordering.SIP:
        return np.lexsort((tape.sip_seq, tape.sip_ts))
    return np.lexsort((tape.sip_seq, tape.exchange_id.astype(np.int64),
                       tape.exchange_ts))


def stream_nbbo(tape: Tape, ordering: Ordering = Ordering.SIP) -> NbboSeries:
    """Replay a one-symbol tape's quotes and emit the NBBO after each.

    Trades in the input are ignored. Each emitted record is timestamped
    with the ordering key of the quote that produced it (sip_ts under SIP
    order, exchange_ts under exchange order).
    """
    symbols = np.unique(tape.symbol_id)
    if len(symbols) > 1:
        raise MixedSymbolError(
            f"stream_nbbo needs a single-symbol tape, got {len(symbols)}")
    quotes = tape.quotes()
    no_quotes = np.array([not e.quotes_allowed for e in DEFAULT_EXCHANGES])
    if len(quotes) and np.any(no_quotes[quotes.exchange_id]):
        raise QuoteSourceError("tape contains quotes from a trade reporting "
                               "facility")
    order = order_indices(quotes, ordering)
    evt = quotes.data[order]
    n = len(evt)
    ts = (evt["sip_ts"] if ordering == Ordering.SIP
          else evt["exchange_ts"]).astype(np.int64)
    venue = evt["exchange_id"]
    kind = evt["msg_kind"]
    price = evt["price"].astype(np.int64)
    size = evt["size"].astype(np.int64)

    def venue_columns(side_mask):
        # Forward-filled (price, size) column per venue; built on demand so
        # only one venue's column is live at a time.
        for v in np.unique(venue[side_mask]):
            upd = side_mask & (venue == v)
            vals_px = price[upd]
            vals_sz = size[upd]
            idx = np.cumsum(upd) - 1
            have = idx >= 0
            col_px = np.zeros(n, dtype=np.int64)
            col_px[have] = vals_px[idx[have]]
            col_sz = np.zeros(n, dtype=np.int64)
            col_sz[have] = vals_sz[idx[have]]
            yield int(v), col_px, col_sz > 0, col_sz

    out = {}
    int64_max = np.iinfo(np.int64).max
    for side_kind, is_bid in ((MsgKind.BID_QUOTE, True),
                              (MsgKind.ASK_QUOTE, False)):
        side_mask = kind == int(side_kind)
        absent = _PX_ABSENT if is_bid else int64_max
        # Pass 1: best price as a running elementwise extreme over the
        # forward-filled per-venue columns.
        best = np.full(n, absent, dtype=np.int64)
        for v, col_px, present, col_sz in venue_columns(side_mask):
            masked = np.where(present, col_px, absent)
            if is_bid:
                np.maximum(best, masked, out=best)
            else:
                np.minimum(best, masked, out=best)
        # Pass 2: aggregate size at the best price; lowest venue id sets it.
        agg = np.zeros(n, dtype=np.int64)
        setter = np.full(n, _VENUE_ABSENT, dtype=np.uint8)
        have_best = best != absent
        for v, col_px, present, col_sz in venue_columns(side_mask):
            at_best = present & have_best & (col_px == best)
            agg[at_best] += col_sz[at_best]
            setter[at_best & (setter == _VENUE_ABSENT)] = v
        if not is_bid:
            best = np.where(have_best, best, _PX_ABSENT)
        out[is_bid] = (best, agg, setter)

    bid_px, bid_sz, bid_venue = out[True]
    ask_px, ask_sz, ask_venue = out[False]
    return NbboSeries(ts, bid_px, bid_sz, bid_venue, ask_px, ask_sz, ask_venue)


@dataclass(frozen=True)
class StateCounts:
    crosses: int
    locks: int
    time_in_state: dict


def count_states(series) -> StateCounts:
    """Count entries into Crossed/Locked and time spent per state.

    An entry is a transition from a different state; consecutive records
    in the same state are one event. Durations run from a record to the
    next state change, with the final segment closing at the last record.
    """
    if isinstance(series, NbboSeries):
        states = series.state.astype(np.int64)
        ts = series.ts
    else:
        records = list(series)
        states = np.array([int(r.state) for r in records], dtype=np.int64)
        ts = np.array([r.ts for r in records], dtype=np.int64)
    time_in = {s: 0 for s in MarketState}
    if len(states) == 0:
        return StateCounts(0, 0, time_in)
    changed = np.empty(len(states), dtype=bool)
    changed[0] = True
    np.not_equal(states[1:], states[:-1], out=changed[1:])
    entry_idx = np.flatnonzero(changed)
    entry_states = states[entry_idx]
    crosses = int(np.sum(entry_states == int(MarketState.CROSSED)))
    locks = int(np.sum(entry_states == int(MarketState.LOCKED)))
    seg_start = ts[entry_idx]
    seg_end = np.append(seg_start[1:], ts[-1])
    durations = seg_end - seg_start
    for s in MarketState:
        time_in[s] = int(np.sum(durations[entry_states == int(s)]))
    return StateCounts(crosses, locks, time_in)
