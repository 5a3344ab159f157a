"""Core domain model: prices, timestamps, venues, symbols, and tape messages.

Prices are integer ticks of 1/10,000 dollar (sub-penny capable, exact
arithmetic). Timestamps are integer microseconds since the 04:00 session
open. Everything here is an immutable value type shared by the simulator,
the tape I/O layer, and the analytics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum

TICKS_PER_DOLLAR = 10_000
CENT_TICKS = 100

# Session clock: 04:00 .. 20:00 local, microsecond resolution.
SESSION_START_US = 0
SESSION_END_US = 16 * 3600 * 1_000_000  # 57,600,000,000
REGULAR_OPEN_S = 19_800   # 09:30
REGULAR_CLOSE_S = 43_200  # 16:00

# Largest representable quote/print: $500,000.0000
MAX_PRICE_TICKS = 500_000 * TICKS_PER_DOLLAR
MIN_PRICE_TICKS = 1


class MsgKind(IntEnum):
    TRADE = 0
    BID_QUOTE = 1
    ASK_QUOTE = 2


class SipId(IntEnum):
    A = 0
    B = 1
    C = 2


class Family(IntEnum):
    BATS = 0
    CHICAGO = 1
    NASDAQ = 2
    NYSE = 3
    TRF = 4


class Datacenter(IntEnum):
    SECAUCUS = 0
    CARTERET = 1
    MAHWAH = 2


class Listing(IntEnum):
    """Listing group of a symbol; determines which SIP consolidates it."""

    NYSE = 0
    NYSE_ARCA_MKT_BATS_REGIONAL = 1
    NASDAQ = 2


def route_to_sip(listing: Listing) -> SipId:
    """Map a listing group to the SIP that consolidates it.

    NYSE listings go to SIP A, ARCA/MKT/BATS/regional listings to SIP B,
    NASDAQ listings to SIP C. Total over the Listing enum.
    """
    return _LISTING_TO_SIP[Listing(listing)]


_LISTING_TO_SIP = {
    Listing.NYSE: SipId.A,
    Listing.NYSE_ARCA_MKT_BATS_REGIONAL: SipId.B,
    Listing.NASDAQ: SipId.C,
}


class PriceError(ValueError):
    """Base class for price parse failures."""


class PriceFormatError(PriceError):
    """Input is not a plain decimal number."""


class PricePrecisionError(PriceError):
    """More than 4 fractional digits (finer than one tick)."""


class PriceRangeError(PriceError):
    """Outside the representable [$0.0001, $500,000] range."""


_PRICE_RE = re.compile(r"^(-?)(\d+)(?:\.(\d+))?$")


def price_from_decimal(text: str) -> int:
    """Parse a decimal price string into integer ticks (1/10,000 dollar).

    Exact: "116.00" -> 1_160_000, "0.0001" -> 1. Raises PriceFormatError
    for non-decimal input, PricePrecisionError beyond 4 fractional digits,
    PriceRangeError outside the representable range.
    """
    m = _PRICE_RE.match(text.strip())
    if m is None:
        raise PriceFormatError(f"not a decimal price: {text!r}")
    sign, whole, frac = m.groups()
    frac = frac or ""
    if len(frac) > 4:
        raise PricePrecisionError(f"more than 4 fractional digits: {text!r}")
    ticks = int(whole) * TICKS_PER_DOLLAR + int(frac.ljust(4, "0"))
    if sign == "-":
        ticks = -ticks
    if not MIN_PRICE_TICKS <= ticks <= MAX_PRICE_TICKS:
        raise PriceRangeError(f"price out of range: {text!r}")
    return ticks


def price_to_decimal(ticks: int) -> str:
    """Render ticks as a canonical 4-decimal string ("116.0000")."""
    sign = "-" if ticks < 0 else ""
    whole, frac = divmod(abs(int(ticks)), TICKS_PER_DOLLAR)
    return f"{sign}{whole}.{frac:04d}"


@dataclass(frozen=True)
class ExchangeInfo:
    id: int
    name: str
    abbreviation: str
    family: Family
    datacenter: Datacenter
    quotes_allowed: bool = True


# The 13 reporting venues of the simulated market system. Index == id.
DEFAULT_EXCHANGES: tuple[ExchangeInfo, ...] = (
    ExchangeInfo(0, "BATS", "BATS", Family.BATS, Datacenter.SECAUCUS),
    ExchangeInfo(1, "BATS-Y", "BATY", Family.BATS, Datacenter.SECAUCUS),
    ExchangeInfo(2, "Direct Edge A", "EDGA", Family.BATS, Datacenter.SECAUCUS),
    ExchangeInfo(3, "Direct Edge X", "EDGX", Family.BATS, Datacenter.SECAUCUS),
    ExchangeInfo(4, "Chicago Stock Exchange", "CHX", Family.CHICAGO, Datacenter.SECAUCUS),
    ExchangeInfo(5, "NASDAQ", "NASD", Family.NASDAQ, Datacenter.CARTERET),
    ExchangeInfo(6, "NASDAQ-Boston", "NQBS", Family.NASDAQ, Datacenter.CARTERET),
    ExchangeInfo(7, "NASDAQ-Philadelphia", "NQPH", Family.NASDAQ, Datacenter.CARTERET),
    ExchangeInfo(8, "New York Stock Exchange", "NYSE", Family.NYSE, Datacenter.MAHWAH),
    ExchangeInfo(9, "NYSE ARCA", "ARCA", Family.NYSE, Datacenter.MAHWAH),
    ExchangeInfo(10, "NYSE MKT", "AMEX", Family.NYSE, Datacenter.MAHWAH),
    ExchangeInfo(11, "NYSE Trade Reporting Facility", "NTRF", Family.TRF, Datacenter.MAHWAH, False),
    ExchangeInfo(12, "NASDAQ Trade Reporting Facility", "QTRF", Family.TRF, Datacenter.CARTERET, False),
)

EXCHANGE_BY_ABBREV = {e.abbreviation: e for e in DEFAULT_EXCHANGES}
QUOTING_EXCHANGE_IDS = tuple(e.id for e in DEFAULT_EXCHANGES if e.quotes_allowed)
TRF_EXCHANGE_IDS = tuple(e.id for e in DEFAULT_EXCHANGES if not e.quotes_allowed)
NTRF_ID = EXCHANGE_BY_ABBREV["NTRF"].id
QTRF_ID = EXCHANGE_BY_ABBREV["QTRF"].id


def trf_for_listing(listing: Listing) -> int:
    """Exchange id of the trade reporting facility that consolidates a
    listing's off-exchange prints: QTRF for NASDAQ listings, NTRF for the
    CTA tapes (NYSE and ARCA/MKT/BATS/regional)."""
    return QTRF_ID if Listing(listing) == Listing.NASDAQ else NTRF_ID


@dataclass(frozen=True)
class SymbolInfo:
    id: int
    ticker: str
    listing: Listing
    penny_flag: bool = False

    @property
    def sip(self) -> SipId:
        return route_to_sip(self.listing)


class SymbolDirectory:
    """Immutable ticker <-> id lookup built from SymbolInfo rows.

    Symbol ids must be dense (0..n-1); tickers unique.
    """

    def __init__(self, symbols: list[SymbolInfo] | tuple[SymbolInfo, ...]):
        symbols = sorted(symbols, key=lambda s: s.id)
        if [s.id for s in symbols] != list(range(len(symbols))):
            raise ValueError("symbol ids must be dense 0..n-1")
        self._by_id = tuple(symbols)
        self._by_ticker = {s.ticker: s for s in symbols}
        if len(self._by_ticker) != len(symbols):
            raise ValueError("duplicate tickers in symbol directory")

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolDirectory) and self._by_id == other._by_id

    def by_id(self, symbol_id: int) -> SymbolInfo:
        return self._by_id[symbol_id]

    def by_ticker(self, ticker: str) -> SymbolInfo:
        try:
            return self._by_ticker[ticker]
        except KeyError:
            raise KeyError(f"unknown ticker: {ticker}") from None

    def ticker_of(self, symbol_id: int) -> str:
        return self._by_id[symbol_id].ticker

    def sip_of(self, symbol_id: int) -> SipId:
        return self._by_id[symbol_id].sip


@dataclass(frozen=True)
class TapeRecord:
    """One trade or quote message with both of its clock readings.

    exchange_ts is the send time at the reporting venue; sip_ts the time
    the consolidator printed it; sip_seq its position in that
    consolidator's output stream.
    """

    symbol_id: int
    msg_kind: MsgKind
    exchange_id: int
    price: int
    size: int
    exchange_ts: int
    sip_ts: int
    sip_seq: int

    @property
    def latency_us(self) -> int:
        return self.sip_ts - self.exchange_ts

    @property
    def is_trade(self) -> bool:
        return self.msg_kind == MsgKind.TRADE
