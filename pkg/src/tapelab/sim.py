"""Deterministic market-activity generator and feed consolidator.

The generator produces, per symbol, an exchange-time-ordered ground truth
stream: trades drawn from an inhomogeneous Poisson process (with
rate-dependent microburst clustering, the sweep behaviour that makes
consolidation reordering visible at all), preceded by bursts of two-sided
quote updates that keep every venue's own book sane. The consolidator
routes each message to its listing's SIP, samples a lognormal link delay,
applies per-link FIFO queueing, and sequences each SIP's tape.

Determinism contract: identical config (including seed) gives
byte-identical tapes. Every random draw comes from a PCG64 stream keyed
by (namespace, symbol or link, purpose), so host parallelism or symbol
order cannot perturb results.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .tape import RECORD_DTYPE, Tape
from .types import (
    DEFAULT_EXCHANGES,
    EXCHANGE_BY_ABBREV,
    MAX_PRICE_TICKS,
    SESSION_END_US,
    Listing,
    MsgKind,
    SipId,
    SymbolDirectory,
    SymbolInfo,
    price_from_decimal,
    price_to_decimal,
    trf_for_listing,
)


class ConfigError(ValueError):
    """Scenario configuration is structurally invalid."""


class UnknownPresetError(KeyError):
    pass


# RNG stream namespaces / purposes (spawn keys off the master seed).
_NS_GEN = 1
_NS_LINK = 2
_P_TIMES = 0
_P_CLUSTER = 1
_P_VENUE = 2
_P_STEP = 3
_P_SIZE = 4
_P_QCOUNT = 5
_P_QOFFSET = 6
_P_QVENUE = 7
_P_QHALF = 8
_P_NOISE = 9
_P_TRF = 10
_P_QSIZE = 11

# Microstructure constants (modeling choices, not contract).
CLUSTER_GAP_MEAN_US = 25.0     # in-sweep inter-trade spacing
QUOTE_OFFSET_MEAN_US = 110.0   # jostle re-quote delay after a trade
WAVE_PHASE_SPAN_US = 20        # re-quote wave: jitter within each phase
WAVE_PHASE_GAP_US = 50         # re-quote wave: chasing side starts here
OPENING_LEAD_US = 5_000        # opening quote round this long before trade 1
_STEP_MAGNITUDES = np.array([0, 1, 2, 3, 4, 5])
_STEP_PROBS = np.array([0.63, 0.24, 0.06, 0.04, 0.02, 0.01])
_HALF_SPREAD_CHOICES = np.array([1, 2])
_HALF_SPREAD_PROBS = np.array([0.7, 0.3])
_NOISE_CHOICES = np.arange(-5, 6)
_NOISE_PROBS = np.full(11, 1.0 / 11.0)
_CLUSTER_RATE_SCALE = 1.0      # cluster_prob default = rate / (rate + this)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))


@dataclass(frozen=True)
class LinkLatency:
    """Lognormal delay descriptor for one venue->SIP link (microseconds)."""

    median_us: float
    sigma: float
    floor_us: int = 0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.median_us <= 0:
            d = np.zeros(n, dtype=np.int64)
        else:
            d = np.rint(rng.lognormal(math.log(self.median_us), self.sigma,
                                      n)).astype(np.int64)
        return np.maximum(d, self.floor_us)


@dataclass(frozen=True)
class LatencyModel:
    """Per-link delay model: a default plus (venue, SIP) overrides.

    The stock profile gives every link a 450 us median with sigma 0.25,
    makes CHX a 5x outlier, and fattens the QTRF tail.
    """

    default: LinkLatency = LinkLatency(450.0, 0.25)
    overrides: tuple = ()  # ((exchange_id | None, SipId | None, LinkLatency), ...)

    def link(self, exchange_id: int, sip: SipId) -> LinkLatency:
        out = self.default
        for ex, s, ll in self.overrides:
            if (ex is None or ex == exchange_id) and (s is None or s == sip):
                out = ll
        return out

    @classmethod
    def default_profile(cls) -> "LatencyModel":
        chx = EXCHANGE_BY_ABBREV["CHX"].id
        qtrf = EXCHANGE_BY_ABBREV["QTRF"].id
        return cls(
            default=LinkLatency(450.0, 0.25),
            overrides=(
                (chx, None, LinkLatency(2_250.0, 0.25)),
                (qtrf, None, LinkLatency(450.0, 0.75)),
            ),
        )

    @classmethod
    def zero(cls) -> "LatencyModel":
        return cls(default=LinkLatency(0.0, 0.0), overrides=())

    @classmethod
    def constant(cls, us: float) -> "LatencyModel":
        return cls(default=LinkLatency(us, 0.0), overrides=())

    def scaled(self, median_mult: float) -> "LatencyModel":
        return LatencyModel(
            default=replace(self.default,
                            median_us=self.default.median_us * median_mult),
            overrides=tuple(
                (ex, s, replace(ll, median_us=ll.median_us * median_mult))
                for ex, s, ll in self.overrides),
        )


@dataclass(frozen=True)
class IntradayShape:
    """Piecewise-constant intensity multiplier over the session (seconds)."""

    segments: tuple  # ((start_s, end_s, multiplier), ...)

    def __post_init__(self):
        prev_end = None
        for start, end, mult in self.segments:
            if end <= start or mult < 0:
                raise ConfigError(f"bad shape segment {(start, end, mult)}")
            if prev_end is not None and start != prev_end:
                raise ConfigError("shape segments must tile contiguously")
            prev_end = end

    @property
    def max_multiplier(self) -> float:
        return max(m for _, _, m in self.segments)

    @property
    def integral_seconds(self) -> float:
        return sum((e - s) * m for s, e, m in self.segments)

    def multiplier_at(self, t_us: np.ndarray) -> np.ndarray:
        starts = np.array([s for s, _, _ in self.segments], dtype=np.int64)
        mults = np.array([m for _, _, m in self.segments])
        idx = np.searchsorted(starts * 1_000_000, t_us, side="right") - 1
        idx = np.clip(idx, 0, len(mults) - 1)
        return mults[idx]


# Pre/open/midday/close/after-hours multipliers for a routine session.
TYPICAL_SHAPE = IntradayShape((
    (0, 19_800, 0.1),
    (19_800, 21_600, 3.0),
    (21_600, 41_400, 1.0),
    (41_400, 43_200, 2.5),
    (43_200, 57_600, 0.05),
))

STRESS_OPEN_SHAPE = IntradayShape((
    (0, 19_800, 0.1),
    (19_800, 21_600, 30.0),
    (21_600, 41_400, 1.0),
    (41_400, 43_200, 2.5),
    (43_200, 57_600, 0.05),
))


@dataclass(frozen=True)
class SymbolActivityProfile:
    """Per-symbol generator knobs.

    venue_weights maps quoting exchange ids to trade/quote share and must
    sum to 1. cluster_prob is the chance a trade is drawn into a
    microburst right behind its predecessor; None derives it from the
    base rate (busier books sweep more venues at once).
    """

    symbol_id: int
    trade_rate_per_s: float
    intraday_shape: IntradayShape
    venue_weights: dict
    price0: int
    quote_trade_ratio: float = 10.0
    walk_step_ticks: int = 100
    size_lot_shares: int = 100
    size_geom_p: float = 0.5
    trf_fraction: float = 0.15
    cluster_prob: float | None = None
    walk_band_ticks: int | None = None

    def __post_init__(self):
        if self.trade_rate_per_s < 0:
            raise ConfigError("trade_rate_per_s must be >= 0")
        if self.quote_trade_ratio <= 0:
            raise ConfigError("quote_trade_ratio must be positive")
        total = sum(self.venue_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"venue_weights sum to {total}, expected 1")
        for ex_id in self.venue_weights:
            if not DEFAULT_EXCHANGES[ex_id].quotes_allowed:
                raise ConfigError("venue_weights may only name quoting venues")
        if self.price0 < 1 or self.price0 > MAX_PRICE_TICKS:
            raise ConfigError("price0 out of range")
        if self.walk_step_ticks < 1:
            raise ConfigError("walk_step_ticks must be >= 1")
        if not 0 <= self.trf_fraction <= 1:
            raise ConfigError("trf_fraction must be in [0, 1]")

    @property
    def effective_cluster_prob(self) -> float:
        if self.cluster_prob is not None:
            return self.cluster_prob
        return self.trade_rate_per_s / (self.trade_rate_per_s
                                        + _CLUSTER_RATE_SCALE)

    @property
    def effective_band_ticks(self) -> int:
        if self.walk_band_ticks is not None:
            return self.walk_band_ticks
        return max(20 * self.walk_step_ticks, self.price0 // 20)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    symbols: tuple
    directory: SymbolDirectory
    latency: LatencyModel
    session_window: tuple = (0, SESSION_END_US)
    scenario_name: str = ""

    def __post_init__(self):
        if not self.symbols:
            raise ConfigError("symbols: at least one symbol profile required")
        start, end = self.session_window
        if end <= start:
            raise ConfigError("session_window: zero-length session")
        if not 0 <= start < end <= SESSION_END_US:
            raise ConfigError("session_window outside the trading session")
        ids = sorted(p.symbol_id for p in self.symbols)
        if ids != list(range(len(self.symbols))):
            raise ConfigError("symbol profiles must cover ids 0..n-1")
        if len(self.directory) != len(self.symbols):
            raise ConfigError("directory and symbol profiles disagree")


def _profile_rng(config: SimConfig, symbol_id: int, purpose: int):
    return _rng(config.seed, _NS_GEN, symbol_id, purpose)


def _reflect(positions: np.ndarray, lo: int, hi: int) -> np.ndarray:
    # Fold an unconstrained walk into [lo, hi] (reflecting boundaries).
    if hi <= lo:
        return np.full_like(positions, lo)
    width = hi - lo
    folded = np.mod(positions - lo, 2 * width)
    return lo + np.minimum(folded, 2 * width - folded)


def _strictly_spaced(times: np.ndarray, spacing: int) -> np.ndarray:
    # Minimal monotone repair: each element at least `spacing` after the
    # previous, moving values only forward.
    if len(times) == 0:
        return times
    k = np.arange(len(times), dtype=np.int64) * spacing
    return np.maximum.accumulate(times - k) + k


def _generate_symbol(config: SimConfig, profile: SymbolActivityProfile):
    """Build one symbol's trades and quotes; returns a structured array in
    emission order (not yet time-sorted).

    Quote model: whenever a trade moves the consensus mid, every active
    venue re-quotes around the new mid in a two-phase wave (the retreating
    side first), so books stay coherent in venue time and phantom crosses
    are a consolidation artifact rather than a property of the market.
    Between moves, venues jostle their half-spreads at a rate that keeps
    total quote traffic near quote_trade_ratio.
    """
    start_us, end_us = config.session_window
    duration_s = (end_us - start_us) / 1e6
    shape = profile.intraday_shape
    rate_max = profile.trade_rate_per_s * shape.max_multiplier
    listing = config.directory.by_id(profile.symbol_id).listing

    if rate_max <= 0:
        return np.empty(0, dtype=RECORD_DTYPE)

    # Trade times: homogeneous Poisson at the peak rate, thinned by the
    # intraday shape.
    rng_t = _profile_rng(config, profile.symbol_id, _P_TIMES)
    n0 = rng_t.poisson(rate_max * duration_s)
    t0 = np.sort(rng_t.uniform(start_us, end_us, n0))
    keep = rng_t.random(n0) < (shape.multiplier_at(t0) / shape.max_multiplier)
    t = t0[keep]
    n = len(t)
    if n == 0:
        return np.empty(0, dtype=RECORD_DTYPE)

    # Microburst clustering: with probability c a trade is pulled to within
    # tens of microseconds of its predecessor (multi-venue sweep), leaving
    # the Poisson count untouched.
    c = profile.effective_cluster_prob
    if c > 0 and n > 1:
        rng_c = _profile_rng(config, profile.symbol_id, _P_CLUSTER)
        flags = rng_c.random(n) < c
        flags[0] = False
        gaps = np.where(flags, rng_c.exponential(CLUSTER_GAP_MEAN_US, n), 0.0)
        anchor = np.maximum.accumulate(
            np.where(~flags, np.arange(n), -1))
        cg = np.cumsum(gaps)
        t = t[anchor] + (cg - cg[anchor])
    t = np.floor(t).astype(np.int64)
    t = _strictly_spaced(np.maximum.accumulate(t), 1)
    # Session-end clamp that keeps times strictly increasing: trade i may
    # sit no later than end - 2 - (trades after it).
    t = np.minimum(t, (end_us - 2) - np.arange(n - 1, -1, -1,
                                               dtype=np.int64))

    # Venues: iid by weight; a slice of prints reports through the
    # listing's TRF instead of a lit venue.
    venues = np.array(sorted(v for v, w in profile.venue_weights.items()
                             if w > 0), dtype=np.int64)
    weights = np.array([profile.venue_weights[v] for v in venues])
    weights = weights / weights.sum()
    rng_v = _profile_rng(config, profile.symbol_id, _P_VENUE)
    trade_venue = rng_v.choice(venues, size=n, p=weights)
    rng_trf = _profile_rng(config, profile.symbol_id, _P_TRF)
    is_trf = rng_trf.random(n) < profile.trf_fraction
    trade_venue[is_trf] = trf_for_listing(listing)

    # Consensus mid path: bounded reflecting walk stepping at trades.
    g = profile.walk_step_ticks
    rng_s = _profile_rng(config, profile.symbol_id, _P_STEP)
    mags = rng_s.choice(_STEP_MAGNITUDES, size=n, p=_STEP_PROBS)
    signs = rng_s.integers(0, 2, n) * 2 - 1
    steps = mags * signs * g
    band = profile.effective_band_ticks
    lo = max(2 * g + 3, profile.price0 - band)
    hi = min(MAX_PRICE_TICKS - 2 * g - 3, profile.price0 + band)
    mid_after = _reflect(profile.price0 + np.cumsum(steps), lo, hi)
    mid0 = min(max(profile.price0, lo), hi)
    mid_before = np.concatenate(([mid0], mid_after[:-1]))

    # Trade prints: consensus mid just before the step, with tick noise
    # (sub-penny prints, matching midpoint executions).
    rng_sz = _profile_rng(config, profile.symbol_id, _P_SIZE)
    trade_size = (profile.size_lot_shares
                  * rng_sz.geometric(profile.size_geom_p, n))
    rng_n = _profile_rng(config, profile.symbol_id, _P_NOISE)
    noise = rng_n.choice(_NOISE_CHOICES, size=n, p=_NOISE_PROBS)
    trade_px = np.clip(mid_before + noise, 1, MAX_PRICE_TICKS)

    # Quote legs: (time, venue, side, half-spread, burst index) tuples.
    nv = len(venues)
    moved = mid_after != mid_before
    up = mid_after > mid_before
    mv_idx = np.flatnonzero(moved)
    n_mv = len(mv_idx)

    # Re-quote waves on every move: phase one pulls the retreating side
    # out of the way, phase two brings the chasing side in.
    rng_off = _profile_rng(config, profile.symbol_id, _P_QOFFSET)
    wave_burst = np.repeat(mv_idx, nv)
    wave_venue = np.tile(venues, n_mv)
    w_total = n_mv * nv
    off1 = 1 + rng_off.integers(0, WAVE_PHASE_SPAN_US, w_total)
    off2 = (WAVE_PHASE_GAP_US
            + rng_off.integers(0, WAVE_PHASE_SPAN_US, w_total))
    wave_up = np.repeat(up[mv_idx], nv)
    leg1_t = t[wave_burst] + off1
    leg2_t = t[wave_burst] + off2
    leg1_side = np.where(wave_up, int(MsgKind.ASK_QUOTE),
                         int(MsgKind.BID_QUOTE))
    leg2_side = np.where(wave_up, int(MsgKind.BID_QUOTE),
                         int(MsgKind.ASK_QUOTE))

    # Jostle re-quotes between moves, budgeted so total quote traffic
    # approximates quote_trade_ratio (waves set the floor).
    p_move = n_mv / n
    jostle_mean = max(0.0, (profile.quote_trade_ratio - 2.0 * nv * p_move)
                      / (2.0 * max(1e-9, 1.0 - p_move)))
    rng_k = _profile_rng(config, profile.symbol_id, _P_QCOUNT)
    still_idx = np.flatnonzero(~moved)
    j_pairs = rng_k.binomial(max(0, round(2 * jostle_mean)), 0.5,
                             len(still_idx))
    j_burst = np.repeat(still_idx, j_pairs)
    j_total = len(j_burst)
    rng_qv = _profile_rng(config, profile.symbol_id, _P_QVENUE)
    j_venue = rng_qv.choice(venues, size=j_total, p=weights)
    j_t = t[j_burst] + 1 + np.floor(
        rng_off.exponential(QUOTE_OFFSET_MEAN_US, j_total)).astype(np.int64)

    # Opening round: every active venue posts a tight two-sided book just
    # before the first trade.
    open_t0 = max(start_us, int(t[0]) - OPENING_LEAD_US)
    open_t = open_t0 + np.arange(nv, dtype=np.int64) * 2

    leg_t = np.concatenate((open_t, open_t + 1, leg1_t, leg2_t, j_t, j_t + 1))
    leg_venue = np.concatenate((venues, venues, wave_venue, wave_venue,
                                j_venue, j_venue))
    leg_side = np.concatenate((
        np.full(nv, int(MsgKind.BID_QUOTE), dtype=np.int64),
        np.full(nv, int(MsgKind.ASK_QUOTE), dtype=np.int64),
        leg1_side, leg2_side,
        np.full(j_total, int(MsgKind.BID_QUOTE), dtype=np.int64),
        np.full(j_total, int(MsgKind.ASK_QUOTE), dtype=np.int64)))
    leg_burst = np.concatenate((np.full(2 * nv, -1, dtype=np.int64),
                                wave_burst, wave_burst, j_burst, j_burst))
    q_total = len(leg_t)
    rng_h = _profile_rng(config, profile.symbol_id, _P_QHALF)
    leg_half = rng_h.choice(_HALF_SPREAD_CHOICES, size=q_total,
                            p=_HALF_SPREAD_PROBS) * g
    leg_half[:2 * nv] = g

    # Per venue: canonical time order, strict 1 us spacing, monotone burst
    # mids (a venue never re-posts an older consensus), then a one-pass
    # clamp that provably keeps the venue's own book uncrossed and
    # unlocked whatever the interleaving: bids only move down, asks only
    # move up, each against the other side's raw forward-fill.
    leg_px = np.empty(q_total, dtype=np.int64)
    keep_mask = np.ones(q_total, dtype=bool)
    is_bid_all = leg_side == int(MsgKind.BID_QUOTE)
    for v in venues:
        sel = np.flatnonzero(leg_venue == v)
        vorder = sel[np.argsort(leg_t[sel], kind="stable")]
        vt = _strictly_spaced(leg_t[vorder], 1)
        leg_t[vorder] = vt
        b_eff = np.maximum.accumulate(leg_burst[vorder])
        vmid = np.where(b_eff >= 0, mid_after[np.maximum(b_eff, 0)], mid0)
        vhalf = leg_half[vorder]
        is_bid = is_bid_all[vorder]
        raw = np.where(is_bid, vmid - vhalf, vmid + vhalf)
        # Raw forward-fills of the opposite side (positions with no prior
        # opposite-side quote stay unclamped).
        idx_ask = np.cumsum(~is_bid) - 1
        ask_vals = raw[~is_bid]
        idx_bid = np.cumsum(is_bid) - 1
        bid_vals = raw[is_bid]
        px = raw.copy()
        has = is_bid & (idx_ask >= 0)
        px[has] = np.minimum(raw[has], ask_vals[idx_ask[has]] - 1)
        has = (~is_bid) & (idx_bid >= 0)
        px[has] = np.maximum(raw[has], bid_vals[idx_bid[has]] + 1)
        leg_px[vorder] = np.maximum(px, 1)
        keep_mask[vorder] = vt <= end_us - 1

    keep_idx = np.flatnonzero(keep_mask)
    q_kept = len(keep_idx)
    rng_qs = _profile_rng(config, profile.symbol_id, _P_QSIZE)
    leg_sizes = (profile.size_lot_shares
                 * rng_qs.geometric(profile.size_geom_p, q_total))[keep_idx]

    out = np.zeros(q_kept + n, dtype=RECORD_DTYPE)
    out["symbol_id"] = profile.symbol_id
    out["msg_kind"][:q_kept] = leg_side[keep_idx]
    out["msg_kind"][q_kept:] = int(MsgKind.TRADE)
    out["exchange_id"][:q_kept] = leg_venue[keep_idx]
    out["exchange_id"][q_kept:] = trade_venue
    out["price"][:q_kept] = leg_px[keep_idx]
    out["price"][q_kept:] = trade_px
    out["size"][:q_kept] = leg_sizes
    out["size"][q_kept:] = trade_size
    out["exchange_ts"][:q_kept] = leg_t[keep_idx]
    out["exchange_ts"][q_kept:] = t
    return out


def generate_events(config: SimConfig) -> Tape:
    """Generate the ground-truth event stream, exchange-time ordered.

    The returned tape is the perfect-consolidator view: sip_ts equals
    exchange_ts and sip_seq numbers events 1..N globally. That global id
    is the join key consolidate() preserves for each SIP record.
    """
    parts = [_generate_symbol(config, p)
             for p in sorted(config.symbols, key=lambda p: p.symbol_id)]
    merged = (np.concatenate(parts) if parts
              else np.empty(0, dtype=RECORD_DTYPE))
    order = np.argsort(merged["exchange_ts"], kind="stable")
    merged = merged[order]
    merged["sip_ts"] = merged["exchange_ts"]
    merged["sip_seq"] = np.arange(1, len(merged) + 1, dtype=np.uint64)
    return Tape(merged)


@dataclass(frozen=True)
class ConsolidationResult:
    """The three SIP tapes plus the ground truth they were built from.

    event_ids[sip][i] is the ground-truth sequence number (the shared
    event id) of that SIP tape's record i."""

    tapes: dict
    event_ids: dict
    ground_truth: Tape


def consolidate(events: Tape, latency: LatencyModel, seed: int,
                directory: SymbolDirectory) -> ConsolidationResult:
    """Deliver ground-truth events to their SIPs through noisy FIFO links.

    Each message is routed by its symbol's listing, delayed by a sample
    from its (venue, SIP) link, queued FIFO on that link, then sequenced
    within its SIP by arrival time (ties: exchange_ts, then venue id).
    """
    data = events.data
    n = len(data)
    ets = data["exchange_ts"].astype(np.int64)
    if n and np.any(np.diff(ets) < 0):
        raise ValueError("consolidate() needs exchange-time-ordered input")
    if n and int(data["symbol_id"].max()) >= len(directory):
        raise ValueError("event references a symbol missing from the directory")
    if n and int(data["exchange_id"].max()) >= len(DEFAULT_EXCHANGES):
        raise ValueError("event references an unknown venue")

    sip_of_symbol = np.array([int(s.sip) for s in directory], dtype=np.int64)
    sips = sip_of_symbol[data["symbol_id"]] if n else np.empty(0, np.int64)
    venues = data["exchange_id"].astype(np.int64)
    sip_ts = np.zeros(n, dtype=np.int64)

    for ex in range(len(DEFAULT_EXCHANGES)):
        for sip in (SipId.A, SipId.B, SipId.C):
            mask = (venues == ex) & (sips == int(sip))
            count = int(mask.sum())
            if count == 0:
                continue
            link = latency.link(ex, sip)
            delays = link.sample(_rng(seed, _NS_LINK, ex, int(sip)), count)
            arrivals = np.maximum.accumulate(ets[mask] + delays)
            sip_ts[mask] = arrivals

    tapes = {}
    event_ids = {}
    gids = data["sip_seq"].astype(np.int64)
    for sip in (SipId.A, SipId.B, SipId.C):
        idx = np.flatnonzero(sips == int(sip))
        sub_order = np.lexsort((venues[idx], ets[idx], sip_ts[idx]))
        idx = idx[sub_order]
        out = data[idx].copy()
        out["sip_ts"] = sip_ts[idx].astype(np.uint64)
        out["sip_seq"] = np.arange(1, len(idx) + 1, dtype=np.uint64)
        tapes[sip] = Tape(out)
        event_ids[sip] = gids[idx]
    return ConsolidationResult(tapes, event_ids, events)


# ---------------------------------------------------------------------------
# Scenario presets

# (ticker, listing, expected trades over a typical session, reference price)
_PRESET_SYMBOLS = (
    ("AAPL", Listing.NASDAQ, 482_578, "116.00"),
    ("BAC", Listing.NYSE, 97_303, "17.50"),
    ("XOM", Listing.NYSE, 86_834, "78.00"),
    ("GOOG", Listing.NASDAQ, 69_085, "660.00"),
    ("DNR", Listing.NYSE, 51_185, "4.50"),
    ("IBM", Listing.NYSE, 29_960, "155.00"),
    ("SHAK", Listing.NYSE, 16_349, "60.00"),
    ("KLIC", Listing.NASDAQ, 3_304, "11.00"),
    ("GBX", Listing.NYSE, 2_804, "55.00"),
    ("WBMD", Listing.NASDAQ, 2_428, "45.00"),
    ("EYES", Listing.NASDAQ, 1_653, "9.00"),
    ("BRKA", Listing.NYSE, 304, "200000.00"),
    ("OHGI", Listing.NASDAQ, 286, "2.50"),
    ("ACU", Listing.NYSE_ARCA_MKT_BATS_REGIONAL, 1, "17.50"),
)

# Venue share templates by listing group (NYSE trades only its listings).
_W_NYSE_LISTED = {"NYSE": 0.30, "ARCA": 0.12, "AMEX": 0.02, "NASD": 0.16,
                  "NQBS": 0.04, "NQPH": 0.03, "BATS": 0.14, "BATY": 0.07,
                  "EDGA": 0.05, "EDGX": 0.05, "CHX": 0.02}
_W_NASDAQ_LISTED = {"NASD": 0.30, "NQBS": 0.05, "NQPH": 0.04, "ARCA": 0.14,
                    "BATS": 0.16, "BATY": 0.08, "EDGA": 0.07, "EDGX": 0.12,
                    "AMEX": 0.02, "CHX": 0.02}
_W_TAPE_B_LISTED = {"ARCA": 0.25, "BATS": 0.20, "BATY": 0.08, "EDGA": 0.07,
                    "EDGX": 0.12, "NASD": 0.15, "NQBS": 0.04, "NQPH": 0.03,
                    "AMEX": 0.03, "CHX": 0.03}


def default_venue_weights(listing: Listing) -> dict:
    template = {
        Listing.NYSE: _W_NYSE_LISTED,
        Listing.NASDAQ: _W_NASDAQ_LISTED,
        Listing.NYSE_ARCA_MKT_BATS_REGIONAL: _W_TAPE_B_LISTED,
    }[Listing(listing)]
    return {EXCHANGE_BY_ABBREV[a].id: w for a, w in sorted(template.items())}


def scenario_preset(name: str, seed: int = 7) -> SimConfig:
    """Built-in scenarios: "typical_day" (14 symbols spanning five orders
    of magnitude in trade count) and "stress_open" (10x open burst, 4x
    link medians)."""
    if name == "typical_day":
        shape = TYPICAL_SHAPE
        latency = LatencyModel.default_profile()
    elif name == "stress_open":
        shape = STRESS_OPEN_SHAPE
        latency = LatencyModel.default_profile().scaled(4.0)
    else:
        raise UnknownPresetError(f"unknown scenario preset: {name!r}")
    integral = TYPICAL_SHAPE.integral_seconds
    symbols = []
    infos = []
    for sid, (ticker, listing, trades, px) in enumerate(_PRESET_SYMBOLS):
        price0 = price_from_decimal(px)
        infos.append(SymbolInfo(sid, ticker, listing,
                                penny_flag=price0 < 10_000))
        symbols.append(SymbolActivityProfile(
            symbol_id=sid,
            trade_rate_per_s=trades / integral,
            intraday_shape=shape,
            venue_weights=default_venue_weights(listing),
            price0=price0,
        ))
    return SimConfig(seed=seed, symbols=tuple(symbols),
                     directory=SymbolDirectory(infos), latency=latency,
                     scenario_name=name)


# ---------------------------------------------------------------------------
# Scenario config files: plain text, key = value with [sections]

def config_to_text(config: SimConfig) -> str:
    """Canonical plain-text rendering; also the scenario-hash input."""
    lines = [
        "# tapelab scenario",
        f"scenario = {config.scenario_name}",
        f"seed = {config.seed}",
        f"session_start_us = {config.session_window[0]}",
        f"session_end_us = {config.session_window[1]}",
        "",
        "[latency]",
        f"default_median_us = {config.latency.default.median_us!r}",
        f"default_sigma = {config.latency.default.sigma!r}",
        f"default_floor_us = {config.latency.default.floor_us}",
    ]
    for ex, s, ll in config.latency.overrides:
        ex_s = DEFAULT_EXCHANGES[ex].abbreviation if ex is not None else "*"
        sip_s = SipId(s).name if s is not None else "*"
        lines.append(f"link = {ex_s} {sip_s} {ll.median_us!r} {ll.sigma!r} "
                     f"{ll.floor_us}")
    for profile in sorted(config.symbols, key=lambda p: p.symbol_id):
        info = config.directory.by_id(profile.symbol_id)
        lines += [
            "",
            f"[symbol {info.ticker}]",
            f"listing = {info.listing.name}",
            f"penny = {int(info.penny_flag)}",
            f"price0 = {price_to_decimal(profile.price0)}",
            f"trade_rate_per_s = {profile.trade_rate_per_s!r}",
            f"quote_trade_ratio = {profile.quote_trade_ratio!r}",
            f"walk_step_ticks = {profile.walk_step_ticks}",
            f"size_lot_shares = {profile.size_lot_shares}",
            f"size_geom_p = {profile.size_geom_p!r}",
            f"trf_fraction = {profile.trf_fraction!r}",
            f"cluster_prob = "
            + ("auto" if profile.cluster_prob is None
               else repr(profile.cluster_prob)),
            f"walk_band_ticks = "
            + ("auto" if profile.walk_band_ticks is None
               else str(profile.walk_band_ticks)),
            "venue_weights = " + ",".join(
                f"{DEFAULT_EXCHANGES[v].abbreviation}:{w!r}"
                for v, w in sorted(profile.venue_weights.items())),
            "shape = " + ";".join(f"{s}-{e}:{m!r}"
                                  for s, e, m in profile.intraday_shape.segments),
        ]
    return "\n".join(lines) + "\n"


def scenario_hash(config: SimConfig) -> bytes:
    return hashlib.sha256(config_to_text(config).encode()).digest()


def parse_config(text: str) -> SimConfig:
    sections: dict[str, dict] = {"": {}}
    links = []
    current = sections[""]
    current_name = ""
    order: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current_name = line[1:-1].strip()
            current = sections.setdefault(current_name, {})
            if current_name.startswith("symbol "):
                order.append(current_name)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if current_name == "latency" and key == "link":
            links.append(val)
        else:
            current[key] = val

    top = sections[""]
    try:
        seed = int(top["seed"])
    except KeyError:
        raise ConfigError("seed: missing required key") from None
    window = (int(top.get("session_start_us", 0)),
              int(top.get("session_end_us", SESSION_END_US)))
    scen = top.get("scenario", "")

    lat_sec = sections.get("latency", {})
    default = LinkLatency(float(lat_sec.get("default_median_us", 450.0)),
                          float(lat_sec.get("default_sigma", 0.25)),
                          int(lat_sec.get("default_floor_us", 0)))
    overrides = []
    for spec_str in links:
        parts = spec_str.split()
        if len(parts) != 5:
            raise ConfigError(f"link line needs 5 fields: {spec_str!r}")
        ex_s, sip_s, med, sig, floor = parts
        ex = None if ex_s == "*" else EXCHANGE_BY_ABBREV[ex_s].id
        sip = None if sip_s == "*" else SipId[sip_s]
        overrides.append((ex, sip,
                          LinkLatency(float(med), float(sig), int(floor))))
    latency = LatencyModel(default, tuple(overrides))

    profiles = []
    infos = []
    for sid, name in enumerate(order):
        ticker = name.split(None, 1)[1]
        sec = sections[name]
        try:
            listing = Listing[sec["listing"]]
            price0 = price_from_decimal(sec["price0"])
            rate = float(sec["trade_rate_per_s"])
        except KeyError as e:
            raise ConfigError(f"[{name}]: missing required key {e}") from None
        weights = {}
        for pair_s in sec.get("venue_weights", "").split(","):
            pair_s = pair_s.strip()
            if not pair_s:
                continue
            abbrev, w = pair_s.split(":")
            weights[EXCHANGE_BY_ABBREV[abbrev.strip()].id] = float(w)
        if not weights:
            weights = default_venue_weights(listing)
        segments = []
        for seg_s in sec.get("shape", "").split(";"):
            seg_s = seg_s.strip()
            if not seg_s:
                continue
            span, mult = seg_s.split(":")
            a, b = span.split("-")
            segments.append((int(a), int(b), float(mult)))
        shape = IntradayShape(tuple(segments)) if segments else TYPICAL_SHAPE
        cluster_s = sec.get("cluster_prob", "auto")
        band_s = sec.get("walk_band_ticks", "auto")
        profiles.append(SymbolActivityProfile(
            symbol_id=sid,
            trade_rate_per_s=rate,
            intraday_shape=shape,
            venue_weights=weights,
            price0=price0,
            quote_trade_ratio=float(sec.get("quote_trade_ratio", 10.0)),
            walk_step_ticks=int(sec.get("walk_step_ticks", 100)),
            size_lot_shares=int(sec.get("size_lot_shares", 100)),
            size_geom_p=float(sec.get("size_geom_p", 0.5)),
            trf_fraction=float(sec.get("trf_fraction", 0.15)),
            cluster_prob=None if cluster_s == "auto" else float(cluster_s),
            walk_band_ticks=None if band_s == "auto" else int(band_s),
        ))
        infos.append(SymbolInfo(sid, ticker, listing,
                                penny_flag=bool(int(sec.get("penny", "0")))))
    if not profiles:
        raise ConfigError("symbols: at least one [symbol TICKER] section "
                          "required")
    return SimConfig(seed=seed, symbols=tuple(profiles),
                     directory=SymbolDirectory(infos), latency=latency,
                     session_window=window, scenario_name=scen)


def load_config(path) -> SimConfig:
    return parse_config(Path(path).read_text())
