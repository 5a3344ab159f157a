import numpy as np
import pytest

from tapelab import (
    DEFAULT_EXCHANGES,
    Listing,
    MsgKind,
    Ordering,
    SipId,
    SymbolDirectory,
    SymbolInfo,
    Tape,
    count_states,
    latencies,
    price_from_decimal,
    stream_nbbo,
)
from tapelab.sim import (
    ConfigError,
    IntradayShape,
    LatencyModel,
    LinkLatency,
    SimConfig,
    SymbolActivityProfile,
    UnknownPresetError,
    config_to_text,
    consolidate,
    default_venue_weights,
    generate_events,
    parse_config,
    scenario_hash,
    scenario_preset,
)

from conftest import build_tape, make_directory, small_config


class TestConfigValidation:
    def test_empty_symbols(self):
        with pytest.raises(ConfigError, match="symbols"):
            SimConfig(seed=1, symbols=(), directory=make_directory(0),
                      latency=LatencyModel())

    def test_zero_length_session(self):
        cfg = small_config()
        with pytest.raises(ConfigError, match="session"):
            SimConfig(seed=1, symbols=cfg.symbols, directory=cfg.directory,
                      latency=cfg.latency, session_window=(1000, 1000))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="venue_weights"):
            SymbolActivityProfile(
                symbol_id=0, trade_rate_per_s=1.0,
                intraday_shape=IntradayShape(((0, 10, 1.0),)),
                venue_weights={5: 0.5}, price0=100)

    def test_weights_reject_trf(self):
        with pytest.raises(ConfigError, match="quoting"):
            SymbolActivityProfile(
                symbol_id=0, trade_rate_per_s=1.0,
                intraday_shape=IntradayShape(((0, 10, 1.0),)),
                venue_weights={11: 1.0}, price0=100)

    def test_shape_must_tile(self):
        with pytest.raises(ConfigError):
            IntradayShape(((0, 10, 1.0), (20, 30, 1.0)))


class TestPresets:
    def test_typical_day(self):
        cfg = scenario_preset("typical_day")
        assert len(cfg.symbols) == 14
        assert len(cfg.directory) == 14
        rates = [p.trade_rate_per_s for p in cfg.symbols]
        assert max(rates) / min(rates) >= 1e5
        assert cfg.directory.by_ticker("AAPL").sip == SipId.C
        assert cfg.directory.by_ticker("BAC").sip == SipId.A
        assert cfg.directory.by_ticker("ACU").sip == SipId.B

    def test_stress_open_multipliers(self):
        typical = scenario_preset("typical_day")
        stress = scenario_preset("stress_open")
        t_open = dict((s, m) for s, _, m in
                      typical.symbols[0].intraday_shape.segments)[19_800]
        s_open = dict((s, m) for s, _, m in
                      stress.symbols[0].intraday_shape.segments)[19_800]
        assert s_open == 10 * t_open
        assert (stress.latency.default.median_us
                == 4 * typical.latency.default.median_us)
        chx = 4
        assert (stress.latency.link(chx, SipId.A).median_us
                == 4 * typical.latency.link(chx, SipId.A).median_us)

    def test_unknown_preset(self):
        with pytest.raises(UnknownPresetError):
            scenario_preset("weird")


class TestGenerateEvents:
    def test_zero_rate_empty(self):
        cfg = small_config(rate=0.0)
        assert len(generate_events(cfg)) == 0

    def test_poisson_count_and_quote_ratio(self):
        # rate 10/s over 1,000 s: count within 5 sigma of 10,000
        # (sigma = 100); quote/trade ratio within [9, 11].
        cfg = small_config(seed=42, rate=10.0, duration_s=1000)
        events = generate_events(cfg)
        n_trades = len(events.trades())
        assert abs(n_trades - 10_000) <= 500
        ratio = len(events.quotes()) / n_trades
        assert 9.0 <= ratio <= 11.0

    def test_venue_shares_converge_to_weights(self):
        # >= 1e5 events with TRF routing off: empirical venue shares of
        # trades within 2 percentage points of the configured weights.
        cfg = small_config(seed=9, rate=120.0, duration_s=1000,
                           trf_fraction=0.0)
        trades = generate_events(cfg).trades()
        assert len(trades) >= 100_000
        weights = cfg.symbols[0].venue_weights
        counts = np.bincount(trades.exchange_id, minlength=13)
        for venue, w in weights.items():
            share = counts[venue] / len(trades)
            assert abs(share - w) <= 0.02

    def test_ground_truth_ordering_and_ids(self):
        cfg = small_config(seed=3, rate=5.0, duration_s=200)
        events = generate_events(cfg)
        ets = events.exchange_ts
        assert np.all(np.diff(ets) >= 0)
        assert np.array_equal(events.sip_ts, ets)
        assert np.array_equal(events.sip_seq,
                              np.arange(1, len(events) + 1))

    def test_trade_times_strictly_increase_per_symbol(self):
        cfg = small_config(seed=4, rate=50.0, duration_s=100)
        trades = generate_events(cfg).trades()
        assert np.all(np.diff(trades.exchange_ts) > 0)

    def test_session_bounds(self):
        cfg = small_config(seed=5, rate=20.0, duration_s=50)
        events = generate_events(cfg)
        assert events.exchange_ts.min() >= 0
        assert events.exchange_ts.max() < 50 * 1_000_000

    def test_venue_books_never_cross_in_exchange_time(self):
        cfg = small_config(seed=6, rate=20.0, duration_s=200)
        events = generate_events(cfg)
        quotes = events.quotes()
        for ex in np.unique(quotes.exchange_id):
            series = stream_nbbo(quotes.filter(exchange_id=int(ex)),
                                 Ordering.EXCHANGE)
            counts = count_states(series)
            assert counts.crosses == 0
            assert counts.locks == 0
            spreads = series.spread[series.has_spread]
            assert spreads.min() >= 1

    def test_trf_trades_present_and_quote_free(self):
        cfg = small_config(seed=7, rate=20.0, duration_s=500,
                           trf_fraction=0.15)
        events = generate_events(cfg)
        trf_mask = np.isin(events.exchange_id, (11, 12))
        assert np.all(events.msg_kind[trf_mask] == int(MsgKind.TRADE))
        trades = events.trades()
        trf_share = np.isin(trades.exchange_id, (11, 12)).mean()
        assert 0.10 <= trf_share <= 0.20


class TestConsolidate:
    def test_zero_latency(self):
        cfg = small_config(seed=8, rate=10.0, duration_s=100,
                           latency=LatencyModel.zero())
        events = generate_events(cfg)
        result = consolidate(events, cfg.latency, cfg.seed, cfg.directory)
        tape = result.tapes[SipId.C]
        assert np.array_equal(tape.sip_ts, tape.exchange_ts)
        assert np.all(np.diff(tape.exchange_ts) >= 0)
        # SIP delivery order is the true event order, up to ties in the
        # microsecond clock (tied messages deliver in venue-id order).
        inverted = np.diff(result.event_ids[SipId.C]) < 0
        assert np.all(np.diff(tape.exchange_ts)[inverted] == 0)

    def test_two_trade_reversal_by_hand(self):
        # Trades 100 us apart; slow venue delay 900, fast venue delay 100:
        # 0 + 900 = 900 arrives after 100 + 100 = 200.
        directory = SymbolDirectory([SymbolInfo(0, "X", Listing.NASDAQ)])
        events = build_tape([
            (0, MsgKind.TRADE, 5, 1_000_000, 100, 0, 0, 1),
            (0, MsgKind.TRADE, 9, 1_000_000, 100, 100, 100, 2),
        ])
        latency = LatencyModel(
            default=LinkLatency(100.0, 0.0),
            overrides=((5, None, LinkLatency(900.0, 0.0)),))
        result = consolidate(events, latency, seed=0, directory=directory)
        tape = result.tapes[SipId.C]
        assert len(tape) == 2
        assert list(tape.exchange_ts) == [100, 0]
        assert list(tape.sip_ts) == [200, 900]
        assert list(result.event_ids[SipId.C]) == [2, 1]

    def test_invariants_on_simulated_tape(self, small_run):
        cfg, events, result = small_run
        total = 0
        for sip, tape in result.tapes.items():
            total += len(tape)
            if len(tape) == 0:
                continue
            lat = latencies(tape)
            assert lat.min() >= 0
            assert np.all(np.diff(tape.sip_ts) >= 0)
            assert np.all(np.diff(tape.sip_seq) == 1)
        assert total == len(events)

    def test_per_link_fifo(self, small_run):
        cfg, events, result = small_run
        sip_of = np.array([int(s.sip) for s in cfg.directory])
        for sip, tape in result.tapes.items():
            if not len(tape):
                continue
            order = np.argsort(tape.exchange_ts, kind="stable")
            ex = tape.exchange_id[order]
            sts = tape.sip_ts[order]
            for venue in np.unique(ex):
                assert np.all(np.diff(sts[ex == venue]) >= 0)

    def test_unsorted_events_rejected(self):
        directory = SymbolDirectory([SymbolInfo(0, "X", Listing.NASDAQ)])
        events = build_tape([
            (0, MsgKind.TRADE, 5, 100, 1, 500, 500, 1),
            (0, MsgKind.TRADE, 5, 100, 1, 100, 100, 2),
        ])
        with pytest.raises(ValueError, match="ordered"):
            consolidate(events, LatencyModel.zero(), 0, directory)

    def test_unknown_symbol_rejected(self):
        directory = SymbolDirectory([SymbolInfo(0, "X", Listing.NASDAQ)])
        events = build_tape([(7, MsgKind.TRADE, 5, 100, 1, 0, 0, 1)])
        with pytest.raises(ValueError, match="symbol"):
            consolidate(events, LatencyModel.zero(), 0, directory)


class TestDeterminism:
    def test_same_config_same_bytes(self):
        cfg = small_config(seed=21, rate=15.0, duration_s=300)
        a = generate_events(cfg)
        b = generate_events(cfg)
        assert a.data.tobytes() == b.data.tobytes()
        ra = consolidate(a, cfg.latency, cfg.seed, cfg.directory)
        rb = consolidate(b, cfg.latency, cfg.seed, cfg.directory)
        for sip in ra.tapes:
            assert (ra.tapes[sip].data.tobytes()
                    == rb.tapes[sip].data.tobytes())

    def test_seed_changes_output(self):
        a = generate_events(small_config(seed=1, rate=5.0, duration_s=100))
        b = generate_events(small_config(seed=2, rate=5.0, duration_s=100))
        assert a.data.tobytes() != b.data.tobytes()


def test_stress_open_message_peak():
    """Under the stressed shape, the peak open-burst second carries at
    least 10x the midday median second's message load."""
    from tapelab import per_second_aggregate
    from tapelab.sim import STRESS_OPEN_SHAPE
    from tapelab.types import Listing, SymbolInfo
    from tapelab import SymbolDirectory, price_from_decimal

    infos = [SymbolInfo(0, "S0", Listing.NASDAQ)]
    profiles = (SymbolActivityProfile(
        symbol_id=0, trade_rate_per_s=3.0, intraday_shape=STRESS_OPEN_SHAPE,
        venue_weights=default_venue_weights(Listing.NASDAQ),
        price0=price_from_decimal("100.00")),)
    window = (18_000 * 1_000_000, 24_000 * 1_000_000)
    cfg = SimConfig(seed=55, symbols=profiles,
                    directory=SymbolDirectory(infos),
                    latency=LatencyModel.default_profile(),
                    session_window=window)
    events = generate_events(cfg)
    result = consolidate(events, cfg.latency, cfg.seed, cfg.directory)
    series = per_second_aggregate(result.tapes[SipId.C], "message_count",
                                  session_window=window)
    values = series.values["all"]
    seconds = series.seconds
    open_mask = (seconds >= 19_800) & (seconds < 21_600)
    midday_mask = seconds >= 21_600
    peak = values[open_mask].max()
    midday_median = np.median(values[midday_mask])
    assert midday_median > 0
    assert peak >= 10 * midday_median


class TestLatencySampler:
    def test_median_and_floor(self):
        rng = np.random.default_rng(0)
        link = LinkLatency(450.0, 0.25)
        samples = link.sample(rng, 200_000)
        assert abs(np.median(samples) - 450.0) <= 0.01 * 450
        assert samples.min() >= 0
        floored = LinkLatency(450.0, 0.25, floor_us=400)
        assert floored.sample(rng, 10_000).min() >= 400

    def test_constant_and_zero(self):
        rng = np.random.default_rng(0)
        assert np.all(LinkLatency(250.0, 0.0).sample(rng, 100) == 250)
        assert np.all(LinkLatency(0.0, 0.0).sample(rng, 100) == 0)

    def test_default_profile_overrides(self):
        model = LatencyModel.default_profile()
        assert model.link(4, SipId.A).median_us == 2_250.0
        assert model.link(12, SipId.C).sigma == 0.75
        assert model.link(5, SipId.C).median_us == 450.0


class TestConfigFile:
    def test_round_trip(self):
        cfg = scenario_preset("typical_day", seed=13)
        text = config_to_text(cfg)
        parsed = parse_config(text)
        assert parsed == cfg
        assert config_to_text(parsed) == text
        assert scenario_hash(parsed) == scenario_hash(cfg)

    def test_hash_sensitive_to_seed(self):
        a = scenario_preset("typical_day", seed=1)
        b = scenario_preset("typical_day", seed=2)
        assert scenario_hash(a) != scenario_hash(b)

    def test_missing_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config("[symbol X]\nlisting = NASDAQ\n")

    def test_missing_symbols(self):
        with pytest.raises(ConfigError, match="symbol"):
            parse_config("seed = 1\n")
