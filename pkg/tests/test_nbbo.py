import numpy as np
import pytest

from tapelab import (
    MarketState,
    MixedSymbolError,
    MsgKind,
    NbboRecord,
    Ordering,
    QuoteSourceError,
    TapeRecord,
    TopOfBook,
    apply_quote,
    compute_nbbo,
    count_states,
    price_from_decimal,
    stream_nbbo,
)

from conftest import build_tape, random_quote_tape

B, A, T = MsgKind.BID_QUOTE, MsgKind.ASK_QUOTE, MsgKind.TRADE
NASD, ARCA, NYSE_X, NTRF = 5, 9, 8, 11


def quote(kind, venue, px, size=100, ets=0, sts=0, seq=0, symbol=0):
    return TapeRecord(symbol, kind, venue, price_from_decimal(px), size,
                      ets, sts, seq)


class TestApplyQuote:
    def test_single_update(self):
        book = TopOfBook()
        apply_quote(book, quote(B, NASD, "116.00", 200))
        assert book.bids[NASD] == (1_160_000, 200)
        assert NASD not in book.asks

    def test_replacement_not_accumulation(self):
        book = TopOfBook()
        apply_quote(book, quote(B, NASD, "116.00", 200))
        apply_quote(book, quote(B, NASD, "116.01", 100))
        assert book.bids[NASD] == (1_160_100, 100)

    def test_zero_size_clears(self):
        book = TopOfBook()
        apply_quote(book, quote(A, NASD, "116.02", 300))
        apply_quote(book, quote(A, NASD, "116.02", 0))
        assert NASD not in book.asks

    def test_trf_rejected(self):
        book = TopOfBook()
        with pytest.raises(QuoteSourceError):
            apply_quote(book, quote(B, NTRF, "116.00"))

    def test_trade_rejected(self):
        book = TopOfBook()
        with pytest.raises(ValueError):
            apply_quote(book, quote(T, NASD, "116.00"))


class TestComputeNbbo:
    def test_two_venue_best(self):
        # Brute max/min over {NASD, ARCA}: best bid 116.01, best ask 116.02.
        book = TopOfBook()
        apply_quote(book, quote(B, NASD, "116.00", 100))
        apply_quote(book, quote(B, ARCA, "116.01", 200))
        apply_quote(book, quote(A, NASD, "116.03", 300))
        apply_quote(book, quote(A, ARCA, "116.02", 400))
        r = compute_nbbo(book, ts=10)
        assert (r.bid_price, r.bid_size, r.bid_venue) == (1_160_100, 200, ARCA)
        assert (r.ask_price, r.ask_size, r.ask_venue) == (1_160_200, 400, ARCA)
        assert r.spread == 100
        assert r.state == MarketState.NORMAL

    def test_crossed(self):
        book = TopOfBook()
        apply_quote(book, quote(B, NASD, "116.02", 100))
        apply_quote(book, quote(A, ARCA, "116.00", 100))
        r = compute_nbbo(book, 0)
        assert r.spread == -200
        assert r.state == MarketState.CROSSED

    def test_locked(self):
        book = TopOfBook()
        apply_quote(book, quote(B, NASD, "50.00", 100))
        apply_quote(book, quote(A, ARCA, "50.00", 100))
        r = compute_nbbo(book, 0)
        assert r.spread == 0
        assert r.state == MarketState.LOCKED

    def test_aggregate_size_and_setter_tie_break(self):
        book = TopOfBook()
        apply_quote(book, quote(B, ARCA, "116.00", 300))
        apply_quote(book, quote(B, NASD, "116.00", 200))
        apply_quote(book, quote(B, NYSE_X, "115.99", 500))
        r = compute_nbbo(book, 0)
        assert r.bid_size == 500  # 300 + 200 at the best price only
        assert r.bid_venue == NASD  # lowest exchange id among the tie
        assert r.state == MarketState.ONE_SIDED

    def test_empty(self):
        r = compute_nbbo(TopOfBook(), 0)
        assert r.state == MarketState.EMPTY
        assert r.bid_price is None and r.ask_price is None
        assert r.spread is None


class TestStreamNbbo:
    def test_empty(self):
        assert len(stream_nbbo(build_tape([]), Ordering.SIP)) == 0

    def test_reordered_quotes_cross_only_in_sip_view(self):
        # Venue NASD opens a book; ARCA's aggressive bid reaches the SIP
        # before NASD's ask lift does. Exchange-time replay never crosses;
        # SIP replay does. (Hand replay of both orderings.)
        px = price_from_decimal
        rows = [
            # (symbol, kind, venue, price, size, exchange_ts, sip_ts, seq)
            (0, A, NASD, px("116.00"), 100, 0, 500, 1),
            (0, B, NASD, px("115.98"), 100, 1, 501, 2),
            (0, B, ARCA, px("116.02"), 100, 1000, 1100, 3),
            (0, A, NASD, px("116.04"), 100, 900, 2900, 4),
        ]
        tape = build_tape(rows)
        sip_states = [r.state for r in stream_nbbo(tape, Ordering.SIP)]
        assert sip_states == [MarketState.ONE_SIDED, MarketState.NORMAL,
                              MarketState.CROSSED, MarketState.NORMAL]
        exch_states = [r.state for r in stream_nbbo(tape, Ordering.EXCHANGE)]
        assert exch_states == [MarketState.ONE_SIDED, MarketState.NORMAL,
                               MarketState.NORMAL, MarketState.NORMAL]
        assert MarketState.CROSSED not in exch_states

    def test_constant_latency_orderings_identical(self):
        rng = np.random.default_rng(3)
        tape = random_quote_tape(rng, 500)
        data = tape.data.copy()
        data["sip_ts"] = data["exchange_ts"] + 450
        order = np.lexsort((data["exchange_ts"], data["sip_ts"]))
        data = data[order]
        data["sip_seq"] = np.arange(1, len(data) + 1)
        from tapelab import Tape
        tape = Tape(data)
        sip_series = stream_nbbo(tape, Ordering.SIP)
        exch_series = stream_nbbo(tape, Ordering.EXCHANGE)
        for i in range(len(sip_series)):
            a, b = sip_series[i], exch_series[i]
            assert (a.bid_price, a.bid_size, a.bid_venue, a.ask_price,
                    a.ask_size, a.ask_venue, a.state) == \
                   (b.bid_price, b.bid_size, b.bid_venue, b.ask_price,
                    b.ask_size, b.ask_venue, b.state)

    def test_mixed_symbols_rejected(self):
        rows = [(0, B, NASD, 100, 1, 0, 1, 1),
                (1, B, NASD, 100, 1, 0, 2, 2)]
        with pytest.raises(MixedSymbolError):
            stream_nbbo(build_tape(rows), Ordering.SIP)

    def test_trf_quote_rejected(self):
        rows = [(0, B, NTRF, 100, 1, 0, 1, 1)]
        with pytest.raises(QuoteSourceError):
            stream_nbbo(build_tape(rows), Ordering.SIP)

    def test_trades_ignored(self):
        rows = [(0, T, NASD, 100, 1, 0, 1, 1),
                (0, B, NASD, 100, 50, 0, 2, 2)]
        series = stream_nbbo(build_tape(rows), Ordering.SIP)
        assert len(series) == 1


def test_stream_equals_scalar_replay_on_random_tapes():
    rng = np.random.default_rng(11)
    for _ in range(10):
        tape = random_quote_tape(rng, int(rng.integers(50, 800)))
        for ordering in (Ordering.SIP, Ordering.EXCHANGE):
            series = stream_nbbo(tape, ordering)
            from tapelab.nbbo import order_indices
            order = order_indices(tape, ordering)
            book = TopOfBook()
            for i, idx in enumerate(order):
                rec = tape[int(idx)]
                apply_quote(book, rec)
                ts = rec.sip_ts if ordering == Ordering.SIP else rec.exchange_ts
                expected = compute_nbbo(book, ts)
                assert series[i] == expected


def test_two_sided_states_are_trichotomy():
    rng = np.random.default_rng(5)
    tape = random_quote_tape(rng, 2000)
    series = stream_nbbo(tape, Ordering.SIP)
    two_sided = series.has_spread
    states = series.state[two_sided]
    assert set(np.unique(states)) <= {int(MarketState.NORMAL),
                                      int(MarketState.LOCKED),
                                      int(MarketState.CROSSED)}
    # Exactly one classification per spread sign.
    spreads = series.spread[two_sided]
    assert np.all((spreads > 0) == (states == int(MarketState.NORMAL)))
    assert np.all((spreads == 0) == (states == int(MarketState.LOCKED)))
    assert np.all((spreads < 0) == (states == int(MarketState.CROSSED)))


def _records_for_states(states_ts):
    out = []
    for state, ts in states_ts:
        if state == MarketState.NORMAL:
            bid, ask = 100, 200
        elif state == MarketState.LOCKED:
            bid, ask = 150, 150
        else:
            bid, ask = 200, 100
        out.append(NbboRecord(ts, bid, 1, 5, ask, 1, 9, ask - bid, state))
    return out


class TestCountStates:
    def test_all_normal(self):
        n = MarketState.NORMAL
        recs = _records_for_states([(n, 0), (n, 10), (n, 20)])
        counts = count_states(recs)
        assert counts.crosses == 0 and counts.locks == 0

    def test_consecutive_crosses_count_once(self):
        n, c = MarketState.NORMAL, MarketState.CROSSED
        recs = _records_for_states([(n, 0), (c, 10), (c, 20), (n, 30),
                                    (c, 40)])
        counts = count_states(recs)
        assert counts.crosses == 2
        assert counts.locks == 0
        # Crossed spans [10, 30) and [40, 40].
        assert counts.time_in_state[MarketState.CROSSED] == 20
        assert counts.time_in_state[MarketState.NORMAL] == 20

    def test_lock_entries(self):
        n, l = MarketState.NORMAL, MarketState.LOCKED
        recs = _records_for_states([(n, 0), (l, 10), (n, 20), (l, 30),
                                    (n, 40)])
        counts = count_states(recs)
        assert counts.locks == 2 and counts.crosses == 0

    def test_empty_sequence(self):
        counts = count_states([])
        assert counts.crosses == 0 and counts.locks == 0


def test_nbbo_csv_export(tmp_path, small_run):
    import csv as csv_mod

    _, _, result = small_run
    from tapelab import SipId
    quotes = result.tapes[SipId.C].quotes()[:500]
    series = stream_nbbo(quotes, Ordering.SIP)
    path = tmp_path / "nbbo.csv"
    series.to_csv(path)
    with open(path) as f:
        rows = list(csv_mod.reader(f))
    assert rows[0] == ["ts_us", "bid", "bid_size", "ask", "ask_size",
                       "spread", "state"]
    assert len(rows) == len(series) + 1
