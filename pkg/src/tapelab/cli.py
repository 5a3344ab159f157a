"""Command-line front door: simulate scenarios, analyze tapes, build the
report bundle.

Standard output carries exactly one JSON summary per invocation; logs go
to standard error. Exit codes: 0 ok, 2 usage/config, 3 I/O or corrupt
file, 4 data not found (unknown ticker, missing tape). TAPELAB_THREADS
caps worker parallelism in the report battery.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    box_stats,
    cross_lock_scatter,
    detect_out_of_sequence,
    ex_trf,
    fit_trend,
    latency_stats,
    latency_window_events,
    latencies,
    oos_diff_series,
    per_second_aggregate,
    returns_compare,
    spread_histogram_csv,
    DegenerateFitError,
)
from .nbbo import MarketState, Ordering, count_states, stream_nbbo
from .sim import (
    ConfigError,
    SimConfig,
    config_to_text,
    consolidate,
    generate_events,
    load_config,
    scenario_hash,
    scenario_preset,
)
from .tape import (
    Tape,
    TapeFormatError,
    load_directory,
    read_tape,
    save_directory,
    write_tape,
)
from .types import DEFAULT_EXCHANGES, SipId

E_OK = 0
E_USAGE = 2
E_IO = 3
E_NOT_FOUND = 4

TAPE_NAMES = {"sip_a": SipId.A, "sip_b": SipId.B, "sip_c": SipId.C}
ANALYZE_SUBCOMMANDS = ("latency", "oos", "nbbo", "windows", "descriptive",
                       "trend", "returns", "scatter")
_SINGLE_SYMBOL = {"oos", "windows", "returns", "nbbo"}


class DataNotFoundError(Exception):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def worker_count() -> int:
    env = os.environ.get("TAPELAB_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _resolve_config(spec: str) -> SimConfig:
    if spec in ("typical_day", "stress_open"):
        return scenario_preset(spec)
    if not Path(spec).exists():
        raise DataNotFoundError(f"config not found: {spec}")
    return load_config(spec)


def cmd_simulate(config_spec: str, out_dir: str,
                 seed_override: int | None = None) -> dict:
    """Run a scenario end to end: tapes, symbol directory, manifest."""
    config = _resolve_config(config_spec)
    if seed_override is not None:
        from dataclasses import replace
        config = replace(config, seed=seed_override)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    timings = {}
    t0 = time.perf_counter()
    events = generate_events(config)
    timings["generate"] = round(time.perf_counter() - t0, 3)
    _log(f"generated {len(events)} events")

    t0 = time.perf_counter()
    result = consolidate(events, config.latency, config.seed,
                         config.directory)
    timings["consolidate"] = round(time.perf_counter() - t0, 3)

    t0 = time.perf_counter()
    digest = scenario_hash(config)
    counts = {}
    for name, sip in TAPE_NAMES.items():
        counts[name] = write_tape(result.tapes[sip], out / f"{name}.tape",
                                  scenario_hash=digest)
    counts["ground_truth"] = write_tape(events, out / "ground_truth.tape",
                                        scenario_hash=digest)
    save_directory(config.directory, out / "symbols.csv")
    (out / "config.txt").write_text(config_to_text(config))
    timings["write"] = round(time.perf_counter() - t0, 3)

    manifest = {
        "tool_version": __version__,
        "scenario": config.scenario_name,
        "scenario_hash": digest.hex(),
        "seed": config.seed,
        "tapes": {name: f"{name}.tape" for name in
                  list(TAPE_NAMES) + ["ground_truth"]},
        "symbol_directory": "symbols.csv",
        "config": "config.txt",
        "record_counts": counts,
        "timings_s": timings,
        "analyses": {},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return {"manifest": str(out / "manifest.json"),
            "scenario_hash": digest.hex(), "record_counts": counts,
            "timings_s": timings}


def verify_manifest(run_dir) -> dict:
    """Load a run manifest and check every listed tape exists with the
    promised record count."""
    run = Path(run_dir)
    mpath = run / "manifest.json"
    if not mpath.exists():
        raise DataNotFoundError(f"manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    for name, rel in manifest["tapes"].items():
        p = run / rel
        if not p.exists():
            raise DataNotFoundError(f"tape missing: {p}")
        result = read_tape(p)
        want = manifest["record_counts"][name]
        if len(result.tape) != want:
            raise DataNotFoundError(
                f"{p}: {len(result.tape)} records, manifest says {want}")
    dir_path = run / manifest["symbol_directory"]
    if not dir_path.exists():
        raise DataNotFoundError(f"symbol directory missing: {dir_path}")
    return manifest


def _load_tapes(paths) -> Tape:
    parts = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise DataNotFoundError(f"tape not found: {p}")
        parts.append(read_tape(p).tape.data)
    return Tape(np.concatenate(parts)) if parts else Tape.empty()


def _sibling_directory(tape_path):
    p = Path(tape_path).parent / "symbols.csv"
    if not p.exists():
        raise DataNotFoundError(f"symbol directory not found: {p}")
    return load_directory(p)


def _resolve_symbol(directory, ticker: str):
    try:
        return directory.by_ticker(ticker)
    except KeyError:
        raise DataNotFoundError(f"unknown ticker: {ticker}") from None


def cmd_analyze(subcommand: str, tape_paths, symbol: str | None,
                out_dir: str | None, include_quotes: bool,
                use_ex_trf: bool, bin_width_cents: int) -> dict:
    """Run one analysis and write its CSVs; returns the JSON summary."""
    directory = _sibling_directory(tape_paths[0])
    tape = _load_tapes(tape_paths)
    out = Path(out_dir) if out_dir else Path(tape_paths[0]).parent
    out.mkdir(parents=True, exist_ok=True)
    if subcommand in _SINGLE_SYMBOL and not symbol:
        raise ConfigError(f"analyze {subcommand}: --symbol is required")
    info = _resolve_symbol(directory, symbol) if symbol else None
    tag = info.ticker if info else "all"
    summary: dict = {"subcommand": subcommand, "symbol": tag,
                     "outputs": {}}

    def output(name: str, path: Path, rows: int):
        summary["outputs"][name] = {"path": str(path), "rows": rows}

    if subcommand == "oos":
        trades = tape.trades(symbol_id=info.id)
        with_trf = detect_out_of_sequence(trades)
        without = detect_out_of_sequence(ex_trf(trades))
        headline = without if use_ex_trf else with_trf
        series = oos_diff_series(ex_trf(trades) if use_ex_trf else trades)
        path = out / f"oos_{tag}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(series.dtype.names)
            w.writerows(series.tolist())
        output("first_differences", path, len(series))
        summary.update({
            "with_trf": with_trf.summary(),
            "ex_trf": without.summary(),
            "oos_percent": headline.oos_percent,
            "oos_count": headline.oos_count,
            "total_trades": headline.total_trades,
        })

    elif subcommand == "latency":
        sub = tape.filter(symbol_id=info.id) if info else tape
        result = latency_stats(sub, group_by="sip_exchange",
                               directory=directory,
                               include_quotes=include_quotes)
        path = out / f"latency_{tag}.csv"
        result.to_csv(path)
        output("box_stats", path, len(result.stats))
        summary.update(result.summary())

    elif subcommand == "nbbo":
        quotes = tape.quotes(symbol_id=info.id)
        series = stream_nbbo(quotes, Ordering.SIP)
        path = out / f"nbbo_{tag}.csv"
        series.to_csv(path)
        output("nbbo_series", path, len(series))
        hist_path = out / f"nbbo_spread_hist_{tag}.csv"
        spread_histogram_csv(series, hist_path,
                             bin_width_cents=bin_width_cents)
        output("spread_histogram", hist_path, -1)
        states = count_states(series)
        summary.update({
            "quotes": len(series),
            "crosses": states.crosses,
            "locks": states.locks,
            "time_in_state_us": {MarketState(k).name: v
                                 for k, v in states.time_in_state.items()},
        })

    elif subcommand == "windows":
        sub = tape.filter(symbol_id=info.id)
        order = np.lexsort((sub.sip_seq, sub.sip_ts))
        sub = Tape(sub.data[order])
        result = latency_window_events(sub, kinds="both")
        path = out / f"windows_{tag}.csv"
        result.to_csv(path)
        output("window_histogram", path, len(result.hist_counts))
        summary.update(result.summary())

    elif subcommand == "descriptive":
        sub = tape.filter(symbol_id=info.id) if info else tape
        trades = per_second_aggregate(sub, "trade_count")
        shares = per_second_aggregate(sub, "share_volume")
        dollars = per_second_aggregate(sub, "dollar_volume")
        messages = per_second_aggregate(sub, "message_count")
        cum_dollars = dollars.cumulative()
        path = out / f"descriptive_{tag}.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["second", "trade_count", "share_volume",
                        "dollar_volume", "message_count",
                        "cum_dollar_volume"])
            for i, sec in enumerate(trades.seconds):
                w.writerow([int(sec), int(trades.values["all"][i]),
                            int(shares.values["all"][i]),
                            float(dollars.values["all"][i]),
                            int(messages.values["all"][i]),
                            float(cum_dollars.values["all"][i])])
        output("per_second", path, len(trades.seconds))
        summary.update({
            "total_trades": int(trades.total()),
            "total_shares": int(shares.total()),
            "total_dollars": float(dollars.total()),
            "total_messages": int(messages.total()),
        })

    elif subcommand == "trend":
        points = []
        rows = []
        for s in directory:
            trades = tape.trades(symbol_id=s.id)
            if use_ex_trf:
                trades = ex_trf(trades)
            report = detect_out_of_sequence(trades)
            points.append((report.total_trades, report.oos_count))
            rows.append((s.ticker, report.total_trades, report.oos_count,
                         report.oos_percent))
        path = out / "trend_all.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["ticker", "total_trades", "oos_count", "oos_percent"])
            w.writerows(rows)
        output("points", path, len(rows))
        try:
            fit = fit_trend(points)
            summary.update(fit.summary())
        except DegenerateFitError as e:
            summary.update({"slope": None, "r_squared": None,
                            "fit_error": str(e)})

    elif subcommand == "returns":
        trades = tape.trades(symbol_id=info.id)
        if use_ex_trf:
            trades = ex_trf(trades)
        comparison = returns_compare(trades)
        summary.update(comparison.summary())

    elif subcommand == "scatter":
        result = cross_lock_scatter(tape, directory)
        path = out / "scatter_all.csv"
        result.to_csv(path)
        output("scatter", path, len(result.rows))
        summary.update(result.summary())

    else:
        raise ConfigError(f"unknown analyze subcommand: {subcommand!r}")
    return summary


# ---------------------------------------------------------------------------
# Report bundle

def _decade_edges(top: int) -> np.ndarray:
    edges = [0, 1]
    while edges[-1] <= top:
        edges.append(edges[-1] * 10)
    return np.array(edges + [edges[-1] * 10], dtype=np.int64)


def _write_rows(path: Path, header, rows) -> int:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return len(rows)


def _series_csv(path: Path, series_map) -> int:
    first = next(iter(series_map.values()))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["second"] + list(series_map))
        for i, sec in enumerate(first.seconds):
            w.writerow([int(sec)] + [s.values["all"][i].item()
                                     for s in series_map.values()])
    return len(first.seconds)


def _symbol_battery(tape: Tape, info) -> dict:
    trades = tape.trades(symbol_id=info.id)
    trades_ex = ex_trf(trades)
    with_trf = detect_out_of_sequence(trades)
    without = detect_out_of_sequence(trades_ex)
    if with_trf.total_trades >= 2:
        returns = returns_compare(trades).summary()
    else:
        returns = None
    return {"ticker": info.ticker, "listing": info.listing.name,
            "with_trf": with_trf, "ex_trf": without, "returns": returns}


def cmd_report(run_dir: str) -> dict:
    """Run the full analysis battery over a simulation run.

    Emits the per-symbol accuracy table plus the figure-data CSVs under
    <run>/report/, updates the manifest's analyses map, and prints a
    summary. Byte-identical on reruns.
    """
    run = Path(run_dir)
    manifest = verify_manifest(run)
    directory = load_directory(run / manifest["symbol_directory"])
    sip_tapes = {name: read_tape(run / manifest["tapes"][name]).tape
                 for name in TAPE_NAMES}
    combined = Tape(np.concatenate([sip_tapes[n].data for n in TAPE_NAMES]))
    rep = run / "report"
    rep.mkdir(exist_ok=True)
    outputs = {}

    # Per-symbol sequencing accuracy, in parallel per TAPELAB_THREADS.
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        battery = list(pool.map(lambda s: _symbol_battery(combined, s),
                                directory))
    battery.sort(key=lambda b: (-b["with_trf"].total_trades, b["ticker"]))

    rows = [(b["ticker"], round(b["with_trf"].oos_percent, 5),
             b["with_trf"].total_trades, b["listing"],
             round(b["ex_trf"].oos_percent, 5), b["ex_trf"].total_trades)
            for b in battery]
    outputs["table1"] = _write_rows(
        rep / "table1.csv",
        ["ticker", "oos_percent", "total_trades", "listing",
         "oos_percent_ex_trf", "total_trades_ex_trf"], rows)

    points = [(b["with_trf"].total_trades, b["with_trf"].oos_count)
              for b in battery]
    outputs["trend_all"] = _write_rows(
        rep / "trend_all.csv",
        ["ticker", "total_trades", "oos_count", "oos_percent"],
        [(b["ticker"], b["with_trf"].total_trades, b["with_trf"].oos_count,
          round(b["with_trf"].oos_percent, 5)) for b in battery])
    try:
        fit = fit_trend(points).summary()
    except DegenerateFitError as e:
        fit = {"fit_error": str(e)}

    outputs["returns_all"] = _write_rows(
        rep / "returns_all.csv",
        ["ticker", "n_returns", "mismatch_count", "sign_flip_count",
         "sum_abs_diff"],
        [(b["ticker"], b["returns"]["n_returns"],
          b["returns"]["mismatch_count"], b["returns"]["sign_flip_count"],
          round(b["returns"]["sum_abs_diff"], 9))
         for b in battery if b["returns"] is not None])

    # Latency boxes per SIP x exchange (trades).
    lat = latency_stats(combined, group_by="sip_exchange",
                        directory=directory)
    lat.to_csv(rep / "latency_by_sip_exchange.csv")
    outputs["latency_by_sip_exchange"] = len(lat.stats)

    top = battery[0]
    top_info = directory.by_ticker(top["ticker"])
    top_tape = combined.filter(symbol_id=top_info.id)
    top_order = np.lexsort((top_tape.sip_seq, top_tape.sip_ts))
    top_tape = Tape(top_tape.data[top_order])
    top_trades = top_tape.trades()

    # Per-exchange latency histogram for the heaviest symbol.
    lat_rows = []
    top_lat = latencies(top_trades)
    for ex in np.unique(top_trades.exchange_id):
        vals = top_lat[top_trades.exchange_id == ex]
        edges = _decade_edges(int(vals.max(initial=0)))
        hist, _ = np.histogram(vals, bins=edges)
        abbrev = DEFAULT_EXCHANGES[int(ex)].abbreviation
        for i, c in enumerate(hist):
            lat_rows.append((abbrev, int(edges[i]), int(edges[i + 1]),
                             int(c)))
    outputs["latency_hist_top"] = _write_rows(
        rep / f"latency_hist_{top['ticker']}.csv",
        ["exchange", "bin_lo_us", "bin_hi_us", "trades"], lat_rows)

    # Price and activity series for the heaviest symbol.
    px_second = (top_trades.sip_ts // 1_000_000).astype(np.int64)
    last_px = {}
    for sec, px in zip(px_second, top_trades.price):
        last_px[int(sec)] = int(px)
    outputs["price_series_top"] = _write_rows(
        rep / f"price_series_{top['ticker']}.csv",
        ["second", "last_price_dollars"],
        [(s, p / 10_000.0) for s, p in sorted(last_px.items())])

    outputs["activity_top"] = _series_csv(
        rep / f"activity_{top['ticker']}.csv",
        {"trades": per_second_aggregate(top_trades, "trade_count"),
         "dollars": per_second_aggregate(top_trades, "dollar_volume"),
         "cum_dollars": per_second_aggregate(
             top_trades, "dollar_volume").cumulative()})

    by_venue = per_second_aggregate(top_trades, "share_volume",
                                    group_by="exchange").cumulative()
    by_venue.to_csv(rep / f"cum_share_volume_by_exchange_{top['ticker']}.csv")
    outputs["cum_share_volume_by_exchange_top"] = len(by_venue)

    msgs = per_second_aggregate(combined, "message_count", group_by="sip",
                                directory=directory)
    trades_by_sip = per_second_aggregate(combined, "trade_count",
                                         group_by="sip",
                                         directory=directory)
    quote_rows = []
    for i, sec in enumerate(msgs.seconds):
        row = [int(sec)]
        for sip in (SipId.A, SipId.B, SipId.C):
            total = msgs.values.get(int(sip))
            tr = trades_by_sip.values.get(int(sip))
            m = int(total[i]) if total is not None else 0
            t = int(tr[i]) if tr is not None else 0
            row.append(m - t)
        quote_rows.append(row)
    outputs["quote_messages_by_sip"] = _write_rows(
        rep / "quote_messages_by_sip.csv",
        ["second", "A", "B", "C"], quote_rows)

    # Consolidated quote series, spread histogram, venue spread boxes.
    series = stream_nbbo(top_tape.quotes(), Ordering.SIP)
    series.to_csv(rep / f"nbbo_{top['ticker']}.csv")
    outputs["nbbo_top"] = len(series)
    spread_histogram_csv(series, rep / f"spread_hist_{top['ticker']}.csv")
    outputs["spread_hist_top"] = -1
    states = count_states(series)

    venue_rows = []
    for ex in np.unique(top_tape.quotes().exchange_id):
        vq = top_tape.quotes().filter(exchange_id=int(ex))
        vseries = stream_nbbo(vq, Ordering.SIP)
        spreads = vseries.spread[vseries.has_spread]
        if len(spreads) == 0:
            continue
        st = box_stats(spreads)
        venue_rows.append((DEFAULT_EXCHANGES[int(ex)].abbreviation,
                           st.count, st.median_us / 10_000.0,
                           st.q1_us / 10_000.0, st.q3_us / 10_000.0,
                           st.min_us / 10_000.0, st.max_us / 10_000.0))
    outputs["venue_spreads_top"] = _write_rows(
        rep / f"venue_spreads_{top['ticker']}.csv",
        ["exchange", "quotes", "median_spread", "q1", "q3", "min", "max"],
        venue_rows)

    scatter = cross_lock_scatter(combined, directory)
    scatter.to_csv(rep / "scatter_all.csv")
    outputs["scatter_all"] = len(scatter.rows)

    windows = latency_window_events(top_tape, kinds="both")
    windows.to_csv(rep / f"windows_{top['ticker']}.csv")
    outputs["windows_top"] = len(windows.hist_counts)

    # First-difference detail for the lightest (>= 2 trades) and heaviest.
    light = next((b for b in reversed(battery)
                  if b["with_trf"].total_trades >= 2), None)
    for b in {top["ticker"]: top, **({light["ticker"]: light} if light
                                     else {})}.values():
        s_info = directory.by_ticker(b["ticker"])
        series_rows = oos_diff_series(combined.trades(symbol_id=s_info.id))
        outputs[f"first_diff_{b['ticker']}"] = _write_rows(
            rep / f"first_diff_{b['ticker']}.csv",
            list(series_rows.dtype.names), series_rows.tolist())

    report_summary = {
        "table_rows": len(rows),
        "trend_fit": fit,
        "top_symbol": top["ticker"],
        "top_crosses": states.crosses,
        "top_locks": states.locks,
        "outputs": outputs,
    }
    (rep / "report_summary.json").write_text(
        json.dumps(report_summary, sort_keys=True, indent=2) + "\n")

    manifest["analyses"] = {k: str(v) for k, v in sorted(outputs.items())}
    (run / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return report_summary


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tapelab",
        description="simulate feed consolidation; analyze tape accuracy")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario")
    p_sim.add_argument("--config", required=True,
                       help="scenario file, or preset name "
                            "(typical_day, stress_open)")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True)

    p_an = sub.add_parser("analyze", help="run one analysis over a tape")
    p_an.add_argument("subcommand", choices=ANALYZE_SUBCOMMANDS)
    p_an.add_argument("--tape", action="append", required=True,
                      help="tape file (repeatable)")
    p_an.add_argument("--symbol", default=None)
    p_an.add_argument("--out", default=None)
    p_an.add_argument("--include-quotes", action="store_true")
    p_an.add_argument("--ex-trf", action="store_true")
    p_an.add_argument("--bin-width-cents", type=int, default=1)

    p_rep = sub.add_parser("report", help="full battery over a run dir")
    p_rep.add_argument("run_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            summary = cmd_simulate(args.config, args.out, args.seed)
        elif args.command == "analyze":
            summary = cmd_analyze(args.subcommand, args.tape, args.symbol,
                                  args.out, args.include_quotes, args.ex_trf,
                                  args.bin_width_cents)
        else:
            summary = cmd_report(args.run_dir)
    except ConfigError as e:
        _log(f"error: {e}")
        return E_USAGE
    except DataNotFoundError as e:
        _log(f"error: {e}")
        return E_NOT_FOUND
    except FileNotFoundError as e:
        _log(f"error: {e}")
        return E_NOT_FOUND
    except TapeFormatError as e:
        _log(f"error: {e}")
        return E_IO
    except OSError as e:
        _log(f"error: {e}")
        return E_IO
    _emit(summary)
    return E_OK


if __name__ == "__main__":
    sys.exit(main())
