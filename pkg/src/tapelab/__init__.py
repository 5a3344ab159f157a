"""tapelab: simulate US equity feed consolidation and measure what the
consolidated tape gets wrong.

A deterministic event generator plays exchanges publishing quotes and
trades; a consolidator delivers them over noisy FIFO links to the three
SIPs; the analytics measure latency distributions, phantom crosses and
locks, out-of-sequence trades, and the distortion of returns.
"""

from .types import (
    CENT_TICKS,
    DEFAULT_EXCHANGES,
    EXCHANGE_BY_ABBREV,
    MAX_PRICE_TICKS,
    NTRF_ID,
    QTRF_ID,
    QUOTING_EXCHANGE_IDS,
    REGULAR_OPEN_S,
    SESSION_END_US,
    TICKS_PER_DOLLAR,
    TRF_EXCHANGE_IDS,
    Datacenter,
    ExchangeInfo,
    Family,
    Listing,
    MsgKind,
    PriceError,
    PriceFormatError,
    PricePrecisionError,
    PriceRangeError,
    SipId,
    SymbolDirectory,
    SymbolInfo,
    TapeRecord,
    price_from_decimal,
    price_to_decimal,
    route_to_sip,
    trf_for_listing,
)
from .tape import (
    BadMagicError,
    CsvImportError,
    Tape,
    TapeFormatError,
    TapeOrderingError,
    TapeReadResult,
    TruncatedFileError,
    VersionMismatchError,
    export_csv,
    import_csv,
    load_directory,
    read_tape,
    save_directory,
    write_tape,
)
from .nbbo import (
    MarketState,
    MixedSymbolError,
    NbboRecord,
    NbboSeries,
    Ordering,
    QuoteSourceError,
    TopOfBook,
    apply_quote,
    compute_nbbo,
    count_states,
    stream_nbbo,
)
from .sim import (
    ConfigError,
    ConsolidationResult,
    IntradayShape,
    LatencyModel,
    LinkLatency,
    SimConfig,
    SymbolActivityProfile,
    UnknownPresetError,
    config_to_text,
    consolidate,
    generate_events,
    load_config,
    parse_config,
    scenario_hash,
    scenario_preset,
)
from .analytics import (
    DegenerateFitError,
    LatencyStat,
    LatencyStatsResult,
    OosReport,
    ReturnsComparison,
    ScatterResult,
    SecondSeries,
    TrendFit,
    WindowCounts,
    box_stats,
    cross_lock_scatter,
    cumulative,
    detect_out_of_sequence,
    ex_trf,
    fit_trend,
    latency_stats,
    latency_window_events,
    latencies,
    oos_diff_series,
    per_second_aggregate,
    record_latency,
    returns_compare,
    spread_histogram,
    spread_histogram_csv,
)

__version__ = "0.1.0"
