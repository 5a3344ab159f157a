"""Tape persistence: fixed-width binary files, CSV interchange, directories.

A tape is stored columnar in a numpy structured array whose dtype mirrors
the on-disk record byte-for-byte, so reading a multi-million-message file
is a single ``np.fromfile`` and analytics run on zero-copy column views.

Binary record layout (little-endian, 48 bytes):

    bytes  0-3   symbol_id   u32
    byte   4     msg_kind    u8   (0=trade, 1=bid quote, 2=ask quote)
    byte   5     exchange_id u8
    bytes  6-7   reserved (zero)
    bytes  8-15  price ticks i64
    bytes 16-19  size shares u32
    bytes 20-23  reserved (zero)
    bytes 24-31  exchange_ts u64  (microseconds since 04:00)
    bytes 32-39  sip_ts      u64
    bytes 40-47  sip_seq     u64

Header (64 bytes): magic "NMSTAPE1", version u16, 6 pad bytes,
record_count u64, symbol_directory_offset u64 (reserved, written 0;
the directory ships as a sibling CSV), scenario_hash (32 bytes).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import (
    DEFAULT_EXCHANGES,
    EXCHANGE_BY_ABBREV,
    SESSION_END_US,
    Listing,
    MsgKind,
    SymbolDirectory,
    SymbolInfo,
    TapeRecord,
    price_from_decimal,
    price_to_decimal,
)

MAGIC = b"NMSTAPE1"
FORMAT_VERSION = 1
HEADER_SIZE = 64
RECORD_SIZE = 48
CAPTURE_HASH = bytes(32)  # scenario hash used for imported (captured) data

RECORD_DTYPE = np.dtype(
    [
        ("symbol_id", "<u4"),
        ("msg_kind", "u1"),
        ("exchange_id", "u1"),
        ("pad0", "<u2"),
        ("price", "<i8"),
        ("size", "<u4"),
        ("pad1", "<u4"),
        ("exchange_ts", "<u8"),
        ("sip_ts", "<u8"),
        ("sip_seq", "<u8"),
    ]
)
assert RECORD_DTYPE.itemsize == RECORD_SIZE

_HEADER_STRUCT = struct.Struct("<8sH6xQQ32s")
assert _HEADER_STRUCT.size == HEADER_SIZE


class TapeFormatError(Exception):
    """Base class for structural tape-file problems."""


class BadMagicError(TapeFormatError):
    pass


class VersionMismatchError(TapeFormatError):
    pass


class TruncatedFileError(TapeFormatError):
    pass


class TapeOrderingError(ValueError):
    """Records handed to write_tape violate the per-SIP ordering contract."""


class CsvImportError(ValueError):
    """A CSV interchange row could not be converted; carries the line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TapeFileHeader:
    magic: bytes
    format_version: int
    record_count: int
    symbol_directory_offset: int
    scenario_hash: bytes


@dataclass(frozen=True)
class TapeViolation:
    """A semantic anomaly found while validating records (data, not a bug)."""

    index: int
    code: str
    message: str


class Tape:
    """A sequence of tape records backed by a structured numpy array."""

    def __init__(self, data: np.ndarray):
        if data.dtype != RECORD_DTYPE:
            raise TypeError("Tape requires the canonical record dtype")
        self.data = data

    @classmethod
    def empty(cls) -> "Tape":
        return cls(np.empty(0, dtype=RECORD_DTYPE))

    @classmethod
    def from_records(cls, records) -> "Tape":
        records = list(records)
        data = np.zeros(len(records), dtype=RECORD_DTYPE)
        for i, r in enumerate(records):
            data[i] = (r.symbol_id, r.msg_kind, r.exchange_id, 0, r.price,
                       r.size, 0, r.exchange_ts, r.sip_ts, r.sip_seq)
        return cls(data)

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, i) -> TapeRecord:
        if isinstance(i, slice):
            return Tape(self.data[i])
        row = self.data[int(i)]
        return TapeRecord(
            symbol_id=int(row["symbol_id"]),
            msg_kind=MsgKind(int(row["msg_kind"])),
            exchange_id=int(row["exchange_id"]),
            price=int(row["price"]),
            size=int(row["size"]),
            exchange_ts=int(row["exchange_ts"]),
            sip_ts=int(row["sip_ts"]),
            sip_seq=int(row["sip_seq"]),
        )

    def __iter__(self):
        for i in range(len(self.data)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tape):
            return NotImplemented
        return len(self.data) == len(other.data) and bool(
            np.array_equal(self.data, other.data)
        )

    # Column views (int64 for safe arithmetic on timestamps/prices).
    @property
    def symbol_id(self) -> np.ndarray:
        return self.data["symbol_id"]

    @property
    def msg_kind(self) -> np.ndarray:
        return self.data["msg_kind"]

    @property
    def exchange_id(self) -> np.ndarray:
        return self.data["exchange_id"]

    @property
    def price(self) -> np.ndarray:
        return self.data["price"]

    @property
    def size(self) -> np.ndarray:
        return self.data["size"]

    @property
    def exchange_ts(self) -> np.ndarray:
        return self.data["exchange_ts"].astype(np.int64)

    @property
    def sip_ts(self) -> np.ndarray:
        return self.data["sip_ts"].astype(np.int64)

    @property
    def sip_seq(self) -> np.ndarray:
        return self.data["sip_seq"].astype(np.int64)

    def select(self, mask: np.ndarray) -> "Tape":
        return Tape(self.data[mask])

    def filter(self, symbol_id=None, kinds=None, exchange_id=None) -> "Tape":
        mask = np.ones(len(self.data), dtype=bool)
        if symbol_id is not None:
            mask &= self.data["symbol_id"] == symbol_id
        if kinds is not None:
            kind_vals = [int(k) for k in kinds]
            mask &= np.isin(self.data["msg_kind"], kind_vals)
        if exchange_id is not None:
            mask &= self.data["exchange_id"] == exchange_id
        return self.select(mask)

    def trades(self, symbol_id=None) -> "Tape":
        return self.filter(symbol_id=symbol_id, kinds=(MsgKind.TRADE,))

    def quotes(self, symbol_id=None) -> "Tape":
        return self.filter(symbol_id=symbol_id,
                           kinds=(MsgKind.BID_QUOTE, MsgKind.ASK_QUOTE))

    def validate(self, registry=DEFAULT_EXCHANGES) -> list[TapeViolation]:
        """Report semantic anomalies without raising.

        Negative latency and TRF-sourced quotes are data to study, not
        structural corruption; callers get indices so they can drill in.
        """
        out: list[TapeViolation] = []
        sip_ts = self.sip_ts
        exch_ts = self.exchange_ts
        for i in np.flatnonzero(sip_ts < exch_ts):
            out.append(TapeViolation(int(i), "negative_latency",
                                     "sip_ts earlier than exchange_ts"))
        no_quotes = np.array([not e.quotes_allowed for e in registry], dtype=bool)
        kinds = self.data["msg_kind"]
        is_quote = kinds != int(MsgKind.TRADE)
        bad_venue = no_quotes[self.data["exchange_id"]]
        for i in np.flatnonzero(is_quote & bad_venue):
            out.append(TapeViolation(int(i), "trf_quote",
                                     "quote carries a trade-reporting venue"))
        if len(self.data) > 1:
            # Within a SIP group (sequence still climbing), report time
            # must not run backwards. A sequence reset marks a new group.
            seq_up = np.diff(self.sip_seq) > 0
            ts_back = np.diff(sip_ts) < 0
            for i in np.flatnonzero(seq_up & ts_back):
                out.append(TapeViolation(int(i) + 1, "sip_ts_regression",
                                         "sip_ts decreases along sip_seq"))
        out.sort(key=lambda v: v.index)
        return out


@dataclass(frozen=True)
class TapeReadResult:
    tape: Tape
    header: TapeFileHeader
    violations: list[TapeViolation]


def _as_array(records) -> np.ndarray:
    if isinstance(records, Tape):
        return records.data
    if isinstance(records, np.ndarray):
        if records.dtype != RECORD_DTYPE:
            raise TypeError("array input must use the canonical record dtype")
        return records
    return Tape.from_records(records).data


def _check_ordering(data: np.ndarray, directory: SymbolDirectory | None) -> None:
    if len(data) < 2:
        return
    seq = data["sip_seq"].astype(np.int64)
    if directory is None:
        if np.any(np.diff(seq) <= 0):
            raise TapeOrderingError("sip_seq not strictly increasing")
        return
    # Grouped-by-SIP file: each SIP's records must be contiguous and
    # strictly increasing in sip_seq within the group.
    sip_of_symbol = np.array([int(s.sip) for s in directory], dtype=np.int64)
    sips = sip_of_symbol[data["symbol_id"]]
    change = np.flatnonzero(np.diff(sips) != 0)
    groups_seen = []
    start = 0
    for edge in list(change + 1) + [len(data)]:
        g = int(sips[start])
        if g in groups_seen:
            raise TapeOrderingError("records not grouped contiguously by SIP")
        groups_seen.append(g)
        if np.any(np.diff(seq[start:edge]) <= 0):
            raise TapeOrderingError(
                f"sip_seq not strictly increasing within SIP group {g}")
        start = edge


def write_tape(records, path, *, scenario_hash: bytes = CAPTURE_HASH,
               directory: SymbolDirectory | None = None) -> int:
    """Write records to a tape file; returns the record count written.

    Input must be grouped by SIP with strictly increasing sip_seq inside
    each group. Files holding a single SIP (the normal case) need no
    directory; pass one to validate a multi-SIP file's grouping.
    """
    data = _as_array(records)
    _check_ordering(data, directory)
    if len(scenario_hash) != 32:
        raise ValueError("scenario_hash must be exactly 32 bytes")
    path = Path(path)
    header = _HEADER_STRUCT.pack(MAGIC, FORMAT_VERSION, len(data), 0,
                                 scenario_hash)
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes())
    expected = HEADER_SIZE + RECORD_SIZE * len(data)
    actual = path.stat().st_size
    if actual != expected:
        raise IOError(f"tape size check failed: {actual} != {expected}")
    return len(data)


def read_tape(path) -> TapeReadResult:
    """Read a tape file back into a Tape, validating as it goes.

    Structural corruption (magic, version, truncation) raises; semantic
    anomalies come back in the violations list with record indices.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: shorter than the 64-byte header")
    magic, version, count, dir_offset, scen_hash = _HEADER_STRUCT.unpack(
        raw[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, "
                                   f"expected {FORMAT_VERSION}")
    body = raw[HEADER_SIZE:HEADER_SIZE + count * RECORD_SIZE]
    if len(body) != count * RECORD_SIZE:
        raise TruncatedFileError(
            f"{path}: header promises {count} records, body holds "
            f"{len(body) // RECORD_SIZE}")
    data = np.frombuffer(body, dtype=RECORD_DTYPE).copy()
    header = TapeFileHeader(magic, version, int(count), int(dir_offset),
                            scen_hash)
    tape = Tape(data)
    return TapeReadResult(tape, header, tape.validate())


# ---------------------------------------------------------------------------
# CSV interchange (human-inspectable: tickers and decimal prices)

CSV_COLUMNS = ["ticker", "kind", "exchange_abbrev", "price_decimal", "size",
               "exchange_ts_us", "sip_ts_us"]

_KIND_TO_LETTER = {MsgKind.TRADE: "T", MsgKind.BID_QUOTE: "B",
                   MsgKind.ASK_QUOTE: "A"}
_LETTER_TO_KIND = {v: k for k, v in _KIND_TO_LETTER.items()}


def export_csv(records, path, directory: SymbolDirectory) -> int:
    """Write the interchange CSV for a record sequence; returns row count."""
    data = _as_array(records)
    abbrevs = [e.abbreviation for e in DEFAULT_EXCHANGES]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in data:
            w.writerow([
                directory.ticker_of(int(row["symbol_id"])),
                _KIND_TO_LETTER[MsgKind(int(row["msg_kind"]))],
                abbrevs[int(row["exchange_id"])],
                price_to_decimal(int(row["price"])),
                int(row["size"]),
                int(row["exchange_ts"]),
                int(row["sip_ts"]),
            ])
    return len(data)


def import_csv(path, directory: SymbolDirectory) -> Tape:
    """Read interchange CSV rows into a Tape.

    sip_seq is assigned 1,2,... per SIP in row order, so exporting a
    canonically-sequenced tape and importing it is the identity. Raises
    CsvImportError naming the offending line for unknown tickers,
    malformed rows, and out-of-session timestamps.
    """
    rows = []
    seq_counters = {0: 0, 1: 0, 2: 0}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CSV_COLUMNS:
            raise CsvImportError(1, f"expected header {','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise CsvImportError(lineno,
                                     f"expected {len(CSV_COLUMNS)} fields, "
                                     f"got {len(row)}")
            ticker, kind_s, abbrev, price_s, size_s, ets_s, sts_s = (
                c.strip() for c in row)
            try:
                sym = directory.by_ticker(ticker)
            except KeyError:
                raise CsvImportError(lineno, f"unknown ticker {ticker!r}") from None
            if kind_s not in _LETTER_TO_KIND:
                raise CsvImportError(lineno, f"unknown kind {kind_s!r}")
            if abbrev not in EXCHANGE_BY_ABBREV:
                raise CsvImportError(lineno, f"unknown exchange {abbrev!r}")
            try:
                price = price_from_decimal(price_s)
                size = int(size_s)
                ets = int(ets_s)
                sts = int(sts_s)
            except ValueError as e:
                raise CsvImportError(lineno, str(e)) from None
            if size < 0:
                raise CsvImportError(lineno, f"negative size {size}")
            for label, ts in (("exchange_ts_us", ets), ("sip_ts_us", sts)):
                if not 0 <= ts < SESSION_END_US:
                    raise CsvImportError(
                        lineno, f"{label} {ts} outside the trading session")
            sip = int(sym.sip)
            seq_counters[sip] += 1
            rows.append((sym.id, int(_LETTER_TO_KIND[kind_s]),
                         EXCHANGE_BY_ABBREV[abbrev].id, 0, price, size, 0,
                         ets, sts, seq_counters[sip]))
    data = np.array(rows, dtype=RECORD_DTYPE) if rows else np.empty(
        0, dtype=RECORD_DTYPE)
    return Tape(data)


# ---------------------------------------------------------------------------
# Symbol directory CSV: ticker, symbol_id, listing_group, penny_flag

DIRECTORY_COLUMNS = ["ticker", "symbol_id", "listing_group", "penny_flag"]


def save_directory(directory: SymbolDirectory, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DIRECTORY_COLUMNS)
        for s in directory:
            w.writerow([s.ticker, s.id, s.listing.name, int(s.penny_flag)])


def load_directory(path) -> SymbolDirectory:
    symbols = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != DIRECTORY_COLUMNS:
            raise ValueError(f"{path}: expected header "
                             f"{','.join(DIRECTORY_COLUMNS)}")
        for row in reader:
            if not row:
                continue
            ticker, sid, listing, penny = (c.strip() for c in row)
            symbols.append(SymbolInfo(int(sid), ticker, Listing[listing],
                                      bool(int(penny))))
    return SymbolDirectory(symbols)
