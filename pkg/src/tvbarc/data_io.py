"""Record ingestion, daily aggregation and the package's file formats.

Formats:
    raw records  CSV with header ``id,timestamp,keyword``, or JSON lines with
                 the same keys
    class map    JSON ``{label: [keyword, ...]}``
    counts       CSV ``date,count`` with consecutive ISO dates
    chain        CSV of retained draws plus a JSON metadata sidecar
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

from .model import CountSeries, ModelSpec
from .sampler import PosteriorChain, SamplerConfig

__all__ = [
    "DataError",
    "RawRecord",
    "KeywordClassMap",
    "AggregationResult",
    "aggregate_daily",
    "parse_timestamp",
    "read_records",
    "write_records_csv",
    "read_counts_csv",
    "write_counts_csv",
    "counts_csv_text",
    "chain_columns",
    "chain_csv_text",
    "chain_metadata",
    "read_chain",
    "TOTAL",
]

TOTAL = "TOTAL"
RECORD_FIELDS = ("id", "timestamp", "keyword")

PathLike = Union[str, Path]


class DataError(ValueError):
    """Malformed input data. ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class RawRecord:
    """One collected post. ``timestamp`` is kept as given and parsed during
    aggregation, so malformed values are counted rather than fatal."""

    id: str
    timestamp: Union[str, dt.datetime]
    keyword: str


def parse_timestamp(value: Union[str, dt.datetime, dt.date]) -> dt.datetime:
    """ISO-8601 text or a datetime, normalised to an aware UTC datetime.

    Naive values are taken to be UTC already; a trailing ``Z`` is accepted.
    """
    if isinstance(value, dt.datetime):
        ts = value
    elif isinstance(value, dt.date):
        ts = dt.datetime(value.year, value.month, value.day)
    else:
        text = str(value).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        ts = dt.datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


@dataclass(frozen=True)
class KeywordClassMap:
    """Class label to keyword list. A record belongs to every class with a
    keyword that is a case-insensitive substring of the record's keyword."""

    classes: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        clean = {}
        for label, words in self.classes.items():
            label = str(label)
            if not label or label == TOTAL:
                raise ValueError(f"invalid class label {label!r}")
            if label in clean:
                raise ValueError(f"duplicate class label {label!r}")
            if isinstance(words, str):
                raise ValueError(f"class {label!r}: keywords must be a list")
            words = tuple(str(w) for w in words)
            if not words or any(not w.strip() for w in words):
                raise ValueError(f"class {label!r} needs non-empty keywords")
            clean[label] = words
        object.__setattr__(self, "classes", clean)
        object.__setattr__(self, "_lowered", {k: tuple(w.lower() for w in v) for k, v in clean.items()})

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.classes)

    def match(self, keyword: str) -> tuple[str, ...]:
        k = keyword.lower()
        return tuple(label for label, words in self._lowered.items() if any(w in k for w in words))

    @classmethod
    def load(cls, path: PathLike) -> "KeywordClassMap":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataError(f"invalid JSON: {e.msg}", path, e.lineno) from None
        if not isinstance(doc, dict):
            raise DataError("class map must be a JSON object", path)
        try:
            return cls(doc)
        except ValueError as e:
            raise DataError(str(e), path) from None

    @classmethod
    def default(cls) -> "KeywordClassMap":
        """The bundled CY / ON / TW partition."""
        text = resources.files("tvbarc").joinpath("data/default_classes.json").read_text(encoding="utf-8")
        return cls(json.loads(text))

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.classes.items()}


@dataclass(frozen=True)
class AggregationResult:
    """Daily series per class plus ``TOTAL``, and bookkeeping counts."""

    series: dict[str, CountSeries]
    n_records: int
    n_rejected: int
    n_duplicates: int
    n_out_of_range: int
    n_unclassified: int
    rejected_ids: tuple[str, ...] = field(default=(), repr=False)

    def __getitem__(self, label: str) -> CountSeries:
        return self.series[label]

    def summary(self) -> dict:
        return {
            "records": self.n_records,
            "rejected": self.n_rejected,
            "duplicates": self.n_duplicates,
            "out_of_range": self.n_out_of_range,
            "unclassified": self.n_unclassified,
            "totals": {k: int(sum(s.counts)) for k, s in self.series.items()},
        }


def aggregate_daily(records: Iterable[RawRecord], start_date: dt.date, end_date: dt.date,
                    classes: KeywordClassMap) -> AggregationResult:
    """Count records per UTC day in ``[start_date, end_date]``.

    Records with an unparseable timestamp are rejected and counted. Among
    records sharing an id, the one with the earliest ``(timestamp, keyword)``
    is kept, which makes the result independent of record order. Days with
    no records are zero. A record counts once in every class it matches and
    once in ``TOTAL``.
    """
    if start_date > end_date:
        raise ValueError(f"start date {start_date} is after end date {end_date}")

    n_records = 0
    rejected = []
    kept: dict[str, tuple[dt.datetime, str]] = {}
    n_dupes = 0
    for r in records:
        n_records += 1
        try:
            ts = parse_timestamp(r.timestamp)
        except (ValueError, TypeError):
            rejected.append(str(r.id))
            continue
        key = (ts, r.keyword)
        prev = kept.get(r.id)
        if prev is None:
            kept[r.id] = key
        else:
            n_dupes += 1
            if key < prev:
                kept[r.id] = key

    n_days = (end_date - start_date).days + 1
    labels = classes.labels
    counts = {label: np.zeros(n_days, dtype=np.int64) for label in (*labels, TOTAL)}
    out_of_range = 0
    unclassified = 0
    for ts, keyword in kept.values():
        day = (ts.date() - start_date).days
        if not 0 <= day < n_days:
            out_of_range += 1
            continue
        counts[TOTAL][day] += 1
        matched = classes.match(keyword)
        if not matched:
            unclassified += 1
        for label in matched:
            counts[label][day] += 1

    series = {label: CountSeries(start_date, tuple(c.tolist()), label) for label, c in counts.items()}
    return AggregationResult(series, n_records, len(rejected), n_dupes, out_of_range, unclassified,
                             tuple(rejected))


# raw records

def read_records(path: PathLike) -> list[RawRecord]:
    """Read raw records from ``.csv`` or ``.jsonl``/``.json`` (JSON lines)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return _read_records_jsonl(path)
    if suffix == ".csv":
        return _read_records_csv(path)
    raise DataError(f"unknown record file type {suffix!r}; expected .csv or .jsonl", path)


def _read_records_csv(path: Path) -> list[RawRecord]:
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip().lower() for h in header]
        missing = [c for c in RECORD_FIELDS if c not in header]
        if missing:
            raise DataError(f"header lacks column(s) {', '.join(missing)}", path, 1)
        idx = [header.index(c) for c in RECORD_FIELDS]
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) < len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", path, reader.line_num)
            out.append(RawRecord(*(row[i] for i in idx)))
    return out


def _read_records_jsonl(path: Path) -> list[RawRecord]:
    out = []
    with path.open(encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"invalid JSON: {e.msg}", path, n) from None
            if not isinstance(obj, dict) or any(k not in obj for k in RECORD_FIELDS):
                raise DataError("record needs keys id, timestamp, keyword", path, n)
            out.append(RawRecord(str(obj["id"]), obj["timestamp"], str(obj["keyword"])))
    return out


def write_records_csv(records: Iterable[RawRecord], path: PathLike) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            ts = r.timestamp.isoformat() if isinstance(r.timestamp, dt.datetime) else r.timestamp
            w.writerow([r.id, ts, r.keyword])


# counts

def counts_csv_text(series: CountSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("date", "count"))
    for t, c in enumerate(series.counts, 1):
        w.writerow((series.date_at(t).isoformat(), c))
    return buf.getvalue()


def write_counts_csv(series: CountSeries, path: PathLike) -> None:
    Path(path).write_text(counts_csv_text(series), encoding="utf-8")


def read_counts_csv(path: PathLike, label: str = "") -> CountSeries:
    """Read a ``date,count`` file. Dates must be consecutive days.

    Raises:
        DataError: naming the offending line for a bad header, date, count
            or a date gap.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "count"]:
            raise DataError("expected header 'date,count'", path, 1)
        start = prev = None
        counts = []
        for row in reader:
            n = reader.line_num
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"expected 2 fields, got {len(row)}", path, n)
            try:
                day = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"invalid date {row[0]!r}", path, n) from None
            text = row[1].strip()
            if not text.isdigit():
                raise DataError(f"count must be a non-negative integer, got {row[1]!r}", path, n)
            if prev is None:
                start = day
            elif day != prev + dt.timedelta(days=1):
                raise DataError(f"date {day} does not follow {prev}", path, n)
            prev = day
            counts.append(int(text))
    if not counts:
        raise DataError("no data rows", path)
    return CountSeries(start, tuple(counts), label or path.stem)


# chains

def chain_columns(spec: ModelSpec) -> list[str]:
    cols = [f"beta_{j + 1}" for j in range(spec.k1)]
    cols += [f"theta_{i + 1}_{j + 1}" for i in range(spec.p) for j in range(spec.k2)]
    cols += [f"delta_{i}" for i in range(spec.p + 1)]
    return cols


def chain_csv_text(chain: PosteriorChain) -> str:
    """One row per retained draw; floats written with ``repr`` so they
    round-trip exactly."""
    n = len(chain)
    flat = np.hstack([chain.beta, chain.theta.reshape(n, -1), chain.delta])
    lines = [",".join(chain_columns(chain.model_spec))]
    lines.extend(",".join(repr(float(v)) for v in row) for row in flat)
    return "\n".join(lines) + "\n"


def chain_metadata(chain: PosteriorChain) -> dict:
    return {
        "model_spec": chain.model_spec.to_dict(),
        "sampler_config": chain.sampler_config.to_dict(),
        "acceptance_rates": chain.acceptance_rates,
        "step_sizes": chain.step_sizes,
        "start_date": chain.start_date.isoformat() if chain.start_date else None,
        "n_obs": chain.n_obs,
        "label": chain.label,
        "n_draws": len(chain),
    }


def read_chain(csv_path: PathLike, meta_path: PathLike) -> PosteriorChain:
    """Inverse of :func:`chain_csv_text` plus :func:`chain_metadata`.

    The log-posterior trace is not stored and comes back as NaN.
    """
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    spec = ModelSpec.from_dict(meta["model_spec"])
    with Path(csv_path).open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != chain_columns(spec):
            raise DataError("chain columns do not match the model spec", csv_path, 1)
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError as e:
            raise DataError(str(e), csv_path, reader.line_num) from None
    flat = np.array(rows, dtype=float).reshape(len(rows), len(header))
    k1, k2, p = spec.k1, spec.k2, spec.p
    n = flat.shape[0]
    return PosteriorChain(
        beta=flat[:, :k1],
        theta=flat[:, k1:k1 + p * k2].reshape(n, p, k2),
        delta=flat[:, k1 + p * k2:],
        model_spec=spec,
        sampler_config=SamplerConfig.from_dict(meta["sampler_config"]),
        acceptance_rates=dict(meta.get("acceptance_rates", {})),
        log_posterior_trace=np.full(n, np.nan),
        step_sizes=dict(meta.get("step_sizes", {})),
        start_date=dt.date.fromisoformat(meta["start_date"]) if meta.get("start_date") else None,
        n_obs=meta.get("n_obs"),
        label=meta.get("label", ""),
    )
