"""Site-signal ingestion and panel construction.

Raw inputs are a site listing (url, country, and the rank/trend/traffic
signals, any of which may be blank) plus a per-country indicator table.
The pipeline keeps complete records only (listwise deletion), z-scores each
signal column, averages them into a single attractiveness score per site,
and joins the origin country's unemployment rate to produce the two-column
modeling panel.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import ConfigError, IntegrityError, JoinError, NormalizationError, ParseError

__all__ = [
    "CountryIndicator",
    "PanelDataset",
    "PanelRow",
    "PanelSummary",
    "ReplayFetcher",
    "SignalFetcher",
    "SiteRecord",
    "SIGNAL_FIELDS",
    "build_panel",
    "describe_panel",
    "fetch_signals",
    "format_panel_summary",
    "ingest_sites",
    "listwise_delete",
    "normalize_and_score",
    "read_indicators",
    "read_panel_csv",
    "read_records_json",
    "write_panel_csv",
    "write_records_json",
]

logger = logging.getLogger(__name__)

SIGNAL_FIELDS = ("rank", "trend", "traffic")
SITES_HEADER = ["url", "country", "rank", "trend", "traffic"]
INDICATORS_HEADER = ["country", "unemployment_rate"]
PANEL_HEADER = ["url", "country", "score", "unemployment_rate"]
RECORDS_SCHEMA = "site-records/1"

# ISO 3166 user-assigned code, used when a fetcher cannot supply a country.
UNKNOWN_COUNTRY = "ZZ"

_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")
# Only the empty cell means missing; explicit placeholder tokens are rejected.
_FORBIDDEN_MISSING_TOKENS = {"na", "n/a", "null", "none", "nan"}


@dataclass(frozen=True)
class SiteRecord:
    """One employment website with its raw multi-source signals.

    rank is a site ranking where lower means more attractive; trend and
    traffic are non-negative magnitudes. Any signal may be missing (None).
    """

    url: str
    country_code: str
    rank: int | None = None
    trend: float | None = None
    traffic: float | None = None

    def __post_init__(self) -> None:
        if not self.url:
            raise ValueError("url must be non-empty")
        if self.url != self.url.lower():
            raise ValueError(f"url must be lowercase-normalized: {self.url!r}")
        if not _COUNTRY_RE.match(self.country_code):
            raise ValueError(f"country_code must be 2 uppercase letters: {self.country_code!r}")
        if self.rank is not None and (not isinstance(self.rank, int) or self.rank < 1):
            raise ValueError(f"rank must be a positive integer: {self.rank!r}")
        for name in ("trend", "traffic"):
            value = getattr(self, name)
            if value is not None and (not np.isfinite(value) or value < 0):
                raise ValueError(f"{name} must be non-negative and finite: {value!r}")

    def missing_signals(self) -> tuple[str, ...]:
        return tuple(name for name in SIGNAL_FIELDS if getattr(self, name) is None)

    def is_complete(self) -> bool:
        return not self.missing_signals()


@dataclass(frozen=True)
class CountryIndicator:
    """A country's unemployment rate in percent."""

    country_code: str
    unemployment_rate: float

    def __post_init__(self) -> None:
        if not _COUNTRY_RE.match(self.country_code):
            raise ValueError(f"country_code must be 2 uppercase letters: {self.country_code!r}")
        rate = float(self.unemployment_rate)
        if not (0.0 <= rate <= 100.0):
            raise ValueError(f"unemployment_rate must lie in [0, 100]: {rate!r}")


@dataclass(frozen=True)
class PanelRow:
    url: str
    country_code: str
    score: float
    unemployment_rate: float

    def __post_init__(self) -> None:
        if not self.url:
            raise ValueError("url must be non-empty")
        if not _COUNTRY_RE.match(self.country_code):
            raise ValueError(f"country_code must be 2 uppercase letters: {self.country_code!r}")
        if not np.isfinite(self.score) or not np.isfinite(self.unemployment_rate):
            raise ValueError("panel rows must not contain missing values")


@dataclass(frozen=True)
class PanelDataset:
    """The cleaned two-column panel plus provenance counts."""

    rows: tuple[PanelRow, ...]
    raw_count: int
    clean_count: int
    dropped_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.raw_count != self.clean_count + self.dropped_count:
            raise ValueError(
                f"provenance mismatch: raw {self.raw_count} != clean {self.clean_count} "
                f"+ dropped {self.dropped_count}"
            )
        if min(self.raw_count, self.clean_count, self.dropped_count) < 0:
            raise ValueError("provenance counts must be non-negative")

    @property
    def n(self) -> int:
        return len(self.rows)

    def scores(self) -> np.ndarray:
        return np.array([row.score for row in self.rows])

    def rates(self) -> np.ndarray:
        return np.array([row.unemployment_rate for row in self.rows])


class SignalFetcher(Protocol):
    """Source of per-site signals, standing in for third-party ranking services."""

    def fetch(self, url: str) -> dict:
        """Return values for one site, keys among {"country", "rank", "trend",
        "traffic"}; omitted or null keys mean the signal is unavailable."""
        ...


class ReplayFetcher:
    """Replays signals recorded in a JSON fixture.

    The fixture maps url -> {rank, trend, traffic[, country]} with null for
    missing values. Urls absent from the fixture fetch as all-missing.
    """

    def __init__(self, path) -> None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"replay fixture not found: {path}")
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"replay fixture is not valid JSON: {path}: {exc}") from exc
        if not isinstance(table, dict) or not all(isinstance(v, dict) for v in table.values()):
            raise ConfigError(f"replay fixture must map url -> signal object: {path}")
        self._table = {url.lower(): dict(entry) for url, entry in table.items()}

    def fetch(self, url: str) -> dict:
        return self._table.get(url.lower(), {})


def _coerce_fetched(url: str, raw: dict) -> SiteRecord:
    """Build a record from fetcher output; unusable values become missing."""
    country = raw.get("country")
    if not (isinstance(country, str) and _COUNTRY_RE.match(country)):
        country = UNKNOWN_COUNTRY
    values: dict = {}
    for name in SIGNAL_FIELDS:
        value = raw.get(name)
        if value is None:
            values[name] = None
            continue
        try:
            if name == "rank":
                value = int(value)
                if value < 1:
                    raise ValueError(value)
            else:
                value = float(value)
                if not np.isfinite(value) or value < 0:
                    raise ValueError(value)
        except (TypeError, ValueError):
            logger.warning("discarding unusable %s=%r fetched for %s", name, raw.get(name), url)
            value = None
        values[name] = value
    return SiteRecord(url=url, country_code=country, **values)


def fetch_signals(
    urls: Sequence[str], fetcher: SignalFetcher, max_workers: int = 1
) -> list[SiteRecord]:
    """Fetch signals for each url; failures yield missing fields, never aborts.

    Output is ordered by url ascending regardless of completion order, so
    downstream stages see a deterministic batch.
    """
    normalized = [url.lower() for url in urls]
    seen: set[str] = set()
    for url in normalized:
        if url in seen:
            raise IntegrityError(f"duplicate url in fetch batch: {url}")
        seen.add(url)
    if not normalized:
        return []

    def fetch_one(url: str) -> SiteRecord:
        try:
            raw = fetcher.fetch(url)
        except Exception as exc:  # per-site failures degrade to missing signals
            logger.warning("fetch failed for %s: %s", url, exc)
            raw = {}
        if not isinstance(raw, dict):
            logger.warning("fetcher returned non-mapping for %s; treating as missing", url)
            raw = {}
        return _coerce_fetched(url, raw)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(fetch_one, normalized))
    else:
        records = [fetch_one(url) for url in normalized]
    return sorted(records, key=lambda rec: rec.url)


def _parse_cell(token: str, name: str, line_no: int, caster):
    token = token.strip()
    if token == "":
        return None
    if token.lower() in _FORBIDDEN_MISSING_TOKENS:
        raise ParseError(
            f"line {line_no}: {name} uses placeholder {token!r}; missing cells must be empty"
        )
    try:
        return caster(token)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: cannot parse {name} from {token!r}") from exc


def ingest_sites(path) -> list[SiteRecord]:
    """Read the site listing CSV: header url,country,rank,trend,traffic.

    Blank cells become missing fields; urls are lowercase-normalized and
    must be unique.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"sites file not found: {path}")
    records: list[SiteRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SITES_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(SITES_HEADER)!r}, got {header!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(SITES_HEADER):
                raise ParseError(f"line {line_no}: expected {len(SITES_HEADER)} cells, got {len(row)}")
            url = row[0].strip().lower()
            country = row[1].strip()
            try:
                record = SiteRecord(
                    url=url,
                    country_code=country,
                    rank=_parse_cell(row[2], "rank", line_no, int),
                    trend=_parse_cell(row[3], "trend", line_no, float),
                    traffic=_parse_cell(row[4], "traffic", line_no, float),
                )
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc
            if url in seen:
                raise IntegrityError(
                    f"duplicate url {url!r} (lines {seen[url]} and {line_no})"
                )
            seen[url] = line_no
            records.append(record)
    return records


def read_indicators(path) -> list[CountryIndicator]:
    """Read the indicator CSV: header country,unemployment_rate (percent)."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"indicators file not found: {path}")
    indicators: list[CountryIndicator] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != INDICATORS_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(INDICATORS_HEADER)!r}, got {header!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"line {line_no}: expected 2 cells, got {len(row)}")
            rate = _parse_cell(row[1], "unemployment_rate", line_no, float)
            if rate is None:
                raise ParseError(f"line {line_no}: unemployment_rate must not be blank")
            try:
                indicator = CountryIndicator(country_code=row[0].strip(), unemployment_rate=rate)
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc
            if indicator.country_code in seen:
                raise IntegrityError(f"duplicate country {indicator.country_code!r} at line {line_no}")
            seen.add(indicator.country_code)
            indicators.append(indicator)
    return indicators


def listwise_delete(records: Iterable[SiteRecord]) -> tuple[list[SiteRecord], int]:
    """Keep only records with all three signals present; order preserved."""
    kept: list[SiteRecord] = []
    dropped = 0
    for record in records:
        missing = record.missing_signals()
        if missing:
            dropped += 1
            logger.debug("dropping %s: missing %s", record.url, ", ".join(missing))
        else:
            kept.append(record)
    if dropped:
        logger.info("listwise deletion dropped %d of %d records", dropped, dropped + len(kept))
    return kept, dropped


def normalize_and_score(
    records: Sequence[SiteRecord], signals: Sequence[str] = SIGNAL_FIELDS
) -> list[tuple[str, float]]:
    """Standardize each signal column and average into one score per site.

    rank is negated before standardization so that larger always means a
    more attractive site; each column is centered and divided by its sample
    standard deviation, making scores invariant to the signals' units.
    """
    if len(records) < 2:
        raise ValueError("need at least two complete records to standardize")
    unknown = [s for s in signals if s not in SIGNAL_FIELDS]
    if unknown:
        raise ValueError(f"unknown signal columns: {unknown}")
    columns = {}
    for name in signals:
        values = []
        for record in records:
            value = getattr(record, name)
            if value is None:
                raise ValueError(f"record {record.url} is missing {name}; run listwise deletion first")
            values.append(float(value))
        col = np.array(values)
        if name == "rank":
            col = -col
        columns[name] = col
    z_cols = []
    for name, col in columns.items():
        std = col.std(ddof=1)
        if std == 0.0:
            raise NormalizationError(f"signal column {name!r} has zero variance")
        z_cols.append((col - col.mean()) / std)
    scores = np.mean(z_cols, axis=0)
    return [(record.url, float(score)) for record, score in zip(records, scores)]


def build_panel(
    scored: Sequence[tuple[str, float]],
    sites: Sequence[SiteRecord],
    indicators: Sequence[CountryIndicator],
    country_mean: bool = False,
) -> PanelDataset:
    """Join site scores with their country's unemployment rate.

    Each row repeats its country's single rate; rows are sorted by url.
    country_mean=True instead aggregates scores to one row per country
    (sensitivity-analysis mode).
    """
    by_url = {site.url: site for site in sites}
    rate_by_country = {ind.country_code: ind.unemployment_rate for ind in indicators}
    unknown_urls = [url for url, _ in scored if url not in by_url]
    if unknown_urls:
        raise ValueError(f"scored urls missing from the site listing: {sorted(unknown_urls)}")
    missing_countries = sorted(
        {by_url[url].country_code for url, _ in scored}
        - set(rate_by_country)
    )
    if missing_countries:
        raise JoinError(
            "countries missing from the indicator table: " + ", ".join(missing_countries)
        )
    raw_count = len(sites)
    clean_count = len(scored)
    if country_mean:
        grouped: dict[str, list[float]] = {}
        for url, score in scored:
            grouped.setdefault(by_url[url].country_code, []).append(score)
        rows = [
            PanelRow(
                url=f"{code.lower()}.country-mean",
                country_code=code,
                score=float(np.mean(values)),
                unemployment_rate=rate_by_country[code],
            )
            for code, values in grouped.items()
        ]
    else:
        rows = [
            PanelRow(
                url=url,
                country_code=by_url[url].country_code,
                score=score,
                unemployment_rate=rate_by_country[by_url[url].country_code],
            )
            for url, score in scored
        ]
    rows.sort(key=lambda row: row.url)
    return PanelDataset(
        rows=tuple(rows),
        raw_count=raw_count,
        clean_count=clean_count,
        dropped_count=raw_count - clean_count,
    )


@dataclass(frozen=True)
class PanelSummary:
    """Descriptive statistics block for a panel; None marks not-applicable."""

    site_count_raw: int
    site_count_clean: int
    rate_mean: float
    rate_std: float | None
    rank_mean: float | None
    rank_std: float | None


def describe_panel(
    panel: PanelDataset, complete_sites: Sequence[SiteRecord] | None = None
) -> PanelSummary:
    """Counts plus mean/sample-std of the rate column and the raw rank column.

    Rank statistics come from the complete (post-deletion) records whose
    columns fed normalization; when those are not supplied the rank fields
    are reported as not-applicable.
    """
    if panel.n == 0:
        raise ValueError("cannot describe an empty panel")
    rates = panel.rates()
    rate_std = float(rates.std(ddof=1)) if rates.size >= 2 else None
    rank_mean = rank_std = None
    if complete_sites:
        ranks = np.array([float(site.rank) for site in complete_sites if site.rank is not None])
        if ranks.size:
            rank_mean = float(ranks.mean())
            rank_std = float(ranks.std(ddof=1)) if ranks.size >= 2 else None
    return PanelSummary(
        site_count_raw=panel.raw_count,
        site_count_clean=panel.clean_count,
        rate_mean=float(rates.mean()),
        rate_std=rate_std,
        rank_mean=rank_mean,
        rank_std=rank_std,
    )


def _fmt_stat(value: float | None, digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def format_panel_summary(summary: PanelSummary) -> str:
    lines = [
        ("Number of web sites", str(summary.site_count_raw)),
        ("Number of web sites after listwise deletion", str(summary.site_count_clean)),
        ("Average unemployment rate", _fmt_stat(summary.rate_mean)),
        ("Std. deviation of unemployment rate", _fmt_stat(summary.rate_std)),
        ("Average web site ranking", _fmt_stat(summary.rank_mean, digits=1)),
        ("Std. deviation of web site ranking", _fmt_stat(summary.rank_std, digits=1)),
    ]
    width = max(len(label) for label, _ in lines)
    return "\n".join(f"{label:<{width}}  {value}" for label, value in lines)


def write_panel_csv(panel: PanelDataset, path) -> None:
    """Write panel rows with full-precision decimal rendering (round-trips)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PANEL_HEADER)
        for row in panel.rows:
            writer.writerow(
                [row.url, row.country_code, repr(row.score), repr(row.unemployment_rate)]
            )


def read_panel_csv(path) -> PanelDataset:
    """Read a panel written by write_panel_csv.

    The file carries rows only, so provenance degenerates to raw == clean.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"panel file not found: {path}")
    rows: list[PanelRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PANEL_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(PANEL_HEADER)!r}, got {header!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"line {line_no}: expected 4 cells, got {len(row)}")
            try:
                rows.append(
                    PanelRow(
                        url=row[0],
                        country_code=row[1],
                        score=float(row[2]),
                        unemployment_rate=float(row[3]),
                    )
                )
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}") from exc
    return PanelDataset(rows=tuple(rows), raw_count=len(rows), clean_count=len(rows), dropped_count=0)


def write_records_json(records: Sequence[SiteRecord], path) -> None:
    payload = {
        "schema": RECORDS_SCHEMA,
        "records": [
            {
                "url": rec.url,
                "country": rec.country_code,
                "rank": rec.rank,
                "trend": rec.trend,
                "traffic": rec.traffic,
            }
            for rec in records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_records_json(path) -> list[SiteRecord]:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"records file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"records file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("schema") != RECORDS_SCHEMA:
        raise ParseError(f"unsupported records document (expected schema {RECORDS_SCHEMA!r})")
    records = []
    for entry in payload.get("records", []):
        try:
            records.append(
                SiteRecord(
                    url=entry["url"],
                    country_code=entry["country"],
                    rank=entry.get("rank"),
                    trend=entry.get("trend"),
                    traffic=entry.get("traffic"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed record entry {entry!r}: {exc}") from exc
    return records
