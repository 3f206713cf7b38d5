import json
import math

import numpy as np
import pytest

from jobsignal import (
    CountryIndicator,
    IntegrityError,
    JoinError,
    NormalizationError,
    ParseError,
    SiteRecord,
    build_panel,
    describe_panel,
    fetch_signals,
    ingest_sites,
    listwise_delete,
    normalize_and_score,
)
from jobsignal.datasets import bundled_indicators_path, bundled_sites_path
from jobsignal.pipeline import (
    PanelDataset,
    PanelRow,
    ReplayFetcher,
    format_panel_summary,
    read_indicators,
    read_panel_csv,
    read_records_json,
    write_panel_csv,
    write_records_json,
)


def site(url, country="DE", rank=100, trend=50.0, traffic=1000.0):
    return SiteRecord(url=url, country_code=country, rank=rank, trend=trend, traffic=traffic)


def write_sites(tmp_path, body, name="sites.csv"):
    path = tmp_path / name
    path.write_text("url,country,rank,trend,traffic\n" + body, encoding="utf-8")
    return path


class TestIngest:
    def test_full_row(self, tmp_path):
        path = write_sites(tmp_path, "jobs.example.de,DE,1500,62.0,30000\n")
        records = ingest_sites(path)
        assert records == [
            SiteRecord(url="jobs.example.de", country_code="DE", rank=1500, trend=62.0, traffic=30000.0)
        ]

    def test_blank_cell_is_missing(self, tmp_path):
        path = write_sites(tmp_path, "jobs.example.fr,FR,2000,55.0,\n")
        (record,) = ingest_sites(path)
        assert record.traffic is None
        assert record.missing_signals() == ("traffic",)

    def test_urls_lowercase_normalized(self, tmp_path):
        path = write_sites(tmp_path, "JOBS.Example.AT,AT,10,1.0,2.0\n")
        (record,) = ingest_sites(path)
        assert record.url == "jobs.example.at"

    def test_duplicate_url_rejected(self, tmp_path):
        path = write_sites(
            tmp_path, "jobs.example.de,DE,1,1.0,1.0\nJobs.Example.DE,DE,2,2.0,2.0\n"
        )
        with pytest.raises(IntegrityError, match="jobs.example.de"):
            ingest_sites(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = write_sites(
            tmp_path, "jobs.a.de,DE,1,1.0,1.0\njobs.b.de,DE,badrank,1.0,1.0\n"
        )
        with pytest.raises(ParseError, match="line 3"):
            ingest_sites(path)

    def test_na_token_rejected(self, tmp_path):
        path = write_sites(tmp_path, "jobs.a.de,DE,NA,1.0,1.0\n")
        with pytest.raises(ParseError, match="placeholder"):
            ingest_sites(path)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "sites.csv"
        path.write_text("url,rank\njobs.a.de,1\n", encoding="utf-8")
        with pytest.raises(ParseError, match="header"):
            ingest_sites(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="not found"):
            ingest_sites(tmp_path / "nope.csv")

    def test_bad_country_names_line(self, tmp_path):
        path = write_sites(tmp_path, "jobs.a.de,Germany,1,1.0,1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            ingest_sites(path)


class TestReadIndicators:
    def test_reads_rates(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text("country,unemployment_rate\nDE,5.2\nFR,9.9\n", encoding="utf-8")
        assert read_indicators(path) == [
            CountryIndicator(country_code="DE", unemployment_rate=5.2),
            CountryIndicator(country_code="FR", unemployment_rate=9.9),
        ]

    def test_rate_out_of_range(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text("country,unemployment_rate\nDE,105\n", encoding="utf-8")
        with pytest.raises(ParseError, match="line 2"):
            read_indicators(path)

    def test_duplicate_country(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text("country,unemployment_rate\nDE,5\nDE,6\n", encoding="utf-8")
        with pytest.raises(IntegrityError, match="DE"):
            read_indicators(path)


class TestFetchSignals:
    def fixture_file(self, tmp_path, table):
        path = tmp_path / "fixture.json"
        path.write_text(json.dumps(table), encoding="utf-8")
        return path

    def test_happy_path(self, tmp_path):
        path = self.fixture_file(
            tmp_path,
            {
                "jobs.a.de": {"country": "DE", "rank": 10, "trend": 5.5, "traffic": 100},
                "jobs.b.fr": {"country": "FR", "rank": 20, "trend": 7.5, "traffic": 200},
            },
        )
        records = fetch_signals(["jobs.b.fr", "jobs.a.de"], ReplayFetcher(path))
        assert [r.url for r in records] == ["jobs.a.de", "jobs.b.fr"]
        assert all(r.is_complete() for r in records)
        assert records[0].country_code == "DE"

    def test_partial_failure_keeps_record(self, tmp_path):
        path = self.fixture_file(
            tmp_path, {"jobs.a.de": {"country": "DE", "rank": 10, "trend": 5.5, "traffic": None}}
        )
        (record,) = fetch_signals(["jobs.a.de"], ReplayFetcher(path))
        assert record.missing_signals() == ("traffic",)

    def test_unknown_url_all_missing(self, tmp_path):
        path = self.fixture_file(tmp_path, {})
        (record,) = fetch_signals(["jobs.x.de"], ReplayFetcher(path))
        assert record.missing_signals() == ("rank", "trend", "traffic")
        assert record.country_code == "ZZ"

    def test_empty_url_list(self, tmp_path):
        path = self.fixture_file(tmp_path, {})
        assert fetch_signals([], ReplayFetcher(path)) == []

    def test_fetcher_exception_degrades_to_missing(self):
        class Exploding:
            def fetch(self, url):
                raise RuntimeError("boom")

        (record,) = fetch_signals(["jobs.a.de"], Exploding())
        assert record.missing_signals() == ("rank", "trend", "traffic")

    def test_missing_fixture_is_config_error(self, tmp_path):
        from jobsignal import ConfigError

        with pytest.raises(ConfigError, match="not found"):
            ReplayFetcher(tmp_path / "absent.json")

    def test_corrupt_fixture_is_config_error(self, tmp_path):
        from jobsignal import ConfigError

        path = tmp_path / "fixture.json"
        path.write_text("[1, 2, 3]", encoding="utf-8")
        with pytest.raises(ConfigError, match="map url"):
            ReplayFetcher(path)

    def test_duplicate_urls_rejected(self, tmp_path):
        path = self.fixture_file(tmp_path, {})
        with pytest.raises(IntegrityError, match="duplicate"):
            fetch_signals(["jobs.a.de", "JOBS.A.DE"], ReplayFetcher(path))

    def test_concurrent_fetch_same_output(self, tmp_path):
        table = {
            f"jobs.{i:02d}.de": {"country": "DE", "rank": i + 1, "trend": float(i), "traffic": 10.0 * i}
            for i in range(20)
        }
        path = self.fixture_file(tmp_path, table)
        urls = list(table)[::-1]
        serial = fetch_signals(urls, ReplayFetcher(path), max_workers=1)
        threaded = fetch_signals(urls, ReplayFetcher(path), max_workers=8)
        assert serial == threaded

    def test_invalid_fetched_value_becomes_missing(self, tmp_path):
        path = self.fixture_file(
            tmp_path, {"jobs.a.de": {"country": "DE", "rank": 0, "trend": -3, "traffic": 5}}
        )
        (record,) = fetch_signals(["jobs.a.de"], ReplayFetcher(path))
        assert record.missing_signals() == ("rank", "trend")


class TestListwiseDelete:
    def test_incomplete_record_dropped(self):
        dirty = SiteRecord(url="jobs.a.de", country_code="DE", rank=1, trend=2.0, traffic=None)
        kept, dropped = listwise_delete([dirty])
        assert kept == [] and dropped == 1

    def test_complete_record_kept(self):
        clean = site("jobs.a.de")
        kept, dropped = listwise_delete([clean])
        assert kept == [clean] and dropped == 0

    def test_bundled_fixture_counts(self):
        records = ingest_sites(bundled_sites_path())
        assert len(records) == 427
        kept, dropped = listwise_delete(records)
        assert len(kept) == 382
        assert dropped == 45

    def test_idempotent(self):
        records = [site("jobs.a.de"), SiteRecord(url="jobs.b.de", country_code="DE")]
        once, dropped_once = listwise_delete(records)
        twice, dropped_twice = listwise_delete(once)
        assert once == twice and dropped_twice == 0

    def test_order_preserved_and_complete(self):
        records = [
            site("jobs.c.de"),
            SiteRecord(url="jobs.x.de", country_code="DE", rank=1),
            site("jobs.a.de"),
        ]
        kept, _ = listwise_delete(records)
        assert [r.url for r in kept] == ["jobs.c.de", "jobs.a.de"]
        for record in kept:
            assert record.rank is not None
            assert record.trend is not None
            assert record.traffic is not None


class TestNormalizeAndScore:
    def test_two_record_hand_values(self):
        records = [
            site("jobs.a.de", rank=1, trend=10.0, traffic=100.0),
            site("jobs.b.de", rank=3, trend=20.0, traffic=300.0),
        ]
        scored = normalize_and_score(records)
        s = math.sqrt(2.0) / 6.0
        # Record a wins on (negated) rank but loses on trend and traffic.
        assert scored[0][0] == "jobs.a.de"
        assert scored[0][1] == pytest.approx(-s, abs=1e-12)
        assert scored[1][1] == pytest.approx(+s, abs=1e-12)

    def test_scores_center_on_zero(self, rng):
        records = [
            site(f"jobs.{i}.de", rank=int(rng.integers(1, 10**7)),
                 trend=float(rng.uniform(0, 100)), traffic=float(rng.uniform(0, 10**6)))
            for i in range(40)
        ]
        scores = np.array([score for _, score in normalize_and_score(records)])
        assert abs(scores.mean()) < 1e-9

    def test_identical_records_zero_variance(self):
        records = [site("jobs.a.de"), site("jobs.b.de")]
        with pytest.raises(NormalizationError, match="rank"):
            normalize_and_score(records)

    def test_zero_variance_names_column(self):
        records = [
            site("jobs.a.de", rank=1, trend=7.0, traffic=10.0),
            site("jobs.b.de", rank=2, trend=7.0, traffic=20.0),
        ]
        with pytest.raises(NormalizationError, match="trend"):
            normalize_and_score(records)

    def test_needs_two_records(self):
        with pytest.raises(ValueError, match="two"):
            normalize_and_score([site("jobs.a.de")])

    def test_incomplete_record_rejected(self):
        records = [site("jobs.a.de"), SiteRecord(url="jobs.b.de", country_code="DE", rank=2)]
        with pytest.raises(ValueError, match="missing"):
            normalize_and_score(records)

    def test_scale_invariance_per_column(self, rng):
        records = []
        for i in range(25):
            records.append(
                site(f"jobs.{i}.de", rank=int(rng.integers(1, 10**6)),
                     trend=float(rng.uniform(0, 100)), traffic=float(rng.uniform(10, 10**5)))
            )
        base = np.array([s for _, s in normalize_and_score(records)])
        for field, factor in (("rank", 1000), ("trend", 1000.0), ("traffic", 0.001)):
            scaled_records = []
            for record in records:
                values = {f: getattr(record, f) for f in ("rank", "trend", "traffic")}
                values[field] = type(values[field])(values[field] * factor)
                scaled_records.append(SiteRecord(url=record.url, country_code="DE", **values))
            scaled = np.array([s for _, s in normalize_and_score(scaled_records)])
            assert np.abs(scaled - base).max() < 1e-9

    def test_signal_subset(self):
        records = [
            SiteRecord(url="jobs.a.de", country_code="DE", rank=1, trend=10.0),
            SiteRecord(url="jobs.b.de", country_code="DE", rank=3, trend=20.0),
        ]
        scored = normalize_and_score(records, signals=("rank", "trend"))
        assert scored[0][1] == pytest.approx(0.0, abs=1e-12)


class TestBuildPanel:
    def indicators(self):
        return [
            CountryIndicator(country_code="DE", unemployment_rate=5.0),
            CountryIndicator(country_code="FR", unemployment_rate=10.0),
        ]

    def test_fan_out_join(self):
        sites = [site("jobs.a.de"), site("jobs.b.de"), site("jobs.c.fr", country="FR")]
        scored = [("jobs.a.de", 0.1), ("jobs.b.de", -0.1), ("jobs.c.fr", 0.0)]
        panel = build_panel(scored, sites, self.indicators())
        assert panel.n == 3
        assert [row.unemployment_rate for row in panel.rows] == [5.0, 5.0, 10.0]

    def test_missing_country_join_error(self):
        sites = [site("jobs.a.xx", country="XX")]
        with pytest.raises(JoinError, match="XX"):
            build_panel([("jobs.a.xx", 0.0)], sites, self.indicators())

    def test_empty_scored_list(self):
        panel = build_panel([], [site("jobs.a.de")], self.indicators())
        assert panel.n == 0
        assert panel.clean_count == 0
        assert panel.raw_count == 1
        assert panel.dropped_count == 1

    def test_rows_sorted_by_url(self):
        sites = [site("jobs.z.de"), site("jobs.a.de")]
        panel = build_panel([("jobs.z.de", 1.0), ("jobs.a.de", -1.0)], sites, self.indicators())
        assert [row.url for row in panel.rows] == ["jobs.a.de", "jobs.z.de"]

    def test_provenance_conservation(self):
        sites = [
            site("jobs.a.de", rank=10, trend=1.0, traffic=100.0),
            site("jobs.b.de", rank=20, trend=2.0, traffic=200.0),
            SiteRecord(url="jobs.c.de", country_code="DE"),
        ]
        kept, dropped = listwise_delete(sites)
        scored = normalize_and_score(kept)
        panel = build_panel(scored, sites, self.indicators())
        assert panel.raw_count == panel.clean_count + panel.dropped_count
        assert panel.raw_count == 3
        assert panel.dropped_count == 1

    def test_unknown_scored_url(self):
        with pytest.raises(ValueError, match="missing from the site listing"):
            build_panel([("jobs.q.de", 0.0)], [site("jobs.a.de")], self.indicators())

    def test_country_mean_mode(self):
        sites = [site("jobs.a.de"), site("jobs.b.de"), site("jobs.c.fr", country="FR")]
        scored = [("jobs.a.de", 0.2), ("jobs.b.de", 0.4), ("jobs.c.fr", -0.6)]
        panel = build_panel(scored, sites, self.indicators(), country_mean=True)
        assert panel.n == 2
        by_country = {row.country_code: row.score for row in panel.rows}
        assert by_country["DE"] == pytest.approx(0.3)
        assert by_country["FR"] == pytest.approx(-0.6)


class TestDescribePanel:
    def panel_from_rates(self, rates):
        rows = tuple(
            PanelRow(url=f"jobs.{i}.de", country_code="DE", score=float(i), unemployment_rate=r)
            for i, r in enumerate(rates)
        )
        return PanelDataset(rows=rows, raw_count=len(rows), clean_count=len(rows), dropped_count=0)

    def test_single_row_std_not_applicable(self):
        summary = describe_panel(self.panel_from_rates([7.7]))
        assert summary.rate_mean == 7.7
        assert summary.rate_std is None
        assert "n/a" in format_panel_summary(summary)

    def test_hand_computed_stats(self):
        summary = describe_panel(self.panel_from_rates([4.0, 6.0, 8.0, 10.0]))
        assert summary.rate_mean == pytest.approx(7.0, abs=1e-12)
        assert summary.rate_std == pytest.approx(2.5819888975, abs=1e-9)

    def test_bundled_fixture_counts(self):
        records = ingest_sites(bundled_sites_path())
        kept, _ = listwise_delete(records)
        scored = normalize_and_score(kept)
        indicators = read_indicators(bundled_indicators_path())
        panel = build_panel(scored, records, indicators)
        summary = describe_panel(panel, complete_sites=kept)
        assert summary.site_count_raw == 427
        assert summary.site_count_clean == 382
        ranks = np.array([float(r.rank) for r in kept])
        assert summary.rank_mean == pytest.approx(ranks.mean())
        assert summary.rank_std == pytest.approx(ranks.std(ddof=1))

    def test_empty_panel_rejected(self):
        panel = PanelDataset(rows=(), raw_count=0, clean_count=0, dropped_count=0)
        with pytest.raises(ValueError, match="empty"):
            describe_panel(panel)


class TestPanelCsv:
    def test_round_trip_full_precision(self, tmp_path, rng):
        rows = tuple(
            PanelRow(
                url=f"jobs.{i:02d}.de",
                country_code="DE",
                score=float(rng.standard_normal()),
                unemployment_rate=float(rng.uniform(0, 30)),
            )
            for i in range(10)
        )
        panel = PanelDataset(rows=rows, raw_count=10, clean_count=10, dropped_count=0)
        path = tmp_path / "panel.csv"
        write_panel_csv(panel, path)
        restored = read_panel_csv(path)
        assert restored.rows == panel.rows

    def test_header_checked(self, tmp_path):
        path = tmp_path / "panel.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ParseError, match="header"):
            read_panel_csv(path)


class TestRecordsJson:
    def test_round_trip(self, tmp_path):
        records = [site("jobs.a.de"), SiteRecord(url="jobs.b.fr", country_code="FR", trend=3.0)]
        path = tmp_path / "records.json"
        write_records_json(records, path)
        assert read_records_json(path) == records

    def test_schema_checked(self, tmp_path):
        path = tmp_path / "records.json"
        path.write_text(json.dumps({"schema": "other/1", "records": []}), encoding="utf-8")
        with pytest.raises(ParseError, match="schema"):
            read_records_json(path)


class TestSiteRecordValidation:
    def test_rejects_uppercase_url(self):
        with pytest.raises(ValueError, match="lowercase"):
            SiteRecord(url="JOBS.example.de", country_code="DE")

    def test_rejects_bad_country(self):
        with pytest.raises(ValueError, match="country_code"):
            SiteRecord(url="jobs.a.de", country_code="de")

    def test_rejects_nonpositive_rank(self):
        with pytest.raises(ValueError, match="rank"):
            SiteRecord(url="jobs.a.de", country_code="DE", rank=0)

    def test_rejects_negative_trend(self):
        with pytest.raises(ValueError, match="trend"):
            SiteRecord(url="jobs.a.de", country_code="DE", trend=-1.0)
