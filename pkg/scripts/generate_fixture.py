"""Regenerate the bundled demo fixture under src/jobsignal/data/.

427 sites across 32 European countries; 45 rows have at least one blank
signal so listwise deletion keeps exactly 382 complete cases. Site signals
are mildly coupled to the country's unemployment rate so the bundled
pipeline run produces a non-trivial correlation. Deterministic: rerunning
this script reproduces the committed files byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "jobsignal" / "data"

COUNTRIES = [
    "AT", "BE", "BG", "CY", "CZ", "DE", "DK", "EE", "ES", "FI", "FR", "GB",
    "GR", "HR", "HU", "IE", "IT", "LT", "LU", "LV", "ME", "MK", "MT", "NL",
    "PL", "PT", "RO", "RS", "SE", "SI", "SK", "TR",
]

N_SITES = 427
N_INCOMPLETE = 45
SEED = 20130901


def main() -> None:
    rng = np.random.default_rng(SEED)
    n_countries = len(COUNTRIES)

    rates = np.clip(np.round(rng.normal(10.0, 5.0, n_countries), 1), 3.0, 27.0)
    rate_z = (rates - rates.mean()) / rates.std()

    # Spread 427 sites over 32 countries: 13 each plus one extra for the first 11.
    per_country = np.full(n_countries, N_SITES // n_countries)
    per_country[: N_SITES % n_countries] += 1
    assert per_country.sum() == N_SITES

    site_rows = []
    idx = 0
    for c, code in enumerate(COUNTRIES):
        for _ in range(per_country[c]):
            # Latent attractiveness tracks the country's unemployment rate.
            latent = 0.6 * rate_z[c] + rng.normal(0.0, 1.0)
            rank = max(1, int(round(2_500_000.0 * np.exp(-0.7 * latent + 0.8 * rng.normal()))))
            trend = round(float(np.clip(50.0 + 18.0 * latent + 10.0 * rng.normal(), 0.0, 100.0)), 1)
            traffic = round(float(30_000.0 * np.exp(0.6 * latent + 0.5 * rng.normal())), 1)
            url = f"jobs{idx:03d}.example.{code.lower()}"
            site_rows.append([url, code, str(rank), str(trend), str(traffic)])
            idx += 1

    # Blank out signals on 45 rows (1 to 3 blanks each, at least one).
    incomplete = rng.choice(N_SITES, size=N_INCOMPLETE, replace=False)
    for row_idx in incomplete:
        n_missing = int(rng.integers(1, 4))
        cols = rng.choice([2, 3, 4], size=n_missing, replace=False)
        for col in cols:
            site_rows[row_idx][col] = ""

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with open(OUT_DIR / "sites.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["url", "country", "rank", "trend", "traffic"])
        writer.writerows(site_rows)

    with open(OUT_DIR / "indicators.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["country", "unemployment_rate"])
        for code, rate in zip(COUNTRIES, rates):
            writer.writerow([code, f"{rate:.1f}"])

    complete = sum(1 for row in site_rows if all(cell != "" for cell in row))
    print(f"wrote {len(site_rows)} sites ({complete} complete) and {n_countries} indicators")
    assert complete == N_SITES - N_INCOMPLETE


if __name__ == "__main__":
    main()
