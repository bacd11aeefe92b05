#!/usr/bin/env python3
"""Generate the deterministic synthetic cohort used by the test suite.

Sixty hospital-admission records across three exact strata
(hospital x year). Admission hour drives the anticipated length of stay:
early-morning hours produce short stays (~22h), late-evening hours long
stays (~43h), plus a few mid-range admissions that mostly fall inside the
hard gap and end up discarded. Units are generated in short/long couples
sharing sex and ward so a perfect matching under fine balance exists.

Usage: python3 scripts/make_synthetic.py [out.csv]
"""
import csv
import random
import sys

SEED = 20260819

STRATA = [
    # (hospital, year, couples, mid_units)
    ("H1", "1993", 11, 2),
    ("H1", "1994", 8, 0),
    ("H2", "1993", 9, 2),
]
SHORT_HOURS = [8, 9, 10, 11]
LONG_HOURS = [20, 21, 22, 23]
MID_HOUR = 14
WARDS = ["medical", "surgical", "icu"]
SEXES = ["F", "M"]


def make_rows():
    rng = random.Random(SEED)
    rows = []
    serial = 0

    def unit(hospital, year, hour, los, sex, ward, base_risk):
        nonlocal serial
        serial += 1
        age = rng.randint(18, 90)
        severity = round(rng.uniform(0.0, 10.0), 1)
        # ~8% of severity scores missing, to exercise imputation.
        sev_cell = "" if rng.random() < 0.08 else f"{severity}"
        outcome = 1 if rng.random() < base_risk else 0
        rows.append(
            {
                "id": f"u{serial:03d}",
                "hospital": hospital,
                "year": year,
                "hour": hour,
                "los": round(los, 1),
                "age": age,
                "severity": sev_cell,
                "sex": sex,
                "ward": ward,
                "outcome": outcome,
            }
        )

    for hospital, year, couples, mids in STRATA:
        for _ in range(couples):
            sex = rng.choice(SEXES)
            ward = rng.choice(WARDS)
            short_los = max(4.0, rng.gauss(22.0, 6.0))
            long_los = max(20.0, rng.gauss(43.0, 8.0))
            if rng.random() < 0.12:
                long_los += rng.uniform(20.0, 40.0)  # a few multi-day stays
            unit(hospital, year, rng.choice(SHORT_HOURS), short_los, sex, ward, 0.20)
            unit(hospital, year, rng.choice(LONG_HOURS), long_los, sex, ward, 0.45)
        for _ in range(mids):
            unit(hospital, year, MID_HOUR, max(6.0, rng.gauss(30.0, 4.0)),
                 rng.choice(SEXES), rng.choice(WARDS), 0.30)
    return rows


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/synthetic_cohort.csv"
    rows = make_rows()
    fields = ["id", "hospital", "year", "hour", "los", "age", "severity",
              "sex", "ward", "outcome"]
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} units -> {out}")


if __name__ == "__main__":
    main()
