"""Build data/adult.csv and data/compas.csv from the raw public releases.

Usage: python3 scripts/prepare_real_data.py <raw-dir>

<raw-dir> must contain adult.data, adult.test (UCI Adult Income) and
compas-scores-two-years.csv (ProPublica). The `responsibly` wheel on PyPI
ships all three under responsibly/dataset/.
"""
import csv
import os
import sys

import pandas as pd

ADULT_COLS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def find(raw, name):
    for root, _, files in os.walk(raw):
        if name in files:
            return os.path.join(root, name)
    raise SystemExit(f"{name} not found under {raw}")


def adult(raw, out):
    frames = []
    for name, skip in (("adult.data", 0), ("adult.test", 1)):
        df = pd.read_csv(find(raw, name), names=ADULT_COLS, skiprows=skip,
                         skipinitialspace=True)
        frames.append(df)
    df = pd.concat(frames, ignore_index=True).dropna(subset=["income"])
    df["y"] = df["income"].str.rstrip(".").eq(">50K").astype(int)
    df = df[["age", "marital-status", "relationship", "race", "sex", "y"]]
    df.to_csv(out, index=False, quoting=csv.QUOTE_MINIMAL)
    return len(df)


def compas(raw, out):
    df = pd.read_csv(find(raw, "compas-scores-two-years.csv"))
    # ProPublica's standard filter
    df = df[(df.days_b_screening_arrest <= 30)
            & (df.days_b_screening_arrest >= -30)
            & (df.is_recid != -1)
            & (df.c_charge_degree != "O")
            & (df.score_text != "N/A")]
    df = df.assign(
        high_risk=(df.score_text != "Low").astype(int),
        recid=df.two_year_recid.astype(int),
    )
    df = df[["race", "sex", "age", "high_risk", "recid"]]
    df.to_csv(out, index=False)
    return len(df)


if __name__ == "__main__":
    raw = sys.argv[1]
    here = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
    print("adult rows:", adult(raw, os.path.join(here, "adult.csv")))
    print("compas rows:", compas(raw, os.path.join(here, "compas.csv")))
