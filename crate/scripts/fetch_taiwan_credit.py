#!/usr/bin/env python3
"""Download the UCI default-of-credit-card-clients dataset and write it as
data/taiwan_credit.csv in the schema configs/taiwan_credit.json expects.

Needs: pandas, xlrd (pip install pandas "xlrd<2.1"), and network access.
"""

import io
import sys
import urllib.request
import zipfile
from pathlib import Path

URL = (
    "https://archive.ics.uci.edu/static/public/350/"
    "default+of+credit+card+clients.zip"
)
OUT = Path(__file__).resolve().parent.parent / "data" / "taiwan_credit.csv"


def main() -> int:
    try:
        import pandas as pd
    except ImportError:
        print("pandas is required: pip install pandas 'xlrd<2.1'", file=sys.stderr)
        return 1

    print(f"downloading {URL}")
    with urllib.request.urlopen(URL, timeout=120) as response:
        archive = zipfile.ZipFile(io.BytesIO(response.read()))
    xls_name = next(n for n in archive.namelist() if n.endswith(".xls"))
    # Row 0 is a banner; the real header sits on row 1.
    frame = pd.read_excel(archive.open(xls_name), header=1)
    frame = frame.drop(columns=["ID"])
    frame = frame.rename(columns={"default payment next month": "default"})
    if sorted(frame["default"].unique().tolist()) != [0, 1]:
        print("unexpected label values; aborting", file=sys.stderr)
        return 1
    OUT.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(OUT, index=False)
    print(f"wrote {len(frame)} rows to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
