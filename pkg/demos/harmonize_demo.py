"""Parse two summary-statistics files, align alleles, and estimate.

Uses the golden fixtures from the test suite: an exposure TSV and an outcome
CSV with different column names, swapped and strand-flipped alleles,
palindromic variants and a few malformed rows.
Run: python demos/harmonize_demo.py
"""

from pathlib import Path

from mrkit import io, ivw_estimate

gold = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "golden"
exp = io.parse_summary_stats(gold / "exposure.tsv")
out = io.parse_summary_stats(gold / "outcome.csv")
for half in (exp, out):
    print(f"{Path(half.source).name}: {len(half)} rows kept")
    for err in half.errors:
        print("   ", err)

data, report = io.harmonize(exp, out)
print("\n" + report.to_tsv())
print(io.format_dataset(data))
res = ivw_estimate(data)
print(f"IVW: {res.beta_hat:.4f} (se {res.se:.4f})")
