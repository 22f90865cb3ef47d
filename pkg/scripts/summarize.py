"""Print the headline numbers of every ``*_summary.json`` under a results directory."""
import argparse
import json
from pathlib import Path


def headline(s):
    kind, st, fits = s["kind"], s["statistics"], s["fits"]
    if kind == "contraction":
        return [
            ("median errors", st["median_error"]),
            ("slope", fits.get("median_error_slope", {}).get("slope")),
            ("strictly decreasing", st.get("strictly_decreasing")),
        ]
    if kind == "ergodicity":
        return [
            ("bias", st["bias"]),
            ("lambda * variance", st["lambda_variance"]),
            ("bias slope", fits.get("bias_slope", {}).get("slope")),
            ("variance slope", fits.get("variance_slope", {}).get("slope")),
            ("tails within envelope", st["tails_within_envelope"]),
        ]
    if kind == "bvm":
        return [(f"lambda={k}", {n: e[n] for n in ("ks_distance", "variance_ratio", "mean_statistic")}) for k, e in st.items()]
    if kind == "figure":
        return [(n, st[n]) for n in ("coverage_core", "spearman_variance_occupation", "occupation_mass_relative_error")]
    if kind == "concentration":
        return [(f"lambda={k}", {n: e[n] for n in ("fitted_C", "q99", "envelope99")}) for k, e in st["per_lambda"].items()]
    return [(k, v) for k, v in st.items() if not isinstance(v, (list, dict))]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", nargs="?", default="results")
    args = ap.parse_args()
    for p in sorted(Path(args.root).rglob("*_summary.json")):
        s = json.loads(p.read_text())
        print(f"{s['kind']}  ({p.parent})")
        for name, value in headline(s):
            print(f"  {name}: {value}")


if __name__ == "__main__":
    main()
