"""Rates and Bonferroni intervals from a published ATT, se and a range for q."""

import argparse
import json

from persuasion_did.boe import BoeInput, boe_summary
from persuasion_did.twoperiod_reg import type_shares_from_summary


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--att", type=float, default=0.109)
    ap.add_argument("--se", type=float, default=0.041)
    ap.add_argument("--q", type=float, default=0.583)
    ap.add_argument("--q-lower", type=float, default=0.507)
    ap.add_argument("--q-upper", type=float, default=0.659)
    ap.add_argument("--alpha0", type=float, default=0.025)
    ap.add_argument("--shares-att", type=float, default=0.089)
    ap.add_argument("--treated-share", type=float, default=0.583)
    a = ap.parse_args()
    out = boe_summary(BoeInput(a.att, a.se, a.q_lower, a.q_upper, a.q, 0.05, a.alpha0))
    out["type_shares"] = type_shares_from_summary(a.shares_att, a.treated_share).as_dict()
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
