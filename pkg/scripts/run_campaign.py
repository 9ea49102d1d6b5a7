#!/usr/bin/env python3
"""Long-form soundness campaign with a per-rule coverage table.

Equivalent to `fsj meta` but prints aggregate rule counts and timing,
which is what you want when sizing generator parameters.

  python3 scripts/run_campaign.py --n 5000 --seed 0
  python3 scripts/run_campaign.py --n 1000 --mutate fields-no-this-subst
"""

import argparse
import sys

from fsj import campaign
from fsj.gen import GenConfig
from fsj.interp import MUTATIONS


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000, help="number of seeded programs")
    ap.add_argument("--seed", type=int, default=0, help="first seed")
    ap.add_argument("--fuel", type=int, default=2000, help="step budget per program")
    ap.add_argument("--max-classes", type=int, default=4)
    ap.add_argument("--mutate", choices=sorted(MUTATIONS), action="append", default=[])
    args = ap.parse_args()

    cfg = GenConfig(max_classes=args.max_classes)
    res = campaign(
        args.n,
        base_seed=args.seed,
        fuel=args.fuel,
        config=cfg,
        mutations=frozenset(args.mutate),
    )

    for prop, outcomes in sorted(res.tally().items()):
        parts = " ".join(f"{k}={v}" for k, v in sorted(outcomes.items()))
        print(f"{prop}: {parts}")
    print()
    width = max(len(r) for r in res.rules) if res.rules else 0
    for rule, count in res.rules.most_common():
        print(f"  {rule:<{width}}  {count}")
    print()
    rate = res.count / res.elapsed if res.elapsed else float("inf")
    print(f"{res.count} programs in {res.elapsed:.1f}s ({rate:.0f}/s), "
          f"{len(res.violations)} violations")
    for seed, rep in res.violations[:10]:
        print(f"  seed={seed}: {rep.line()}")
    return 1 if res.violations else 0


if __name__ == "__main__":
    sys.exit(main())
