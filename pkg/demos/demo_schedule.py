"""Adapted weight schedules: where slow decay hits a wall.

The adapted builder places segment endpoints wherever a prescribed
decay sequence c_k halves, then caps the weight on each segment so the
per-segment mass stays at most 1.  With a moderate decay (c_k = 1/k)
the endpoints come thick and fast, the cap never binds, and the plain
mass sum(a_k/k) grows like log(k) while the weighted sum(a_k c_k/k)
plateaus — the regime the construction is after.

With a triple-log-type decay the halving points are absurdly sparse
(k = 12, then k = 65532, then past 2^250), the cap crushes the weights
at each of the few endpoints it can place, and the plain mass freezes
only a little above 3 no matter how far you run.  This script prints
both schedules side by side so the contrast is visible in the numbers.
"""

import argparse

import numpy as np

from cltlab import WeightMode, build_weights, harmonic, weighted_prefix


def report(name, schedule, c, checkpoints):
    print("%s:" % name)
    print("  anchors %s%s" % (schedule.anchors,
                              "  (ran out of halvings)" if schedule.truncated
                              else ""))
    ks = np.asarray(checkpoints)
    w = weighted_prefix(schedule, c, ks)
    print("  %10s %10s %12s %12s" % ("k", "a_k", "plain_mass",
                                     "weighted"))
    for i, k in enumerate(checkpoints):
        print("  %10d %10.5f %12.5f %12.5f"
              % (k, schedule.a(int(k)), schedule.mass(1, int(k)), w[i]))
    print()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmax", type=int, default=1_000_000)
    args = ap.parse_args()

    kmax = args.kmax
    k = np.arange(1, kmax + 1, dtype=float)
    checkpoints = [10 ** d for d in range(1, len(str(kmax)))]
    if checkpoints[-1] != kmax:
        checkpoints.append(kmax)

    c_inv = 1.0 / k
    sched_inv = build_weights(WeightMode.ADAPTED, kmax, c=c_inv)
    report("decay c_k = 1/k", sched_inv, c_inv, checkpoints)

    c_slow = 1.0 / np.log2(np.log2(k + 4.0))
    sched_slow = build_weights(WeightMode.ADAPTED, kmax, c=c_slow)
    report("decay c_k = 1/log2 log2 (k+4)", sched_slow, c_slow, checkpoints)

    print("unit-weight harmonic mass at kmax, for scale: %.5f"
          % harmonic(kmax))
    lvl = sorted(set(np.round(sched_slow.values, 6)))
    print("distinct slow-schedule weight levels: %s"
          % ", ".join("%.4f" % v for v in lvl))
    print()
    print("the 1/k schedule keeps full weight, so plain mass tracks the")
    print("harmonic sum while the weighted series settles early; the slow")
    print("decay leaves too few halving points for the caps to spare any")
    print("mass, so both columns flatten together.")


if __name__ == "__main__":
    main()
