"""Frequency-set recovery rate for the sparse sinusoid over many draws."""

import argparse

import numpy as np

from linbreg import bench


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--draws", type=int, default=300)
    p.add_argument("--snr", type=float, default=-5.0)
    p.add_argument("--fraction", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=4)
    args = p.parse_args()
    rep = bench.run_sinusoid(2000, args.fraction, trials=args.draws, seed0=args.seed,
                             target_snr_db=args.snr, workers=args.workers)
    rate = rep.match_rate
    half = 1.96 * np.sqrt(rate * (1 - rate) / args.draws)
    print(f"recovered {rep.matches}/{args.draws} = {rate:.3f} +- {half:.3f} (95%), "
          f"mean snr {np.mean([t.snr_db for t in rep.trials]):.2f} dB")


if __name__ == "__main__":
    main()
