"""Tabulate Blackman filter constants and optionally dump one response curve.

Prints FWHM * t_w, amplification / (t_w^2 s0^2) and the band integral
normalization for a range of k, which should be flat at 0.822 / 0.371 / 0.305
for k >= 2.
"""

import argparse

import numpy as np

from hosa.filters import BlackmanFilterSpec, blackman_frequency_filter, fwhm


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tw-s", type=float, default=1e-3)
    ap.add_argument("--s0", type=float, default=1.0)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 5, 7, 15, 25, 35])
    ap.add_argument("--dump-k", type=int, default=None,
                    help="write response.csv for this k")
    args = ap.parse_args()

    print(f"{'k':>4} {'f0_hz':>10} {'fwhm*t_w':>9} {'a/(t_w s0)^2':>13} {'int/(t_w s0^2)':>15}")
    for k in args.k:
        spec = BlackmanFilterSpec(args.tw_s, k, args.s0)
        filt = blackman_frequency_filter(spec)
        keep = filt.f_grid > 0
        width = fwhm(filt.f_grid[keep], filt.magnitude_sq[keep])
        a_norm = filt.amplification / (spec.t_w**2 * spec.s0**2)
        i_norm = filt.amplification * filt.rbw / (spec.t_w * spec.s0**2)
        print(f"{k:>4} {spec.f0:>10.1f} {width * spec.t_w:>9.4f} "
              f"{a_norm:>13.4f} {i_norm:>15.4f}")

    if args.dump_k is not None:
        spec = BlackmanFilterSpec(args.tw_s, args.dump_k, args.s0)
        filt = blackman_frequency_filter(spec)
        keep = filt.f_grid >= 0
        rows = np.column_stack([filt.f_grid[keep], filt.magnitude_sq[keep]])
        np.savetxt("response.csv", rows, delimiter=",",
                   header="f_hz,magnitude_sq", comments="")
        print(f"wrote response.csv ({rows.shape[0]} rows)")


if __name__ == "__main__":
    main()
