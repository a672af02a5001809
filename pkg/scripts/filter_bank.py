"""Optimize a bank of number-state sequences and dump their response curves.

One sequence per requested passband center; the analytic |s~(f)|^2 of each is
written column-wise on a common frequency grid, plus a JSON summary with the
achieved centers, resolution bandwidths and fit residuals.
"""

import argparse
import json

import numpy as np

from hosa.filters import piecewise_filter_amplitude
from hosa.fock import (
    optimize_sequence,
    reference_target,
    sensitivity_from_sequence,
    write_sequence,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--centers-hz", type=float, nargs="+",
                    default=[500.0 * i for i in range(1, 11)])
    ap.add_argument("--f-max-hz", type=float, default=10e3)
    ap.add_argument("--points", type=int, default=801)
    ap.add_argument("--save-sequences", action="store_true",
                    help="also write sequence_<center>.json files")
    args = ap.parse_args()

    f = np.linspace(0.0, args.f_max_hz, args.points)
    columns, header, summaries = [f], ["f_hz"], []
    for center in args.centers_hz:
        opt = optimize_sequence(reference_target(center))
        pw = sensitivity_from_sequence(opt.sequence, "half_value")
        columns.append(np.abs(piecewise_filter_amplitude(pw, f)) ** 2)
        header.append(f"c{center:g}_magnitude_sq")
        summaries.append({
            "requested_center_hz": center,
            "center_hz": opt.center_hz,
            "rbw_hz": opt.rbw_hz,
            "residual": opt.residual,
            "pulses": len(opt.sequence.pulses),
        })
        print(f"{center:>8.1f} Hz -> center {opt.center_hz:>8.1f} Hz, "
              f"rbw {opt.rbw_hz:>7.1f} Hz, residual {opt.residual:.3f}")
        if args.save_sequences:
            write_sequence(f"sequence_{center:g}.json", opt.sequence)

    np.savetxt("filter_bank.csv", np.column_stack(columns), delimiter=",",
               header=",".join(header), comments="")
    with open("filter_bank.json", "w") as fh:
        json.dump({"filters": summaries}, fh, indent=2)
    print(f"wrote filter_bank.csv and filter_bank.json "
          f"({len(args.centers_hz)} filters, {args.points} grid points)")


if __name__ == "__main__":
    main()
