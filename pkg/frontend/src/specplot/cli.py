"""CLI wrapper: ``specplot <kind> <input.csv> -o <out.png>``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import PLOT_KINDS, PlotJob, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="specplot",
        description="Render simulator CSV outputs into figures",
    )
    parser.add_argument("kind", choices=PLOT_KINDS)
    parser.add_argument("input_csv", type=Path)
    parser.add_argument("-o", "--output", type=Path, required=True)
    parser.add_argument("--linear-axes", action="store_true",
                        help="disable the default log scaling")
    args = parser.parse_args(argv)

    job = PlotJob(input_csv=args.input_csv, kind=args.kind,
                  output_path=args.output, log_axes=not args.linear_axes)
    try:
        out = render(job)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
