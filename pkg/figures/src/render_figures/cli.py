"""Command-line entry point: render_figures <figure_id|all> --data DIR --out DIR.

Input CSVs are located by filename, first directly under --data, then one
level down in sorted subdirectories (matching the per-command output
layout of the experiment runner).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .panels import PANELS, EmptyData, FigureSpec, MissingColumn, render


def locate_inputs(data_dir: Path, names: tuple[str, ...]) -> dict[str, Path]:
    found: dict[str, Path] = {}
    for name in names:
        direct = data_dir / name
        if direct.is_file():
            found[name] = direct
            continue
        for sub in sorted(p for p in data_dir.iterdir() if p.is_dir()):
            candidate = sub / name
            if candidate.is_file():
                found[name] = candidate
                break
        else:
            raise FileNotFoundError(f"required input {name} not found under {data_dir}")
    return found


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="render_figures")
    parser.add_argument("figure_id", choices=sorted(PANELS) + ["all"])
    parser.add_argument("--data", required=True, help="directory with the CSV outputs")
    parser.add_argument("--out", required=True, help="directory for SVG/PNG output")
    args = parser.parse_args(argv)

    data_dir = Path(args.data)
    out_dir = Path(args.out)
    targets = sorted(PANELS) if args.figure_id == "all" else [args.figure_id]
    status = 0
    for figure_id in targets:
        try:
            inputs = locate_inputs(data_dir, PANELS[figure_id].files)
            spec = FigureSpec(figure_id=figure_id, inputs=inputs,
                              out_base=out_dir / figure_id)
            for path in render(spec):
                print(path)
        except (FileNotFoundError, MissingColumn, EmptyData) as exc:
            print(f"{figure_id}: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
