#!/usr/bin/env python3
"""Regenerate the shipped geometry documents from their builders."""

from pathlib import Path

from tubediff.geometry import ball_on_stick, constricted_tree
from tubediff.network import write_mesh


def main() -> None:
    out_dir = Path(__file__).resolve().parent.parent / "geometries"
    out_dir.mkdir(exist_ok=True)
    for name, builder in (("ball_on_stick", ball_on_stick),
                          ("constricted_tree", constricted_tree)):
        target = out_dir / f"{name}.geom"
        write_mesh(builder(), target)
        print(f"wrote {target}")


if __name__ == "__main__":
    main()
