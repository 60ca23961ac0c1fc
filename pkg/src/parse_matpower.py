#!/usr/bin/env python3
"""Parse MATPOWER-style text case files (mpc.bus / mpc.gen / mpc.branch)."""

import logging
import re
from pathlib import Path
from typing import Optional

from .errors import ParseError
from .grid_model import Branch, Bus, Generator, GridCase

logger = logging.getLogger(__name__)

# Column positions in the standard MATPOWER layout (0-based)
BUS_I, BUS_TYPE, PD = 0, 1, 2
BUS_COLUMNS_MAPPED = 3
REF_BUS_TYPE = 3

GEN_BUS, PG, GEN_STATUS, PMAX, PMIN = 0, 1, 7, 8, 9
GEN_COLUMNS_MAPPED = 10

F_BUS, T_BUS, BR_X, RATE_A, RATE_B, RATE_C, BR_STATUS = 0, 1, 3, 5, 6, 7, 10
BRANCH_COLUMNS_MAPPED = 11

BASE_MVA_PATTERN = re.compile(r"mpc\.baseMVA\s*=\s*([-+\d.eE]+)\s*;")
MATRIX_PATTERN = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.DOTALL)


def strip_comments(text: str) -> str:
    """Remove MATLAB ``%`` comments."""
    return re.sub(r"%[^\n]*", "", text)


def parse_matrix(body: str, name: str) -> list[list[float]]:
    """Parse the rows of one ``mpc.<name> = [ ... ];`` block."""
    rows = []
    for chunk in re.split(r"[;\n]", body):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(v) for v in re.split(r"[\s,]+", chunk) if v])
        except ValueError as e:
            raise ParseError(f"mpc.{name}: malformed row {chunk!r} ({e})")
    return rows


def extract_matrices(text: str) -> tuple[float, dict[str, list[list[float]]]]:
    """Return baseMVA and every numeric matrix block in the case text."""
    text = strip_comments(text)
    match = BASE_MVA_PATTERN.search(text)
    if match is None:
        raise ParseError("mpc.baseMVA not found")
    base_mva = float(match.group(1))

    matrices = {}
    for name, body in MATRIX_PATTERN.findall(text):
        if name in ("bus", "gen", "branch"):
            matrices[name] = parse_matrix(body, name)
    for required in ("bus", "gen", "branch"):
        if required not in matrices:
            raise ParseError(f"mpc.{required} block not found")
    return base_mva, matrices


def _warn_extra_columns(rows: list[list[float]], mapped: int, name: str) -> None:
    widths = {len(r) for r in rows}
    if widths and max(widths) > mapped:
        logger.warning("mpc.%s: ignoring %d columns beyond those mapped", name, max(widths) - mapped)


def _require_width(rows: list[list[float]], width: int, name: str) -> None:
    for i, row in enumerate(rows, start=1):
        if len(row) < width:
            raise ParseError(f"mpc.{name} row {i} has {len(row)} columns, needs {width}")


def read_matpower(path: Path, unrated_rate_mw: Optional[float] = None) -> GridCase:
    """Read a MATPOWER text case into an unvalidated GridCase.

    Branch and generator ids are 1-based row numbers. Coordinates are not part
    of the format and are left as NaN for a coordinate file to supply.
    Out-of-service generators are dropped; out-of-service branches are kept
    with ``in_service=False``. RateB/RateC of 0 mean "absent" and are
    synthesized later; RateA of 0 ("unlimited") is replaced by
    ``unrated_rate_mw`` when given and otherwise rejected by validation.
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        base_mva, matrices = extract_matrices(f.read())

    bus_rows, gen_rows, branch_rows = matrices["bus"], matrices["gen"], matrices["branch"]
    _require_width(bus_rows, BUS_COLUMNS_MAPPED, "bus")
    _require_width(gen_rows, GEN_COLUMNS_MAPPED, "gen")
    _require_width(branch_rows, BRANCH_COLUMNS_MAPPED, "branch")
    _warn_extra_columns(bus_rows, BUS_COLUMNS_MAPPED, "bus")
    _warn_extra_columns(gen_rows, GEN_COLUMNS_MAPPED, "gen")
    _warn_extra_columns(branch_rows, BRANCH_COLUMNS_MAPPED, "branch")

    buses = tuple(
        Bus(
            id=int(row[BUS_I]),
            x_km=float("nan"),
            y_km=float("nan"),
            load_mw=row[PD],
            is_slack_candidate=int(row[BUS_TYPE]) == REF_BUS_TYPE,
        )
        for row in bus_rows
    )

    generators = []
    dropped = 0
    for i, row in enumerate(gen_rows, start=1):
        if row[GEN_STATUS] <= 0:
            dropped += 1
            continue
        p_min = max(row[PMIN], 0.0)
        p_max = max(row[PMAX], p_min)
        p = min(max(row[PG], p_min), p_max)
        generators.append(Generator(id=i, bus=int(row[GEN_BUS]), p_mw=p, p_max_mw=p_max, p_min_mw=p_min))
    if dropped:
        logger.warning("Dropped %d out-of-service generators", dropped)

    branches = []
    for i, row in enumerate(branch_rows, start=1):
        rate_a = row[RATE_A]
        if rate_a == 0 and unrated_rate_mw is not None:
            rate_a = unrated_rate_mw
        branches.append(Branch(
            id=i,
            from_bus=int(row[F_BUS]),
            to_bus=int(row[T_BUS]),
            reactance_pu=row[BR_X],
            rate_a_mw=rate_a,
            rate_b_mw=row[RATE_B] or None,
            rate_c_mw=row[RATE_C] or None,
            in_service=row[BR_STATUS] > 0,
        ))

    return GridCase(
        buses=buses,
        branches=tuple(branches),
        generators=tuple(generators),
        base_mva=base_mva,
        name=path.stem,
    )


if __name__ == "__main__":
    import argparse

    from .grid_model import load_case, write_case

    parser = argparse.ArgumentParser(description="Convert a MATPOWER case to native JSON")
    parser.add_argument("case", help="MATPOWER .m case file")
    parser.add_argument("--coords", required=True, help="Coordinate CSV (bus_id,x_km,y_km)")
    parser.add_argument("--unrated-rate", type=float, help="RateA (MW) for branches with RateA = 0")
    parser.add_argument("--output", "-o", required=True, help="Output JSON file")
    args = parser.parse_args()

    case = load_case(Path(args.case), coordinates=Path(args.coords), unrated_rate_mw=args.unrated_rate)
    write_case(case, Path(args.output))
    print(f"Saved {len(case.buses)} buses, {len(case.branches)} branches to {args.output}")
