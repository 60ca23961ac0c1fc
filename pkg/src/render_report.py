#!/usr/bin/env python3
"""Render a Markdown risk summary from a risk grid CSV and its manifest."""

import json
import logging
from pathlib import Path
from typing import Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from . import settings
from .errors import ValidationError
from .manifest import load_manifest
from .risk_engine import GRID_COLUMNS, RISK_UNITS

logger = logging.getLogger(__name__)

TEMPLATE_NAME = "risk_report.md.jinja2"


def format_risk(value: float) -> str:
    """Risk in engineering notation, e.g. 3.94e-02."""
    if value != value:
        return "n/a"
    return f"{value:.3e}"


def format_percent(value: float) -> str:
    if value != value:
        return "n/a"
    return f"{100 * value:.1f}%"


def load_risk_grid(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Risk grid not found: {path}")
    grid = pd.read_csv(path)
    missing = [c for c in GRID_COLUMNS if c not in grid.columns]
    if missing:
        raise ValidationError(f"Risk grid {path} lacks columns {missing}")
    return grid


def grid_rows(grid: pd.DataFrame) -> list[dict]:
    rows = []
    for row in grid.sort_values(["L", "rho0"]).itertuples(index=False):
        rows.append({
            "rho0": f"{row.rho0:.2f}",
            "L": f"{row.L:g}",
            "r2": format_risk(row.r2),
            "r3": f"{format_risk(row.r3_low)} to {format_risk(row.r3_high)}",
            "total": f"{format_risk(row.total_low)} to {format_risk(row.total_high)}",
            "share3": f"{format_percent(row.share3_low)} to {format_percent(row.share3_high)}",
            "relative": format_percent(row.relative_to_uncorrelated),
        })
    return rows


def render_report(
    risk_csv: Path,
    manifest_path: Optional[Path] = None,
    bounds_json: Optional[Path] = None,
    output_path: Optional[Path] = None,
) -> Path:
    """Write the Markdown report and return its path."""
    grid = load_risk_grid(risk_csv)
    manifest = load_manifest(manifest_path).to_dict() if manifest_path else None

    bounds = None
    if bounds_json is not None:
        with open(bounds_json, 'r', encoding='utf-8') as f:
            bounds = json.load(f)

    env = Environment(
        loader=FileSystemLoader(settings.TEMPLATES_DIR),
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    template = env.get_template(TEMPLATE_NAME)

    content = template.render(
        risk_csv=str(risk_csv),
        units=RISK_UNITS,
        rows=grid_rows(grid),
        manifest=manifest,
        bounds=bounds,
        max_total=format_risk(float(grid["total_high"].max())),
    )

    output_path = Path(output_path) if output_path else Path(risk_csv).with_suffix(".md")
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        f.write(content)

    logger.info("Generated report: %s", output_path)
    return output_path
