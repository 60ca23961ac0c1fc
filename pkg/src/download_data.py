#!/usr/bin/env python3
"""Download MATPOWER case files from GitHub."""

import logging
import re
from pathlib import Path

import requests

from . import settings

logger = logging.getLogger(__name__)

# Raw files in the public MATPOWER repository
MATPOWER_URL = "https://raw.githubusercontent.com/MATPOWER/matpower/master/data/{name}.m"

CASE_NAME_PATTERN = re.compile(r"^[A-Za-z0-9_]+$")


def case_url(name: str) -> str:
    if not CASE_NAME_PATTERN.match(name):
        raise ValueError(f"Invalid MATPOWER case name: {name!r}")
    return MATPOWER_URL.format(name=name)


def download_case(name: str, force: bool = False, cases_dir: Path = settings.CASES_DIR) -> Path:
    """Download a MATPOWER case file if not already present.

    Args:
        name: case name as in the MATPOWER data directory (e.g. "case30")
        force: If True, download even if the file exists
        cases_dir: cache directory

    Returns:
        Path to the .m file
    """
    url = case_url(name)
    case_path = Path(cases_dir) / f"{name}.m"

    if case_path.exists() and not force:
        logger.info("Case %s already exists at %s", name, case_path)
        return case_path

    case_path.parent.mkdir(parents=True, exist_ok=True)

    logger.info("Downloading %s from %s", name, url)
    response = requests.get(url, stream=True, timeout=60)
    response.raise_for_status()

    tmp_path = case_path.with_name(case_path.name + ".part")
    with open(tmp_path, 'wb') as f:
        for chunk in response.iter_content(chunk_size=8192):
            f.write(chunk)
    tmp_path.replace(case_path)

    logger.info("Saved %s to %s", name, case_path)
    return case_path


if __name__ == "__main__":
    import argparse
    parser = argparse.ArgumentParser(description="Download MATPOWER case files")
    parser.add_argument("names", nargs="+", help="Case names, e.g. case30 case118")
    parser.add_argument("--force", action="store_true", help="Force re-download")
    args = parser.parse_args()

    for case_name in args.names:
        print(download_case(case_name, force=args.force))
