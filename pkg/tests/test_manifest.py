import hashlib
import json

import pytest

from conftest import TRIANGLE_CASE
from src import __version__
from src.manifest import RunManifest, load_manifest, sha256_file


def test_sha256_file(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"blackout" * 10_000)
    assert sha256_file(path) == hashlib.sha256(b"blackout" * 10_000).hexdigest()


def test_for_case_hashes_the_case():
    manifest = RunManifest.for_case("rc-campaign", TRIANGLE_CASE, seed=4, scheme=[3, 2])
    assert manifest.case_sha256 == sha256_file(TRIANGLE_CASE)
    assert manifest.case_path.endswith("triangle.json")
    assert manifest.version == __version__


def test_for_case_without_case():
    manifest = RunManifest.for_case("report", None)
    assert manifest.case_path == ""
    assert manifest.case_sha256 == ""


def test_write_and_load(tmp_path):
    manifest = RunManifest.for_case("risk", TRIANGLE_CASE, config={"rho0": [0.0, 0.5]})
    manifest.add_output(tmp_path / "risk_grid.csv")
    path = manifest.write(tmp_path)
    assert path.name == "manifest.json"

    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["finished"]
    assert data["outputs"] == [str(tmp_path / "risk_grid.csv")]

    again = load_manifest(path)
    assert again.config == {"rho0": [0.0, 0.5]}
    assert again.command == "risk"


def test_load_ignores_unknown_fields(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"command": "simulate", "host": "lab-7"}), encoding="utf-8")
    assert load_manifest(path).command == "simulate"


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path / "absent.json")
