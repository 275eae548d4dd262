"""Bundled cohort tables: loading, validation, and cross-checks.

Three sources ship with the package.  ANS rows carry the registered number
of graduates per (gender, program, cohort year); the two survey sources
carry employed/unemployed response counts.  ANS rows are keyed by cohort
year while survey rows are keyed by survey year; the time-series step joins
survey year t against cohort year t - 1.

The 2011 reference-survey total (2717) and the 2012 graduate-survey total
(53015) are structural facts about the bundled tables; a load that breaks
them means the data files were edited, so it fails loudly.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

SOURCES = ("ANS", "Istat", "Almalaurea")
GENDERS = ("M", "F")
PROGRAMS = (
    "agricultural_forestry_veterinary",
    "architecture_engineering",
    "business_economics_finance",
    "communication_publishing",
    "industrial_information_engineering",
    "law_legal_sciences",
    "literature_humanities",
    "medicine_dentistry_pharmacy",
    "political_science",
    "science_it",
)

REFERENCE_SURVEY_TOTAL_2011 = 2717
GRADUATE_SURVEY_TOTAL_2012 = 53015


class CohortDataError(ValueError):
    """Raised when a cohort table fails validation; carries offending rows."""

    def __init__(self, message: str, rows: list[str] | None = None):
        self.rows = rows or []
        if self.rows:
            message = message + "\n  " + "\n  ".join(self.rows)
        super().__init__(message)


@dataclass(frozen=True)
class CohortCell:
    source: str
    gender: str
    program: str
    year: int
    employed: int
    unemployed: int
    total: int | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise CohortDataError(f"unknown source {self.source!r}")
        if self.gender not in GENDERS:
            raise CohortDataError(f"unknown gender {self.gender!r}")
        if self.program not in PROGRAMS:
            raise CohortDataError(f"unknown program {self.program!r}")
        if self.source == "ANS":
            if self.total is None or self.total < 0:
                raise CohortDataError(f"ANS cell needs a non-negative total, got {self.total}")
        else:
            if self.employed < 0 or self.unemployed < 0:
                raise CohortDataError(
                    f"negative counts in {self.key()}: {self.employed}, {self.unemployed}"
                )

    def key(self) -> tuple[str, str, str, int]:
        return (self.source, self.gender, self.program, self.year)

    @property
    def n(self) -> int:
        if self.source == "ANS":
            raise CohortDataError("ANS cells carry a total, not a sample size")
        return self.employed + self.unemployed


def _parse_int(text: str, what: str, row_repr: str, errors: list[str]) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        errors.append(f"{row_repr}: {what} is not an integer ({text!r})")
        return 0


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise CohortDataError(f"{path.name}: empty file (expected a header)")
        rows = list(reader)
    if not rows:
        raise CohortDataError(f"{path.name}: no data rows")
    return rows


def load_table(path) -> list[CohortCell]:
    """Load and validate one CSV of cohort cells.

    Survey schema: source,gender,program,year,employed,unemployed.
    ANS schema:    source,gender,program,year,total.
    """
    path = Path(path)
    rows = _read_rows(path)
    errors: list[str] = []
    cells: list[CohortCell] = []
    seen: set[tuple] = set()
    for i, row in enumerate(rows, start=2):
        rep = f"{path.name}:{i}"
        source = (row.get("source") or "").strip()
        if source not in SOURCES:
            errors.append(f"{rep}: unknown source {source!r}")
            continue
        gender = (row.get("gender") or "").strip()
        program = (row.get("program") or "").strip()
        year = _parse_int(row.get("year"), "year", rep, errors)
        if source == "ANS":
            if "total" not in row or row["total"] in (None, ""):
                errors.append(f"{rep}: ANS row missing total column")
                continue
            total = _parse_int(row["total"], "total", rep, errors)
            employed = unemployed = 0
        else:
            missing = [k for k in ("employed", "unemployed") if row.get(k) in (None, "")]
            if missing:
                errors.append(f"{rep}: missing {', '.join(missing)}")
                continue
            employed = _parse_int(row["employed"], "employed", rep, errors)
            unemployed = _parse_int(row["unemployed"], "unemployed", rep, errors)
            total = None
        try:
            cell = CohortCell(source, gender, program, year, employed, unemployed, total)
        except CohortDataError as e:
            errors.append(f"{rep}: {e}")
            continue
        if cell.key() in seen:
            errors.append(f"{rep}: duplicate key {cell.key()}")
            continue
        seen.add(cell.key())
        cells.append(cell)
    if errors:
        raise CohortDataError(f"{path.name}: {len(errors)} invalid rows", errors)
    return cells


def bundled_data_dir() -> Path:
    return Path(resources.files("urnbias").joinpath("data"))


def verify_checksums(data_dir: Path | None = None) -> None:
    """Compare bundled CSVs against the shipped SHA256SUMS manifest."""
    data_dir = data_dir or bundled_data_dir()
    manifest = data_dir / "SHA256SUMS"
    if not manifest.exists():
        raise CohortDataError(f"checksum manifest missing at {manifest}")
    bad = []
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        digest, name = line.split(maxsplit=1)
        target = data_dir / name.strip()
        if not target.exists():
            bad.append(f"{name.strip()}: file missing")
            continue
        actual = hashlib.sha256(target.read_bytes()).hexdigest()
        if actual != digest:
            bad.append(f"{name.strip()}: checksum mismatch ({actual} != {digest})")
    if bad:
        raise CohortDataError("bundled data failed checksum verification", bad)


def load_cohort_tables(data_dir=None, check: bool = True) -> dict[str, list[CohortCell]]:
    """Load every bundled table, keyed by source name.

    With check=True (the default) the loader verifies the checksum manifest
    and the two structural sample totals.
    """
    data_dir = Path(data_dir) if data_dir is not None else bundled_data_dir()
    if check:
        verify_checksums(data_dir)
    out = {
        "ANS": load_table(data_dir / "ans.csv"),
        "Istat": load_table(data_dir / "istat_2011.csv"),
        "Almalaurea": load_table(data_dir / "almalaurea.csv"),
    }
    if check:
        ist_total = sum(c.n for c in out["Istat"] if c.year == 2011)
        if ist_total != REFERENCE_SURVEY_TOTAL_2011:
            raise CohortDataError(
                f"2011 reference survey total {ist_total} != {REFERENCE_SURVEY_TOTAL_2011}"
            )
        alma_total = sum(c.n for c in out["Almalaurea"] if c.year == 2012)
        if alma_total != GRADUATE_SURVEY_TOTAL_2012:
            raise CohortDataError(
                f"2012 graduate survey total {alma_total} != {GRADUATE_SURVEY_TOTAL_2012}"
            )
    return out


def cells_by_key(cells: list[CohortCell]) -> dict[tuple, CohortCell]:
    return {c.key(): c for c in cells}


def survey_years(cells: dict[str, list[CohortCell]]) -> list[int]:
    """Graduate-survey years beyond 2012 that have a matching cohort register."""
    alma_years = {c.year for c in cells["Almalaurea"] if c.year > 2012}
    ans_years = {c.year for c in cells["ANS"]}
    return sorted(t for t in alma_years if t - 1 in ans_years)
