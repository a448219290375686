"""Run configuration, result records, the content-addressed cache and CSV output."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import __version__
from .experiments import CAMPAIGNS, SharpnessReport, SweepConfig

CACHE_ENV = "SHARPDEC_CACHE"

# keys that only say where output goes; excluded from the config hash
LOCATION_KEYS = ("out", "cache_dir", "use_cache")

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "d": {"type": "integer", "minimum": 2},
        "sigma": {"type": "number"},
        "R_list": {"type": "array", "items": {"type": "number"}},
        "campaigns": {"type": "array", "items": {"enum": list(CAMPAIGNS)}},
        "cd": {"type": "number"},
        "quad_order": {"type": "integer"},
        "sample_spacing": {"type": "number"},
        "eps_slack": {"type": "number"},
        "tol": {"type": "number"},
        "ratio_tol": {"type": "number"},
        "m_tol": {"type": "number"},
        "threshold": {"type": "number"},
        "decay_power": {"type": "number"},
        "amplitude_count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "budget": {"type": "number"},
        "out": {"type": "string"},
        "cache_dir": {"type": ["string", "null"]},
        "use_cache": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sweep: SweepConfig
    out: str = "results"
    cache_dir: str | None = None
    use_cache: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        doc = dict(doc)
        loc = {k: doc.pop(k) for k in LOCATION_KEYS if k in doc}
        try:
            sweep = SweepConfig(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(sweep, **loc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def cache_root(self) -> Path:
        if self.cache_dir:
            return Path(self.cache_dir)
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        return Path.home() / ".cache" / "sharpdec"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(sweep: SweepConfig, campaign: str) -> str:
    """Stable digest of everything that determines a campaign's numbers."""
    doc = {"campaign": campaign, "config": sweep.to_dict(), "version": __version__}
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


@dataclass
class ResultRecord:
    campaign: str
    config_hash: str
    config: dict
    report: dict
    passed: bool
    version: str = __version__
    wall_clock_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_report(cls, rep: SharpnessReport, sweep: SweepConfig,
                    wall_clock_s: float = 0.0) -> "ResultRecord":
        return cls(rep.campaign, config_hash(sweep, rep.campaign), sweep.to_dict(),
                   rep.to_dict(), rep.passed, __version__, wall_clock_s)

    def to_dict(self) -> dict:
        return {"campaign": self.campaign, "config_hash": self.config_hash,
                "config": self.config, "report": self.report, "passed": self.passed,
                "version": self.version, "wall_clock_s": self.wall_clock_s,
                "extra": self.extra}

    def content(self) -> dict:
        """The record without timing, i.e. the part that must be reproducible."""
        out = self.to_dict()
        out.pop("wall_clock_s")
        return out

    def to_json(self) -> str:
        # repr-based float output is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "ResultRecord":
        return cls(doc["campaign"], doc["config_hash"], doc["config"], doc["report"],
                   doc["passed"], doc["version"], doc["wall_clock_s"], doc.get("extra", {}))


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_store(root, record: ResultRecord) -> Path:
    path = Path(root) / f"{record.config_hash}.json"
    _atomic_write(path, record.to_json())
    return path


def cache_lookup(root, digest: str) -> ResultRecord | None:
    path = Path(root) / f"{digest}.json"
    if not path.exists():
        return None
    try:
        with open(path) as fh:
            rec = ResultRecord.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        warnings.warn(f"ignoring corrupt cache entry {path}: {exc}")
        return None
    if rec.config_hash != digest:
        warnings.warn(f"ignoring cache entry {path}: hash mismatch")
        return None
    return rec


CSV_COLUMNS = ("campaign", "d", "sigma", "R", "p", "lhs", "rhs", "ratio", "M",
               "comparability", "incidence", "fractal_constant", "amplitude_median",
               "lhs_slope", "rhs_slope", "ratio_slope", "passed")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def csv_rows(record: ResultRecord) -> list[dict]:
    rep = record.report
    fits = rep["fits"]

    def slope(name):
        return fits[name]["slope"] if name in fits else None

    rows = []
    for row in rep["rows"]:
        rows.append({
            "campaign": rep["campaign"], "d": rep["d"], "sigma": rep["sigma"],
            "R": row["R"], "p": row.get("p"), "lhs": row.get("lhs"), "rhs": row.get("rhs"),
            "ratio": row.get("ratio"), "M": row.get("M"),
            "comparability": row.get("comparability"), "incidence": row.get("incidence"),
            "fractal_constant": row.get("fractal_constant"),
            "amplitude_median": row.get("amplitude_median"),
            "lhs_slope": slope("lhs") if "lhs" in fits else slope("amplitude"),
            "rhs_slope": slope("rhs"), "ratio_slope": slope("ratio"),
            "passed": rep["passed"],
        })
    return rows


def write_csv(path, records: list[ResultRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in records:
            for row in csv_rows(rec):
                w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
