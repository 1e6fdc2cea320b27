"""Experiment configuration files.

Configs are INI files (``configparser``, no interpolation, ``#`` comments).
Lists are whitespace separated; lists of records (singularities, shifts,
exponent pairs) separate records with ``;`` and record fields with ``:``.
The full schema is documented in ``docs/config.md``.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from .errors import ConfigError

KINDS = ("solve", "mms", "decay_lemma", "klt", "capacity", "stability", "holder", "uniqueness", "audit")

_REQUIRED = object()


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _records(text: str) -> List[List[str]]:
    return [[p.strip() for p in rec.split(":")] for rec in text.split(";") if rec.strip()]


def _singularities(text: str) -> List[tuple]:
    """``x1 y1 ... : exponent [: directions]`` records."""
    out = []
    for rec in _records(text):
        if len(rec) not in (2, 3):
            raise ValueError(f"singularity record needs 'center : exponent [: directions]', got {rec}")
        center = tuple(_floats(rec[0]))
        exp = float(rec[1])
        if len(rec) == 3:
            out.append((center, exp, tuple(_ints(rec[2]))))
        else:
            out.append((center, exp))
    return out


def _pairs(text: str) -> List[Tuple[float, float]]:
    out = []
    for rec in _records(text):
        vals = _floats(" ".join(rec))
        if len(vals) != 2:
            raise ValueError(f"expected 'a_E b_E' pairs, got {rec}")
        out.append((vals[0], vals[1]))
    return out


def _shifts(text: str) -> List[Tuple[int, ...]]:
    return [tuple(_ints(rec[0])) for rec in _records(text)]


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return parse


SCHEMA: Dict[str, Dict[str, Tuple[Callable, Any]]] = {
    "experiment": {
        "kind": (_choice(*KINDS), _REQUIRED),
        "case_id": (str.strip, _REQUIRED),
        "seed": (int, 0),
        "output_dir": (str.strip, "ma_output"),
    },
    "grid": {
        "n": (int, _REQUIRED),
        "m": (int, _REQUIRED),
        "period": (float, 1.0),
    },
    "form": {
        "type": (_choice("flat", "degenerate", "diagonal"), "flat"),
        "scale": (float, 1.0),
        "delta": (float, 0.0),
        "direction": (int, 0),
        "entries": (_floats, None),
    },
    "density": {
        "type": (_choice("constant", "algebraic"), "constant"),
        "zeros": (_singularities, []),
        "poles": (_singularities, []),
        "scale": (float, 1.0),
    },
    "solver": {
        "t": (float, 0.0),
        "eps_schedule": (_floats, [0.0]),
        "newton_tol": (float, 1e-10),
        "max_newton": (int, 60),
        "outer_mode": (_choice("direct_newton", "T_iteration"), "direct_newton"),
        "normalization": (_choice("sup_minus_one", "none"), "sup_minus_one"),
        "preconditioner": (_choice("fft", "jacobi"), "fft"),
    },
    "mms": {
        "grids": (_ints, _REQUIRED),
        "t_values": (_floats, None),
        "oracle_tol": (float, 1e-8),
        "order_min": (float, 1.9),
        "order_max": (float, 2.1),
        "continuum": (_bool, True),
    },
    "decay": {
        "profile_path": (str.strip, _REQUIRED),
        "alpha": (float, _REQUIRED),
        "B": (float, None),
        "B_factor": (float, 1.01),
        "exact": (_bool, False),
    },
    "klt": {
        "exponents": (_pairs, []),
        "eps": (float, 0.0),
        "quadrature": (_floats, []),
        "quadrature_n": (int, 1),
        "refinements": (int, 5),
    },
    "capacity": {
        "alpha": (float, 1.0),
    },
    "stability": {
        "p": (float, _REQUIRED),
        "deltas": (_floats, [1e-1, 1e-2, 1e-3, 1e-4]),
        "slack": (float, 0.1),
    },
    "holder": {
        "p": (float, _REQUIRED),
        "shifts": (_shifts, _REQUIRED),
        "slack": (float, 0.1),
    },
    "uniqueness": {
        "inits": (int, 5),
        "tol": (float, 1e-6),
    },
    "audit": {
        "alpha": (float, 1.0),
        "s_count": (int, 16),
    },
}

BASE_SECTIONS = ("experiment",)
KIND_SECTIONS = {
    "solve": ("grid", "form", "density", "solver"),
    "mms": ("grid", "solver", "mms"),
    "decay_lemma": ("decay",),
    "klt": ("klt",),
    "capacity": ("grid", "form", "density", "capacity"),
    "stability": ("grid", "form", "density", "solver", "stability"),
    "holder": ("grid", "form", "density", "solver", "holder"),
    "uniqueness": ("grid", "form", "density", "solver", "uniqueness"),
    "audit": ("grid", "form", "density", "solver", "audit"),
}


@dataclass
class ExperimentConfig:
    kind: str
    case_id: str
    seed: int
    output_dir: Path
    sections: Dict[str, Dict[str, Any]]
    source: Optional[Path] = None
    raw: Dict[str, Dict[str, str]] = dc_field(default_factory=dict)

    def get(self, section: str) -> Dict[str, Any]:
        return self.sections.get(section, {})

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key)
    loc = f"[{section}]" + (f" {key}" if key else "")
    return f"line {line}: {loc}" if line else loc


def parse_config_text(text: str, source: Optional[Path] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(source) if source else "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}") from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{_where(text, sec)}: unknown section")
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    kind_text = cp.get("experiment", "kind", fallback=None)
    if kind_text is None:
        raise ConfigError(f"{_where(text, 'experiment')}: missing required key 'kind'")
    if kind_text.strip() not in KINDS:
        raise ConfigError(f"{_where(text, 'experiment', 'kind')}: unknown kind {kind_text.strip()!r}")
    kind = kind_text.strip()
    wanted = BASE_SECTIONS + KIND_SECTIONS[kind]
    for sec in wanted:
        if not cp.has_section(sec) and any(d is _REQUIRED for _, d in SCHEMA[sec].values()):
            raise ConfigError(f"kind {kind!r} needs a [{sec}] section")
    sections: Dict[str, Dict[str, Any]] = {}
    raw: Dict[str, Dict[str, str]] = {}
    for sec in sorted(set(wanted) | set(cp.sections()), key=lambda s: list(SCHEMA).index(s)):
        schema = SCHEMA[sec]
        present = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for key in present:
            if key not in schema:
                raise ConfigError(f"{_where(text, sec, key)}: unknown key")
        vals = {}
        for key, (parse, default) in schema.items():
            if key in present:
                try:
                    vals[key] = parse(present[key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"{_where(text, sec, key)}: {exc}") from None
            elif default is _REQUIRED:
                raise ConfigError(f"{_where(text, sec)}: missing required key {key!r}")
            else:
                vals[key] = default
        sections[sec] = vals
        raw[sec] = present
    exp = sections["experiment"]
    return ExperimentConfig(kind, exp["case_id"], exp["seed"], Path(exp["output_dir"]), sections,
                            source, raw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path)
