"""Flat configuration files and the builders that turn them into experiments.

Format: `[section]` headers, one `key = value` per line, `#` comments.
Values are JSON (numbers, strings, booleans, bracketed lists; matrices as
lists of row lists); a bare word falls back to a string so `kind = markov`
works unquoted.  No nesting beyond the one section level.  Every parse or
validation error carries a line number, using the section header's line for
missing keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from nonconv.errors import ConfigError
from nonconv.indexing import IndexFamily, linear_family, polynomial_family, power_sparse_family
from nonconv.montecarlo import ExperimentConfig
from nonconv.observables import CATALOG, CenteredObservable, Observable, center
from nonconv.processes import ProcessModel, doubling_model, iid_model, markov_model

_BARE_WORD_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.")


@dataclass(frozen=True)
class RawConfig:
    """Parsed sections with the line number of each section header."""

    sections: dict
    header_lines: dict
    path: str = "<string>"

    def section(self, name: str, required: bool = True) -> dict | None:
        got = self.sections.get(name)
        if got is None and required:
            raise ConfigError(f"{self.path}: missing [{name}] section")
        return got

    def require(self, sec_name: str, key: str):
        sec = self.section(sec_name)
        if key not in sec:
            line = self.header_lines[sec_name]
            raise ConfigError(
                f"{self.path}:{line}: section [{sec_name}] is missing key '{key}'"
            )
        return sec[key]


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def _parse_value(raw: str, path: str, lineno: int):
    text = raw.strip()
    if not text:
        raise ConfigError(f"{path}:{lineno}: empty value")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if all(c in _BARE_WORD_OK for c in text):
            return text
        raise ConfigError(f"{path}:{lineno}: cannot parse value {text!r}")


def parse_config_text(text: str, path: str = "<string>") -> RawConfig:
    sections: dict = {}
    header_lines: dict = {}
    current: dict | None = None
    current_name = ""
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = _strip_comment(rawline).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if not name:
                raise ConfigError(f"{path}:{lineno}: empty section name")
            if name in sections:
                raise ConfigError(f"{path}:{lineno}: duplicate section [{name}]")
            current = {}
            current_name = name
            sections[name] = current
            header_lines[name] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value' or '[section]'")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key before any [section] header")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in current:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}' in [{current_name}]")
        current[key] = _parse_value(value, path, lineno)
    return RawConfig(sections=sections, header_lines=header_lines, path=path)


def load_config(path: str) -> RawConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config_text(text, path=path)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_model(raw: RawConfig) -> ProcessModel:
    kind = raw.require("model", "kind")
    sec = raw.section("model")
    if kind == "markov":
        return markov_model(raw.require("model", "transition"), raw.require("model", "values"))
    if kind == "iid":
        return iid_model(raw.require("model", "atoms"), raw.require("model", "probs"))
    if kind == "doubling":
        return doubling_model(
            raw.require("model", "table"),
            int(raw.require("model", "level")),
            float(sec.get("holder_const", 1.0)),
            float(sec.get("holder_exp", 1.0)),
        )
    line = raw.header_lines["model"]
    raise ConfigError(f"{raw.path}:{line}: unknown model kind {kind!r}")


def build_observable(raw: RawConfig, dim: int) -> Observable:
    kind = raw.require("observable", "kind")
    sec = dict(raw.section("observable"))
    sec.pop("kind")
    arity = int(sec.pop("arity", 0) or raw.require("observable", "arity"))
    maker = CATALOG.get(kind)
    if maker is None:
        line = raw.header_lines["observable"]
        raise ConfigError(f"{raw.path}:{line}: unknown observable kind {kind!r}")
    try:
        return maker(arity, dim=dim, **sec)
    except TypeError as e:
        line = raw.header_lines["observable"]
        raise ConfigError(f"{raw.path}:{line}: bad observable parameters: {e}")


def build_family(raw: RawConfig, arity: int) -> IndexFamily:
    sec = raw.section("family", required=False)
    if sec is None:
        return linear_family(arity)
    kind = sec.get("kind", "linear")
    if kind == "linear":
        fam = linear_family(int(sec.get("arity", arity)))
    elif kind == "polynomial":
        fam = polynomial_family(
            raw.require("family", "coeffs"), ray_start=int(sec.get("ray_start", 1))
        )
    elif kind == "power-sparse":
        fam = power_sparse_family(
            raw.require("family", "coeffs"),
            int(raw.require("family", "power")),
            ray_start=int(sec.get("ray_start", 1)),
        )
    else:
        line = raw.header_lines["family"]
        raise ConfigError(f"{raw.path}:{line}: unknown family kind {kind!r}")
    if fam.arity != arity:
        line = raw.header_lines["family"]
        raise ConfigError(
            f"{raw.path}:{line}: family arity {fam.arity} != observable arity {arity}"
        )
    return fam


@dataclass(frozen=True)
class Experiment:
    """Everything a run needs: the experiment config plus loose parameters."""

    config: ExperimentConfig
    model: ProcessModel
    centered: CenteredObservable
    family: IndexFamily
    gamma: float
    extras: dict  # remaining optional sections (mdp, martingale, bounds)


def build_experiment(
    raw: RawConfig,
    seed: int | None = None,
    replicates: int | None = None,
    n_grid: list | None = None,
    workers: int | None = None,
) -> Experiment:
    """Assemble a validated experiment, applying CLI overrides when given."""
    model = build_model(raw)
    obs = build_observable(raw, model.dim)
    centered = center(obs, model)
    family = build_family(raw, obs.arity)

    run = raw.section("run")
    grid = n_grid if n_grid is not None else raw.require("run", "n_grid")
    if isinstance(grid, (int, float)):
        grid = [grid]
    R = int(replicates if replicates is not None else run.get("replicates", 10_000))
    master_seed = int(seed if seed is not None else run.get("seed", 0))
    stats = run.get("statistics", ["tails"])
    checks = run.get("bound_checks", [])
    nworkers = int(workers if workers is not None else run.get("workers", 1))
    if isinstance(stats, str):
        stats = [stats]
    if isinstance(checks, str):
        checks = [checks]

    config = ExperimentConfig(
        model=model,
        centered=centered,
        family=family,
        n_grid=tuple(int(n) for n in grid),
        n_replicates=R,
        master_seed=master_seed,
        statistics=tuple(stats),
        bound_checks=tuple(checks),
        workers=nworkers,
    )
    bounds_sec = raw.section("bounds", required=False) or {}
    gamma = float(bounds_sec.get("gamma", 1.0))
    if gamma <= 0:
        line = raw.header_lines.get("bounds", raw.header_lines["run"])
        raise ConfigError(f"{raw.path}:{line}: gamma must be positive")
    extras = {
        name: dict(sec)
        for name, sec in raw.sections.items()
        if name not in ("model", "observable", "family", "run")
    }
    return Experiment(
        config=config,
        model=model,
        centered=centered,
        family=family,
        gamma=gamma,
        extras=extras,
    )
