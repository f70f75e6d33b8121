"""Experiment configuration: JSON file, schema validation, regime gates.

User files are merged over the shipped defaults, so a config only needs
the blocks it changes. Every error carries the file line of the offending
entry when the entry came from the user file.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .lattice import GridSpec
from .media import ConductivityModel
from .symbols import CarlemanParams

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ESTIMATE_NAMES",
    "load_config",
    "default_config",
    "config_schema",
    "json_lines",
]

ESTIMATE_NAMES = ("prop41", "energy-identity", "theorem2", "commutator", "multiplication",
                  "quotient", "pseudolocality", "derivative-l1", "estimate-q")

# gates per estimate; "tau>M" is the weaker condition used by the symbol bounds
ESTIMATE_GATES = {
    "prop41": ("tau>2MR",),
    "energy-identity": ("tau>2MR",),
    "theorem2": ("tau>8MR", "M>cR^2"),
    "commutator": ("tau>8MR",),
    "multiplication": ("tau>M",),
    "quotient": ("tau>M",),
    "pseudolocality": ("tau>8MR",),
    "derivative-l1": ("tau>M",),
    "estimate-q": ("tau>8MR", "M>=cR^2A^4"),
}


class ConfigError(ValueError):
    def __init__(self, message, path=(), line=None, source="<config>", gate=None):
        self.path = tuple(path)
        self.line = line
        self.source = source
        self.gate = gate
        where = f"{source}:{line}" if line is not None else f"{source} (default value)"
        dotted = _dotted(self.path)
        super().__init__(f"{where}: {dotted + ': ' if dotted else ''}{message}")


def _dotted(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (("." if out else "") + str(p))
    return out


def _read_resource(name):
    return resources.files("cgolab").joinpath(name).read_text()


def config_schema() -> dict:
    return json.loads(_read_resource("config_schema.json"))


def default_config() -> dict:
    return json.loads(_read_resource("default_config.json"))


_WS = re.compile(r"\s*")


def json_lines(text: str) -> dict:
    """Map JSON paths (tuples of keys/indices) to 1-based line numbers.

    Object members map to the line of their key. ``text`` must be valid JSON.
    """
    dec = json.JSONDecoder()
    pos = {}

    def skip(i):
        return _WS.match(text, i).end()

    def value(i, path):
        i = skip(i)
        pos.setdefault(path, i)
        c = text[i]
        if c == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                i = skip(i)
                start = i
                key, i = json.decoder.scanstring(text, i + 1)
                pos[path + (key,)] = start
                i = skip(i) + 1  # ':'
                i = skip(value(i, path + (key,)))
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if c == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            j = 0
            while True:
                i = skip(value(i, path + (j,)))
                j += 1
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        _, end = dec.raw_decode(text, i)
        return end

    value(0, ())
    return {p: text.count("\n", 0, i) + 1 for p, i in pos.items()}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    data: dict
    source: str = "<default>"
    lines: dict = field(default_factory=dict)

    # -- access ---------------------------------------------------------
    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def workers(self) -> int:
        return int(self.data["workers"])

    @property
    def output(self) -> str:
        return self.data["output"]

    @property
    def suite(self) -> list:
        return list(self.data["suite"])

    def grid(self) -> GridSpec:
        g = self.data["grid"]
        return GridSpec(int(g["n"]), int(g["N"]), float(g["L"]), float(g["R"]))

    def model(self, block: dict) -> ConductivityModel:
        b = dict(block)
        kind = b.pop("kind")
        if "center" in b:
            b["center"] = tuple(b["center"])
        return ConductivityModel(self.grid(), kind, **b)

    def k_vector(self, index) -> np.ndarray:
        g = self.grid()
        return np.asarray(index, float) * g.dk

    def canonical(self) -> str:
        """Canonical JSON of everything that can change a number (not the
        output directory or the worker count)."""
        d = {k: v for k, v in self.data.items() if k not in ("output", "workers")}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    # -- errors ---------------------------------------------------------
    def line_of(self, path):
        path = tuple(path)
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    def error(self, message, path, gate=None) -> ConfigError:
        # nearest enclosing entry the user file set; None for pure defaults
        return ConfigError(message, path, self.line_of(path), self.source, gate)

    # -- gates ----------------------------------------------------------
    def check(self, command: str, estimates=None):
        """Raise ConfigError for the first violated regime gate of ``command``."""
        g = self.grid()
        if g.N % 2:
            raise self.error("N must be even", ("grid", "N"))
        if command == "verify":
            names = self.suite if not estimates else list(estimates)
            for name in names:
                if name not in ESTIMATE_NAMES:
                    raise self.error(f"unknown estimate {name!r}", ("suite",))
                for path, p in self.points(name):
                    self._gate(name, path, p)
        elif command in ("cgo", "recover"):
            blk = self.data[command]
            ks = [blk["k_index"]] if command == "cgo" else blk["k_index"]
            for i, kidx in enumerate(ks):
                kp = ("cgo", "k_index") if command == "cgo" else ("recover", "k_index", i)
                if len(kidx) != g.n:
                    raise self.error(f"k_index needs {g.n} entries", kp)
                for j, z in enumerate(kidx):
                    if abs(z) >= g.N // 2:
                        raise self.error("k_index outside the grid lattice", kp + (j,))
                kn = float(np.linalg.norm(self.k_vector(kidx)))
                for j, t in enumerate(blk["taus"]):
                    if not t > kn:
                        raise self.error(f"gate tau>|k| violated (tau={t:g}, |k|={kn:.4g})",
                                         (command, "taus", j), "tau>|k|")
            self.model(blk["model"])
        elif command == "average":
            blk = self.data["average"]
            if len(blk["k_index"]) != g.n:
                raise self.error(f"k_index needs {g.n} entries", ("average", "k_index"))
            kn = float(np.linalg.norm(self.k_vector(blk["k_index"])))
            for j, lam in enumerate(blk["lambdas"]):
                if not lam >= max(kn, 1.0):
                    raise self.error(f"gate lambda>=max(|k|,1) violated (lambda={lam:g}, |k|={kn:.4g})",
                                     ("average", "lambdas", j), "lambda>=max(|k|,1)")
            for i, m in enumerate(blk["models"]):
                self._model_or_error(m, ("average", "models", i))
        else:
            raise ConfigError(f"unknown command {command!r}")
        return self

    def _model_or_error(self, block, path):
        try:
            return self.model(block)
        except ValueError as e:
            raise self.error(str(e), path) from None

    def points(self, name):
        """(path, CarlemanParams) for every parameter point of an estimate."""
        e = self.data["estimates"][name]
        R = float(self.data["grid"]["R"])
        base = ("estimates", name)
        out = []
        if name in ("prop41", "energy-identity", "quotient", "multiplication"):
            for j, t in enumerate(e["taus"]):
                out.append((base + ("taus", j), CarlemanParams(t, e["M"], R)))
        elif name in ("theorem2", "derivative-l1"):
            R_ = R if name == "theorem2" else 1.0
            out.append((base + ("calibrate",), CarlemanParams(e["calibrate"]["tau"], e["calibrate"]["M"], R_)))
            for j, h in enumerate(e["hold"]):
                out.append((base + ("hold", j), CarlemanParams(h["tau"], h["M"], R_)))
        elif name in ("commutator", "pseudolocality"):
            for j, M in enumerate(e["Ms"]):
                out.append((base + ("Ms", j), CarlemanParams(e["tau_factor"] * M * R, M, R)))
            if name == "pseudolocality":
                b = e["bump_point"]
                out.append((base + ("bump_point",), CarlemanParams(b["tau"], b["M"], R)))
        elif name == "estimate-q":
            for j, M in enumerate(e["Ms"]):
                out.append((base + ("Ms", j), CarlemanParams(e["tau"], M, R, e.get("c", 1.0))))
                out.append((base + ("tau",), CarlemanParams(2 * e["tau"], M, R, e.get("c", 1.0))))
        return out

    def _gate(self, name, path, p: CarlemanParams):
        for gate in ESTIMATE_GATES[name]:
            if gate == "tau>M":
                ok = p.tau > p.M
            elif gate == "M>=cR^2A^4":
                m = self._model_or_error(self.data["estimates"][name]["model"],
                                         ("estimates", name, "model"))
                ok = p.M >= p.c * p.R ** 2 * m.A ** 4
            else:
                ok = p.gates[gate]
            if not ok:
                raise self.error(
                    f"gate {gate} violated (tau={p.tau:g}, M={p.M:g}, R={p.R:g})", path, gate)


def load_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read, validate and merge a config file; ``overrides`` wins over both."""
    schema = config_schema()
    data = default_config()
    lines = {}
    source = "<default>"
    if path is not None:
        source = str(path)
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", source=source) from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", line=e.lineno,
                              source=source) from None
        lines = json_lines(text)
        try:
            jsonschema.validate(user, schema)
        except jsonschema.ValidationError as e:
            p = tuple(e.absolute_path)
            line = None
            q = p
            while q and line is None:
                line = lines.get(q)
                q = q[:-1]
            if line is None:
                line = 1
            raise ConfigError(e.message, p, line, source) from None
        data = _merge(data, user)
    if overrides:
        data = _merge(data, overrides)
        jsonschema.validate(data, schema)
    return ExperimentConfig(data, source, lines)
