"""
Experiment configuration and figure presets.

Configurations are flat INI files with one section per concern::

    [system]
    M = 512
    snr_db = 10

    [sweep]
    axis = M
    values = 20..1000:20

Every key has a default matching the baseline simulation parameters;
unknown sections or keys are rejected by name.
"""

from __future__ import annotations

import configparser
import io
import itertools
from dataclasses import dataclass

from .bounds import SystemParams, db_to_linear
from .exceptions import ConfigurationError
from .sweep import AXES, Scenario, SweepGrid, parse_values

__all__ = ["SCHEMA", "ExperimentConfig", "PRESETS", "preset", "load_config"]


def _int(s):
    try:
        f = float(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "auto", "none") else float(s)


def _text(s):
    return str(s).strip()


# section -> key -> (parser, default text)
SCHEMA = {
    "system": {
        "M": (_int, "512"),
        "N": (_int, "2"),
        "K": (_int, "10"),
        "T": (_int, "1000"),
        "omega": (_int, "3"),
        "snr_db": (float, "10"),
        "combiner": (_text, "zf"),
        "theta": (_opt_float, "auto"),
        "include_variance": (_bool, "false"),
    },
    "geometry": {
        "cell_radius": (float, "500"),
        "min_distance": (_opt_float, "auto"),   # auto: 0.1 * cell_radius
        "alpha": (float, "3.7"),
        "placement": (_text, "uniform-random"),
        "ring_radius": (float, "275"),
    },
    "correlation": {
        "wavelength": (float, "60"),
        "device_size": (float, "100"),
        "spacing": (_text, "max"),
    },
    "montecarlo": {
        "seed": (_int, "0"),
        "draws": (_int, "10000"),
        "mi_samples": (_int, "100000"),
        "detection_trials": (_int, "1000000"),
        "moment_samples": (_int, "50000"),
        "placements": (_int, "200"),
    },
    "sweep": {
        "axis": (_text, "M"),
        "values": (_text, "64,128,256,512,1024"),
        "candidate_n": (_text, "1,2,4,8,16"),
        "combiners": (_text, "mr,zf"),
        "series": (_text, ""),
    },
    "output": {
        "directory": (_text, ""),
        "command": (_text, ""),
    },
}

_KEY_SECTION = {k: s for s, keys in SCHEMA.items() for k in keys}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved configuration.

    ``raw`` maps ``(section, key)`` to the text form of every value, which
    is what gets serialised; typed access goes through :meth:`get`.
    """

    raw: tuple

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls(tuple(sorted((s, k, d) for s, keys in SCHEMA.items()
                                for k, (_, d) in keys.items())))

    def _dict(self):
        return {(s, k): v for s, k, v in self.raw}

    def get(self, key: str):
        section = _KEY_SECTION[key]
        parser = SCHEMA[section][key][0]
        text = self._dict()[(section, key)]
        try:
            return parser(text)
        except ValueError as exc:
            raise ConfigurationError(f"invalid value for {section}.{key}: {exc}") from None

    def override(self, updates) -> "ExperimentConfig":
        """
        Apply ``{key: text}`` updates; keys are ``key`` or ``section.key``.

        Raises
        ------
        ConfigurationError
            For unknown keys, or when the new value does not parse.
        """
        d = self._dict()
        for name, value in dict(updates).items():
            section, key = _resolve_key(name)
            d[(section, key)] = str(value).strip()
        cfg = ExperimentConfig(tuple(sorted((s, k, v) for (s, k), v in d.items())))
        for s, k, _ in cfg.raw:
            cfg.get(k)
        return cfg

    def to_sections(self) -> dict:
        out = {}
        for s, k, v in self.raw:
            out.setdefault(s, {})[k] = v
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for s in SCHEMA:
            cp[s] = {k: v for k, v in self.to_sections().get(s, {}).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_sections(cls, sections: dict) -> "ExperimentConfig":
        updates = {f"{s}.{k}": v for s, keys in sections.items() for k, v in keys.items()}
        return cls.defaults().override(updates)

    # -- typed views -----------------------------------------------------

    @property
    def seed(self) -> int:
        return self.get("seed")

    def system_params(self, **changes) -> SystemParams:
        p = SystemParams(M=self.get("M"), N=self.get("N"), K=self.get("K"), T=self.get("T"),
                         omega=self.get("omega"), snr=db_to_linear(self.get("snr_db")),
                         combiner=self.get("combiner").lower(), theta=self.get("theta"))
        return p.with_(**changes) if changes else p

    def scenario(self, **changes) -> Scenario:
        rc = self.get("cell_radius")
        rmin = self.get("min_distance")
        sc = Scenario(cell_radius=rc, min_distance=0.1 * rc if rmin is None else rmin,
                      alpha=self.get("alpha"), placement=self.get("placement"),
                      ring_radius=self.get("ring_radius"), wavelength=self.get("wavelength"),
                      device_size=self.get("device_size"), spacing=self.get("spacing"),
                      moment_samples=self.get("moment_samples"), seed=self.seed,
                      include_variance=self.get("include_variance"))
        return Scenario(**{**sc.__dict__, **changes}) if changes else sc

    def combiners(self) -> tuple:
        return tuple(c.strip().lower() for c in self.get("combiners").split(",") if c.strip())

    def candidate_n(self) -> tuple:
        return tuple(int(v) for v in parse_values(self.get("candidate_n")))

    def series(self) -> list:
        """Cartesian product of the ``series`` entries, e.g. ``omega=1,3; K=10,20``."""
        text = self.get("series")
        if not text:
            return [{}]
        names, options = [], []
        for part in text.split(";"):
            if not part.strip():
                continue
            name, sep, vals = part.partition("=")
            name = name.strip()
            if not sep or name not in ("M", "N", "K", "T", "omega", "snr_db", "device_size"):
                raise ConfigurationError(f"bad series entry {part.strip()!r}")
            names.append(name)
            options.append(parse_values(vals))
        return [dict(zip(names, combo)) for combo in itertools.product(*options)]

    def grids(self):
        """
        Yield ``(series, SweepGrid, Scenario)`` for every axis and series member.

        Several axes may be paired by separating them with ``;`` in both
        ``axis`` and ``values``.
        """
        axes = [a.strip() for a in self.get("axis").split(";")]
        value_lists = [v.strip() for v in self.get("values").split(";")]
        if len(axes) != len(value_lists):
            raise ConfigurationError("sweep.axis and sweep.values list different numbers of axes")
        for axis in axes:
            if axis not in AXES:
                raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {AXES}")
        for axis, text in zip(axes, value_lists):
            values = parse_values(text)
            if axis == "snr_eff":
                values = tuple(db_to_linear(v) for v in values)
            for member in self.series():
                cfg = self.override({k: v for k, v in member.items()})
                grid = SweepGrid(axis, values, cfg.system_params(), self.candidate_n(),
                                 self.combiners())
                yield member, grid, cfg.scenario()


def _resolve_key(name: str):
    name = name.strip()
    if "." in name:
        section, _, key = name.partition(".")
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section {section!r}")
        if key not in SCHEMA[section]:
            raise ConfigurationError(f"unknown config key {section}.{key}")
        return section, key
    if name not in _KEY_SECTION:
        raise ConfigurationError(f"unknown config key {name!r}")
    return _KEY_SECTION[name], name


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read an INI file on top of ``base`` (defaults if omitted)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    updates = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section {section!r}")
        for key, value in cp[section].items():
            updates[f"{section}.{key}"] = value
    return (base or ExperimentConfig.defaults()).override(updates)


_ONE_METRE = {"device_size": "1000"}

PRESETS = {
    "fig4": {"command": "tightness", "placement": "fixed-ring", "axis": "M",
             "values": "64,128,256,512,1024", "series": "K=10,20"},
    "fig5": {"command": "tightness", "placement": "uniform-random", "axis": "M",
             "values": "64,128,256,512,1024", "series": "K=10,20"},
    "n-sweep": {"command": "sweep", "axis": "N", "values": "1,2,4,8,16", "series": "K=10,20",
                **_ONE_METRE},
    "fig6": {"command": "sweep", "axis": "M", "values": "10..1000:10", "omega": "1",
             "combiners": "zf", **_ONE_METRE},
    "fig7": {"command": "sweep", "axis": "M", "values": "20..1000:20", "omega": "3",
             "combiners": "zf", **_ONE_METRE},
    "nstar-m": {"command": "sweep", "axis": "M", "values": "10..1000:10",
                "series": "omega=1,3;K=10,20", **_ONE_METRE},
    "fig8": {"command": "sweep", "axis": "K", "values": "1..50", "series": "omega=1,3",
             **_ONE_METRE},
    # device-size axes optimise the spacing: with maximum spread the correlation
    # energy follows the Bessel ripples and N* oscillates with D_m
    "fig9": {"command": "sweep", "axis": "T;D_m", "values": "10..2000:10;5..1000:5",
             "series": "omega=1,3", "spacing": "optimized"},
    "fig10": {"command": "sweep", "axis": "M", "values": "10..1000:10", "series": "omega=1,3",
              **_ONE_METRE},
    "fig11": {"command": "sweep", "axis": "K", "values": "1..50", "series": "omega=1,3",
              **_ONE_METRE},
    "fig12": {"command": "sweep", "axis": "K", "values": "1..50", "series": "omega=1,3",
              **_ONE_METRE},
    "fig13": {"command": "sweep", "axis": "T", "values": "10..2000:10", "series": "omega=1,3",
              **_ONE_METRE},
    "fig14": {"command": "sweep", "axis": "D_m", "values": "5..1000:5", "series": "omega=1,3",
              "spacing": "optimized"},
}


def preset(figure_id: str) -> ExperimentConfig:
    """Resolved configuration reproducing one of the reference figures."""
    key = figure_id.strip().lower()
    if key not in PRESETS:
        raise ConfigurationError(f"unknown preset {figure_id!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.defaults().override(PRESETS[key])
