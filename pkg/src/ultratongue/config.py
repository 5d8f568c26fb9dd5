"""Experiment configuration: INI-style ``key = value`` text with ``[section]`` headers.

Recognised sections (all optional)::

    [experiment]  out, seed
    [corpus]      path, n_utterances, min_frames, max_frames, noise
    [features]    any MfccConfig field
    [eigentongue] n_components
    [train]       optimizer, learning_rate, batch_size, max_epochs, patience, validation_fraction
    [systems]     names = 2x1000+ET, 2x1000+pixels, 5x5000+ET
    [system NAME] hidden = 256,256 ; target = et | pixels
    [evaluate]    dump_frames = yes | no
    [sweep]       optimizers, batch_sizes, widths (e.g. ``5x256; 5x512``), target
"""

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .features import MfccConfig
from .mlp import OPTIMIZERS, TrainConfig

DEFAULT_SYSTEMS = ("5x5000+ET", "2x1000+pixels", "2x1000+ET")
_SYSTEM_RE = re.compile(r"^(\d+)x(\d+)\+(et|pixels)$", re.IGNORECASE)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    hidden: tuple
    target: str  # "et" | "pixels"

    @property
    def hidden_text(self):
        if len(set(self.hidden)) == 1:
            return f"{len(self.hidden)} x {self.hidden[0]} units"
        return "-".join(str(w) for w in self.hidden) + " units"

    def features_text(self, n_components):
        return f"{n_components} ETs" if self.target == "et" else "64x64 pixels"


def parse_widths(text):
    """``"5x256"`` -> (256,)*5 ; ``"300,200"`` -> (300, 200)."""
    text = text.strip().lower()
    m = re.fullmatch(r"(\d+)x(\d+)", text)
    try:
        widths = (int(m.group(2)),) * int(m.group(1)) if m else tuple(int(w) for w in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse layer widths {text!r}") from None
    if not widths or min(widths) < 1:
        raise ConfigError(f"bad layer widths {text!r}")
    return widths


def parse_system_name(name):
    m = _SYSTEM_RE.match(name.strip())
    if not m:
        raise ConfigError(f"system name {name!r} is not of the form <layers>x<units>+<et|pixels>")
    hidden = parse_widths(f"{m.group(1)}x{m.group(2)}")
    return SystemSpec(name.strip(), hidden, m.group(3).lower())


@dataclass(frozen=True)
class SweepGrid:
    optimizers: tuple = OPTIMIZERS
    batch_sizes: tuple = (64, 128)
    widths: tuple = ((5000,) * 5,)
    target: str = "et"

    def cells(self):
        return [(o, b, w) for w in self.widths for o in self.optimizers for b in self.batch_sizes]


@dataclass(frozen=True)
class ExperimentConfig:
    out: Path = Path("run")
    seed: int = 0
    corpus_path: Path = None  # None -> <out>/corpus, generated on demand
    n_utterances: int = 30
    frames_per_utterance: tuple = (60, 120)
    noise: float = 0.6
    mfcc: MfccConfig = MfccConfig()
    n_components: int = 128
    train: TrainConfig = TrainConfig()
    validation_fraction: float = 0.10
    systems: tuple = tuple(parse_system_name(n) for n in DEFAULT_SYSTEMS)
    dump_frames: bool = True
    sweep: SweepGrid = field(default_factory=SweepGrid)

    def __post_init__(self):
        if not self.systems:
            raise ConfigError("at least one system is required")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")

    @property
    def corpus_dir(self):
        return Path(self.corpus_path) if self.corpus_path is not None else Path(self.out) / "corpus"

    def system(self, name):
        for s in self.systems:
            if s.name == name:
                return s
        raise ConfigError(f"unknown system {name!r}; configured: {', '.join(s.name for s in self.systems)}")


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _list(text, sep=","):
    return [t.strip() for t in text.split(sep) if t.strip()]


def _convert(kind, text, key):
    try:
        if kind is bool:
            return _bool(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None


def load_config(path=None, overrides=None):
    """Read an INI file (or nothing) into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cp.read_string(path.read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    kw = {}
    base = Path(path).parent if path is not None else Path(".")

    if cp.has_section("experiment"):
        sec = cp["experiment"]
        if "out" in sec:
            kw["out"] = base / sec["out"]
        if "seed" in sec:
            kw["seed"] = _convert(int, sec["seed"], "experiment.seed")

    if cp.has_section("corpus"):
        sec = cp["corpus"]
        if sec.get("path", "").strip():
            kw["corpus_path"] = base / sec["path"].strip()
        if "n_utterances" in sec:
            kw["n_utterances"] = _convert(int, sec["n_utterances"], "corpus.n_utterances")
        lo = _convert(int, sec.get("min_frames", "60"), "corpus.min_frames")
        hi = _convert(int, sec.get("max_frames", "120"), "corpus.max_frames")
        kw["frames_per_utterance"] = (lo, hi)
        if "noise" in sec:
            kw["noise"] = _convert(float, sec["noise"], "corpus.noise")

    if cp.has_section("features"):
        mf = {}
        types = {f.name: f.type for f in fields(MfccConfig)}
        for key, text in cp["features"].items():
            if key not in types:
                raise ConfigError(f"features.{key}: unknown option")
            kind = int if types[key] in (int, "int") else float
            mf[key] = _convert(kind, text, f"features.{key}")
        kw["mfcc"] = MfccConfig(**mf)

    if cp.has_section("eigentongue"):
        kw["n_components"] = _convert(int, cp["eigentongue"].get("n_components", "128"), "eigentongue.n_components")

    if cp.has_section("train"):
        sec = cp["train"]
        tk = {}
        if "optimizer" in sec:
            tk["optimizer"] = sec["optimizer"].strip().lower()
        for key, kind in (("learning_rate", float), ("batch_size", int), ("max_epochs", int)):
            if key in sec:
                tk[key] = _convert(kind, sec[key], f"train.{key}")
        if "patience" in sec:
            tk["early_stop_patience"] = _convert(int, sec["patience"], "train.patience")
        try:
            kw["train"] = TrainConfig(**tk)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if "validation_fraction" in sec:
            kw["validation_fraction"] = _convert(float, sec["validation_fraction"], "train.validation_fraction")

    names = list(DEFAULT_SYSTEMS)
    if cp.has_section("systems") and "names" in cp["systems"]:
        names = _list(cp["systems"]["names"])
    systems = []
    for name in names:
        sec_name = f"system {name}"
        if cp.has_section(sec_name):
            sec = cp[sec_name]
            try:
                default = parse_system_name(name)
                hidden, target = default.hidden, default.target
            except ConfigError:
                hidden, target = None, None
            if "hidden" in sec:
                hidden = parse_widths(sec["hidden"])
            if "target" in sec:
                target = sec["target"].strip().lower()
            if hidden is None or target not in ("et", "pixels"):
                raise ConfigError(f"[{sec_name}] needs hidden widths and target = et|pixels")
            systems.append(SystemSpec(name, hidden, target))
        else:
            systems.append(parse_system_name(name))
    kw["systems"] = tuple(systems)

    if cp.has_section("evaluate") and "dump_frames" in cp["evaluate"]:
        kw["dump_frames"] = _bool(cp["evaluate"]["dump_frames"])

    if cp.has_section("sweep"):
        sec = cp["sweep"]
        grid = SweepGrid()
        if "optimizers" in sec:
            opts = tuple(o.lower() for o in _list(sec["optimizers"]))
            bad = [o for o in opts if o not in OPTIMIZERS]
            if bad:
                raise ConfigError(f"sweep.optimizers: unknown {bad}")
            grid = replace(grid, optimizers=opts)
        if "batch_sizes" in sec:
            grid = replace(grid, batch_sizes=tuple(_convert(int, b, "sweep.batch_sizes") for b in _list(sec["batch_sizes"])))
        if "widths" in sec:
            grid = replace(grid, widths=tuple(parse_widths(w) for w in _list(sec["widths"], ";")))
        if "target" in sec:
            grid = replace(grid, target=sec["target"].strip().lower())
        kw["sweep"] = grid

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            kw["seed"] = int(value)
        elif key == "out":
            kw["out"] = Path(value)
        else:
            raise ConfigError(f"unknown override {key!r}")
    cfg = ExperimentConfig(**kw)
    # the global seed also drives training unless the config pins nothing else
    return replace(cfg, train=replace(cfg.train, seed=cfg.seed))
