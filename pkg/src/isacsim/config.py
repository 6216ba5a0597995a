"""Experiment configuration: INI-style files parsed into typed sections.

Every runnable experiment reads a config with a [frame] section (the
waveform geometry), an optional [channel] section (propagation scenario)
and one section named after the experiment kind carrying its options.
Unknown sections, unknown keys and out-of-range values raise ConfigError
with the offending location in the message.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .channel import ScenarioConfig
from .waveform import FrameConfig


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


EXPERIMENT_KINDS = ("papr", "ber", "rate", "sense", "train", "eval")

_METHODS = ("zf", "mmse", "nn-level2", "nn-two-level")
_WAVEFORMS = ("si", "ofdm")
_ESTIMATORS = ("periodogram", "music", "nn")


@dataclass
class PaprOptions:
    waveforms: tuple[str, ...] = ("si-cp", "si-fgi", "ofdm")
    blocks: int = 100_000
    oversample: int = 1
    threshold_min_db: float = 4.0
    threshold_max_db: float = 13.0


@dataclass
class BerOptions:
    waveforms: tuple[str, ...] = ("si",)
    methods: tuple[str, ...] = ("zf", "mmse")
    snr_db: tuple[float, ...] = (10.0,)
    pn_variance: tuple[float, ...] = (0.0,)
    target_errors: int = 100
    max_bits: int = 10_000_000
    checkpoint: str = ""
    block_doppler: bool = False


@dataclass
class RateOptions:
    bandwidth_hz: float = 30e9
    snr_db: float = 20.0
    t_sym_s: float = 0.13e-6   # useful block duration in the rate model
    t_cp_s: float = 0.032e-6   # fixed guard duration charged to the CP scheme


@dataclass
class SenseOptions:
    axis: str = "range"        # "range" | "velocity"
    estimators: tuple[str, ...] = ("periodogram",)
    snr_db: tuple[float, ...] = (10.0,)
    trials: int = 500
    zero_pad: int = 16
    checkpoint: str = ""


@dataclass
class TrainOptions:
    receiver: str = "block"    # block | tracker | two-level | range | velocity
    reference: str = "received"
    group_symbols: int = 8
    n_frames: int = 1000
    snr_db: tuple[float, ...] = (10.0,)
    pn_low: float = 0.0
    pn_high: float = 0.0
    epochs: int = 40
    lr: float = 1e-3
    decay_epochs: int = 0
    decay_lr: float = 3e-4
    batch_size: int = 128
    test_fraction: float = 0.1
    loss_weight_comm: float = 1.0
    loss_weight_sense: float = 1.0
    checkpoint: str = "receiver.ckpt"


@dataclass
class EvalOptions:
    checkpoint: str = ""
    n_frames: int = 500
    snr_db: tuple[float, ...] = (10.0,)
    pn_variance: float = 0.0


@dataclass
class ExperimentConfig:
    kind: str
    frame: FrameConfig
    scenario: ScenarioConfig
    seed: int = 0
    out: str = ""
    threads: int = 1
    papr: PaprOptions = field(default_factory=PaprOptions)
    ber: BerOptions = field(default_factory=BerOptions)
    rate: RateOptions = field(default_factory=RateOptions)
    sense: SenseOptions = field(default_factory=SenseOptions)
    train: TrainOptions = field(default_factory=TrainOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)


def _parse_scalar(raw: str, kind: type, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from exc


def _parse_value(raw: str, annotation, where: str):
    if annotation in ("int", int):
        return _parse_scalar(raw, int, where)
    if annotation in ("float", float):
        return _parse_scalar(raw, float, where)
    if annotation in ("bool", bool):
        return _parse_scalar(raw, bool, where)
    if annotation in ("str", str):
        return raw.strip()
    if "tuple[float" in str(annotation):
        items = [s for s in raw.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{where}: empty list")
        return tuple(_parse_scalar(s, float, where) for s in items)
    if "tuple[str" in str(annotation):
        items = tuple(s.strip() for s in raw.split(",") if s.strip())
        if not items:
            raise ConfigError(f"{where}: empty list")
        return items
    raise ConfigError(f"{where}: unsupported option type {annotation}")


def _fill_dataclass(cls, section: configparser.SectionProxy, name: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        kwargs[key] = _parse_value(raw, known[key].type, f"[{name}] {key}")
    return cls(**kwargs)


def _frame_from_section(section) -> FrameConfig:
    int_keys = {"n", "block_size", "n_blocks", "ref_spacing", "n_cp", "n_fixed",
                "zc_root"}
    float_keys = {"subcarrier_spacing", "carrier_freq"}
    kwargs = {}
    for key, raw in section.items():
        if key in int_keys:
            kwargs[key] = _parse_scalar(raw, int, f"[frame] {key}")
        elif key in float_keys:
            kwargs[key] = _parse_scalar(raw, float, f"[frame] {key}")
        elif key == "guard":
            kwargs[key] = raw.strip()
        else:
            raise ConfigError(f"[frame] unknown key {key!r}")
    try:
        return FrameConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[frame] {exc}") from exc


def _scenario_from_section(section) -> ScenarioConfig:
    kwargs = {}
    for key, raw in section.items():
        if key == "scenario":
            kwargs["kind"] = raw.strip()
        elif key in ("n_nlos", "n_targets"):
            kwargs[key] = _parse_scalar(raw, int, f"[channel] {key}")
        elif key == "with_doppler":
            kwargs[key] = _parse_scalar(raw, bool, f"[channel] {key}")
        elif key == "los_range":
            kwargs[key] = raw.strip()
        elif key == "max_speed":
            kwargs[key] = _parse_scalar(raw, float, f"[channel] {key}")
        else:
            raise ConfigError(f"[channel] unknown key {key!r}")
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[channel] {exc}") from exc


_OPTION_SECTIONS = {
    "papr": PaprOptions, "ber": BerOptions, "rate": RateOptions,
    "sense": SenseOptions, "train": TrainOptions, "eval": EvalOptions,
}


def load_config(path, kind: str) -> ExperimentConfig:
    """Parse `path` for the given experiment kind, strictly validated."""
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = Path(path)
    if not text.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read_string(text.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    allowed = {"frame", "channel", "run"} | set(_OPTION_SECTIONS)
    for name in parser.sections():
        if name not in allowed:
            raise ConfigError(f"unknown section [{name}]")

    if "frame" not in parser:
        raise ConfigError("missing [frame] section")
    frame = _frame_from_section(parser["frame"])
    scenario = (_scenario_from_section(parser["channel"])
                if "channel" in parser else ScenarioConfig(kind="awgn"))

    cfg = ExperimentConfig(kind=kind, frame=frame, scenario=scenario)
    if "run" in parser:
        for key, raw in parser["run"].items():
            if key == "seed":
                cfg.seed = _parse_scalar(raw, int, "[run] seed")
            elif key == "out":
                cfg.out = raw.strip()
            elif key == "threads":
                cfg.threads = _parse_scalar(raw, int, "[run] threads")
            else:
                raise ConfigError(f"[run] unknown key {key!r}")
    for name, cls in _OPTION_SECTIONS.items():
        if name in parser:
            setattr(cfg, name, _fill_dataclass(cls, parser[name], name))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.threads < 1:
        raise ConfigError("[run] threads must be >= 1")
    if cfg.kind == "papr":
        o = cfg.papr
        if o.blocks < 1:
            raise ConfigError("[papr] blocks must be >= 1")
        if o.oversample < 1:
            raise ConfigError("[papr] oversample must be >= 1")
        if o.threshold_min_db >= o.threshold_max_db:
            raise ConfigError("[papr] threshold range is empty")
        bad = set(o.waveforms) - {"si-cp", "si-fgi", "ofdm"}
        if bad:
            raise ConfigError(f"[papr] unknown waveforms {sorted(bad)}")
    elif cfg.kind == "ber":
        o = cfg.ber
        if set(o.methods) - set(_METHODS):
            raise ConfigError(f"[ber] methods must be among {_METHODS}")
        if set(o.waveforms) - set(_WAVEFORMS):
            raise ConfigError(f"[ber] waveforms must be among {_WAVEFORMS}")
        if not o.snr_db:
            raise ConfigError("[ber] snr_db list is empty")
        if o.target_errors < 1 or o.max_bits < 1:
            raise ConfigError("[ber] stopping rule must be positive")
        if any(v < 0 for v in o.pn_variance):
            raise ConfigError("[ber] pn_variance must be >= 0")
        if any(m.startswith("nn") for m in o.methods):
            if not o.checkpoint:
                raise ConfigError("[ber] nn methods need a checkpoint path")
            if "ofdm" in o.waveforms:
                raise ConfigError("[ber] nn methods support the si waveform only")
        if len(o.snr_db) > 1 and len(o.pn_variance) > 1:
            raise ConfigError("[ber] sweep either snr_db or pn_variance, not both")
    elif cfg.kind == "rate":
        o = cfg.rate
        if o.bandwidth_hz <= 0:
            raise ConfigError("[rate] bandwidth_hz must be > 0")
        if o.t_sym_s <= 0 or o.t_cp_s <= 0:
            raise ConfigError("[rate] durations must be > 0")
    elif cfg.kind == "sense":
        o = cfg.sense
        if o.axis not in ("range", "velocity"):
            raise ConfigError("[sense] axis must be range or velocity")
        if set(o.estimators) - set(_ESTIMATORS):
            raise ConfigError(f"[sense] estimators must be among {_ESTIMATORS}")
        if o.trials < 1:
            raise ConfigError("[sense] trials must be >= 1")
        if not o.snr_db:
            raise ConfigError("[sense] snr_db list is empty")
        if "nn" in o.estimators and not o.checkpoint:
            raise ConfigError("[sense] nn estimator needs a checkpoint path")
    elif cfg.kind == "train":
        o = cfg.train
        if o.receiver not in ("block", "tracker", "two-level", "range", "velocity"):
            raise ConfigError(f"[train] unknown receiver {o.receiver!r}")
        if o.reference not in ("received", "cfr", "none"):
            raise ConfigError(f"[train] unknown reference {o.reference!r}")
        if o.n_frames < 1 or o.epochs < 0 or o.decay_epochs < 0:
            raise ConfigError("[train] frame/epoch counts out of range")
        if not 0.0 < o.test_fraction < 1.0:
            raise ConfigError("[train] test_fraction must be in (0, 1)")
        if o.pn_low < 0 or o.pn_high < o.pn_low:
            raise ConfigError("[train] phase-noise range is invalid")
        if o.pn_high > 0 and o.pn_low <= 0:
            raise ConfigError("[train] pn_low must be > 0 when augmenting")
        if not o.checkpoint:
            raise ConfigError("[train] checkpoint path is required")
    elif cfg.kind == "eval":
        o = cfg.eval
        if not o.checkpoint:
            raise ConfigError("[eval] checkpoint path is required")
        if o.n_frames < 1:
            raise ConfigError("[eval] n_frames must be >= 1")
        if o.pn_variance < 0:
            raise ConfigError("[eval] pn_variance must be >= 0")
