"""Run configuration: one flat record driving data generation, pretraining,
recovery, fine-tuning, and evaluation.

Configs come from three places with increasing precedence: dataclass defaults
(the standard desk-scale benchmark), a line-oriented ``key = value`` file with
``#`` comments, and command-line flag overrides. A canonical digest of the
numerically relevant fields stamps checkpoints so a resumed run refuses state
produced under a different configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from ..datagen import DatasetSpec
from ..errors import ConfigurationError
from ..losses import LossConfig
from ..optim import ScheduleConfig

ARMS = ("hgcl_osr", "gcl_cold", "mbcl", "osr_only", "gcl_osr")

# Which pipeline stages each arm runs, and the loss it fine-tunes with.
# osr_only takes its variant from the config (recovery needs a loss to
# replay); the others imply theirs.
_ARM_TABLE = {
    "hgcl_osr": {"osr": True, "finetune": True, "variant": "hgcl"},
    "gcl_osr": {"osr": True, "finetune": True, "variant": "gcl"},
    "gcl_cold": {"osr": False, "finetune": True, "variant": "gcl"},
    "mbcl": {"osr": False, "finetune": True, "variant": "mbcl"},
    "osr_only": {"osr": True, "finetune": False, "variant": None},
}

_SEED_MOD = 2**64


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment arm needs. Defaults are the standard
    benchmark: 3072 generated pairs split 2048 train / 1024 held out.

    Seeds: ``seed`` is the master; the stage seeds derive from it as
    data = seed, model = 10000 + seed, train = 20000 + seed unless the
    corresponding ``*_seed`` field pins an explicit value.
    """

    # data: either a serialized corpus or generation parameters
    dataset_path: str | None = None
    n: int = 3072
    d_img: int = 32
    d_txt: int = 32
    k_concepts: int = 64
    noise_sigma: float = 0.1
    noise_alignment: float = 0.7
    test_fraction: float = 1.0 / 3.0
    # model
    hidden: int = 32
    d_embed: int = 16
    tau: float = 0.07
    # reference starting point
    pretrain_epochs: int = 8
    pretrain_batch: int = 256
    pretrain_lr: float = 1e-3
    # loss
    margin: float = 0.1
    epsilon: float = 1e-8
    hinge_power: float = 2.0
    variant: str | None = None
    # schedules and loop sizes
    lr_base: float = 1e-5
    lr_kind: str = "cosine"
    gamma_kind: str = "cosine_to_floor"
    gamma_start: float = 1.0
    gamma_floor: float = 0.9
    gamma_floor_epoch: int = 4
    recovery_gamma: float = 0.9
    osr_epochs: int = 5
    finetune_epochs: int = 5
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.02
    # seeds
    seed: int = 0
    data_seed: int | None = None
    model_seed: int | None = None
    train_seed: int | None = None
    # orchestration
    arm: str = "hgcl_osr"
    out_dir: str = "runs"
    top_k: int = 5
    record_timing: bool = True
    oracle_metrics: bool = False

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ConfigurationError(
                f"arm must be one of {ARMS}, got {self.arm!r}"
            )
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError(
                f"test_fraction must lie in (0, 1), got {self.test_fraction}"
            )
        if self.variant is not None and self.variant not in ("gcl", "hgcl", "mbcl"):
            raise ConfigurationError(
                f"variant must be 'gcl', 'hgcl', or 'mbcl', got {self.variant!r}"
            )
        for name in ("osr_epochs", "finetune_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(
                    f"{name} must be non-negative, got {getattr(self, name)}"
                )
        for name in ("batch_size", "pretrain_epochs", "pretrain_batch", "top_k"):
            if getattr(self, name) < 1:
                raise ConfigurationError(
                    f"{name} must be positive, got {getattr(self, name)}"
                )
        if not 0 < self.recovery_gamma <= 1:
            raise ConfigurationError(
                f"recovery_gamma must lie in (0, 1], got {self.recovery_gamma}"
            )


def arm_stages(cfg: RunConfig) -> dict:
    """Resolve what the configured arm does: keys ``osr``, ``finetune``, and
    ``variant`` (the loss actually used).

    The arms with implied losses refuse a contradicting ``variant`` key;
    osr_only defaults to the hinged loss and accepts either phi-based one.
    """
    entry = dict(_ARM_TABLE[cfg.arm])
    if entry["variant"] is None:
        chosen = cfg.variant if cfg.variant is not None else "hgcl"
        if chosen == "mbcl":
            raise ConfigurationError(
                "arm osr_only replays a phi-based loss; variant must be "
                "'gcl' or 'hgcl'"
            )
        entry["variant"] = chosen
    elif cfg.variant is not None and cfg.variant != entry["variant"]:
        raise ConfigurationError(
            f"arm {cfg.arm!r} implies variant {entry['variant']!r}; config "
            f"says {cfg.variant!r}"
        )
    return entry


def resolved_seeds(cfg: RunConfig) -> tuple[int, int, int]:
    """(data, model, train) seeds after master-seed derivation."""
    data = cfg.data_seed if cfg.data_seed is not None else cfg.seed
    model = cfg.model_seed if cfg.model_seed is not None else 10000 + cfg.seed
    train = cfg.train_seed if cfg.train_seed is not None else 20000 + cfg.seed
    return (data % _SEED_MOD, model % _SEED_MOD, train % _SEED_MOD)


def dataset_spec(cfg: RunConfig) -> DatasetSpec:
    """Generation recipe for the configured corpus (ignores dataset_path)."""
    return DatasetSpec(
        n=cfg.n,
        d_img=cfg.d_img,
        d_txt=cfg.d_txt,
        k_concepts=cfg.k_concepts,
        noise_sigma=cfg.noise_sigma,
        seed=resolved_seeds(cfg)[0],
        noise_alignment=cfg.noise_alignment,
    )


def loss_config(cfg: RunConfig, margin: float | None = None) -> LossConfig:
    """LossConfig for the arm's variant; ``margin`` overrides the configured
    one (used by the margin sweep)."""
    return LossConfig(
        variant=arm_stages(cfg)["variant"],
        tau=cfg.tau,
        epsilon=cfg.epsilon,
        margin=cfg.margin if margin is None else margin,
        hinge_power=cfg.hinge_power,
    )


def schedule_config(cfg: RunConfig) -> ScheduleConfig:
    """Fine-tuning schedules (lr and estimator rate)."""
    return ScheduleConfig(
        lr_base=cfg.lr_base,
        lr_kind=cfg.lr_kind,
        gamma_kind=cfg.gamma_kind,
        gamma_start=cfg.gamma_start,
        gamma_floor=cfg.gamma_floor,
        gamma_floor_epoch=cfg.gamma_floor_epoch,
    )


def recovery_schedule(cfg: RunConfig) -> ScheduleConfig:
    """Recovery-stage estimator rate: constant at ``recovery_gamma``."""
    return ScheduleConfig(
        lr_base=cfg.lr_base,
        lr_kind=cfg.lr_kind,
        gamma_kind="constant",
        gamma_floor=cfg.recovery_gamma,
    )


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def format_config(cfg: RunConfig) -> str:
    """Render a config as the file format it parses from (round-trippable)."""
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


# Fields outside the compatibility digest. out_dir and record_timing are
# operational knobs that never touch a number in the run. arm and variant are
# replaced by the resolved loss variant, so checkpoints flow between pipeline
# stages (pretrain, recovery, fine-tune) of the same numerical setup while a
# different loss still refuses.
_DIGEST_EXCLUDED = ("out_dir", "record_timing", "arm", "variant")


def config_digest(cfg: RunConfig) -> bytes:
    """32-byte digest of the numerically relevant fields, stamped into
    checkpoints so mismatched resumes are refused."""
    lines = [
        f"{f.name}={_format_value(getattr(cfg, f.name))}"
        for f in fields(cfg)
        if f.name not in _DIGEST_EXCLUDED
    ]
    lines.append(f"resolved_variant={arm_stages(cfg)['variant']}")
    return hashlib.sha256("\n".join(lines).encode()).digest()


_BOOL_WORDS = {
    "true": True, "false": False, "yes": True, "no": False, "1": True, "0": False,
}


def _coerce(name: str, text: str, kind: str):
    text = text.strip()
    if kind.startswith("opt_") and text.lower() == "none":
        return None
    base = kind.removeprefix("opt_")
    try:
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "bool":
            return _BOOL_WORDS[text.lower()]
        return text
    except (ValueError, KeyError):
        raise ConfigurationError(
            f"config key {name!r} expects a {base}, got {text!r}"
        ) from None


_FIELD_KINDS = {
    "dataset_path": "opt_str",
    "n": "int", "d_img": "int", "d_txt": "int", "k_concepts": "int",
    "noise_sigma": "float", "noise_alignment": "float", "test_fraction": "float",
    "hidden": "int", "d_embed": "int", "tau": "float",
    "pretrain_epochs": "int", "pretrain_batch": "int", "pretrain_lr": "float",
    "margin": "float", "epsilon": "float", "hinge_power": "float",
    "variant": "opt_str",
    "lr_base": "float", "lr_kind": "str", "gamma_kind": "str",
    "gamma_start": "float", "gamma_floor": "float", "gamma_floor_epoch": "int",
    "recovery_gamma": "float",
    "osr_epochs": "int", "finetune_epochs": "int", "batch_size": "int",
    "beta1": "float", "beta2": "float", "weight_decay": "float",
    "seed": "int", "data_seed": "opt_int", "model_seed": "opt_int",
    "train_seed": "opt_int",
    "arm": "str", "out_dir": "str", "top_k": "int",
    "record_timing": "bool", "oracle_metrics": "bool",
}

assert set(_FIELD_KINDS) == {f.name for f in fields(RunConfig)}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into raw string values.

    ``#`` starts a comment (full-line or trailing); blank lines are skipped;
    duplicate keys and lines without ``=`` are errors.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"config line {lineno} is not 'key = value': {raw.strip()!r}"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigurationError(f"duplicate config key {key!r} (line {lineno})")
        values[key] = value.strip()
    return values


def make_run_config(values: dict, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from raw string values plus already-typed overrides.

    Args:
        values: string-valued mapping, typically from :func:`parse_config_text`.
        overrides: native-typed mapping (flag values) applied on top.

    Raises:
        ConfigurationError: unknown key, uncoercible value, or any RunConfig
            invariant violation.
    """
    kwargs = {}
    for name, text in values.items():
        if name not in _FIELD_KINDS:
            raise ConfigurationError(f"unknown config key {name!r}")
        kwargs[name] = _coerce(name, text, _FIELD_KINDS[name])
    for name, value in (overrides or {}).items():
        if name not in _FIELD_KINDS:
            raise ConfigurationError(f"unknown config key {name!r}")
        kwargs[name] = value
    return RunConfig(**kwargs)


def load_config_file(path, overrides: dict | None = None) -> RunConfig:
    """Read and parse one config file, applying flag overrides on top."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return make_run_config(parse_config_text(text), overrides)
