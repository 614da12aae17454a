"""Versioned binary persistence for recovered optimizer state.

A checkpoint bundles everything a later stage needs to continue a run: the
parameter vector, the AdamW moment accumulators, the per-anchor moving-average
estimators with their freshness tags, the temperature, the schedule settings,
the step counters, the seeds, and a hash of the run configuration. Round trips
are bit-exact; a CRC32 trailer catches corruption; a config-hash mismatch is
refused unless the caller forces the load.

Layout (little-endian): magic "TTCK", u16 version, 32-byte config hash, three
u64 seeds, f8 tau, schedule block, moment hyperparameters, step counters,
array dims, then the arrays (omega, m, v as f8; u_x, u_z as f8; last_update
as i8), and finally a u32 CRC32 of every preceding byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import CheckpointError
from ..optim import EstimatorState, MomentState, ScheduleConfig

MAGIC = b"TTCK"
FORMAT_VERSION = 1

_LR_KINDS = ("constant", "cosine")
_GAMMA_KINDS = ("constant", "cosine_to_floor")

_HEAD = struct.Struct("<4sH")
_FIXED = struct.Struct(
    "<32s"   # config hash (sha256 digest)
    "QQQ"    # data / model / train seeds
    "d"      # tau
    "dddIBB"  # lr_base, gamma_start, gamma_floor, gamma_floor_epoch, lr_kind, gamma_kind
    "ddd"    # beta1, beta2, weight_decay
    "QQI"    # moment step t, estimator step, epochs completed
    "QQ"     # omega dimension, corpus size n
)
_CRC = struct.Struct("<I")


@dataclass
class Checkpoint:
    """One saved state snapshot. ``seeds`` is (data, model, train)."""

    omega: np.ndarray
    moments: MomentState
    estimators: EstimatorState
    tau: float
    schedules: ScheduleConfig
    config_hash: bytes
    seeds: tuple[int, int, int]
    epoch: int = 0
    version: int = FORMAT_VERSION


def _validate(c: Checkpoint) -> None:
    if c.version != FORMAT_VERSION:
        raise CheckpointError(
            f"cannot write version {c.version} (this writer produces "
            f"{FORMAT_VERSION})"
        )
    if len(c.config_hash) != 32:
        raise CheckpointError(
            f"config hash must be 32 bytes, got {len(c.config_hash)}"
        )
    if c.omega.ndim != 1:
        raise CheckpointError(f"omega must be a vector, got shape {c.omega.shape}")
    if c.moments.m.shape != c.omega.shape or c.moments.v.shape != c.omega.shape:
        raise CheckpointError(
            f"moment shapes {c.moments.m.shape}/{c.moments.v.shape} do not "
            f"match omega {c.omega.shape}"
        )
    if c.estimators.u_z.shape != c.estimators.u_x.shape:
        raise CheckpointError(
            f"estimator shapes differ: {c.estimators.u_x.shape} vs "
            f"{c.estimators.u_z.shape}"
        )
    if len(c.seeds) != 3:
        raise CheckpointError(f"seeds must be a (data, model, train) triple, got {c.seeds!r}")


def save_checkpoint(c: Checkpoint, path) -> None:
    """Serialize a checkpoint. The written file reloads bit-identically."""
    _validate(c)
    sched = c.schedules
    payload = bytearray()
    payload += _HEAD.pack(MAGIC, c.version)
    payload += _FIXED.pack(
        bytes(c.config_hash),
        c.seeds[0], c.seeds[1], c.seeds[2],
        c.tau,
        sched.lr_base, sched.gamma_start, sched.gamma_floor,
        sched.gamma_floor_epoch,
        _LR_KINDS.index(sched.lr_kind), _GAMMA_KINDS.index(sched.gamma_kind),
        c.moments.beta1, c.moments.beta2, c.moments.weight_decay,
        c.moments.t, c.estimators.step, c.epoch,
        c.omega.size, c.estimators.u_x.size,
    )
    for arr, dtype in (
        (c.omega, "<f8"), (c.moments.m, "<f8"), (c.moments.v, "<f8"),
        (c.estimators.u_x, "<f8"), (c.estimators.u_z, "<f8"),
        (c.estimators.last_update, "<i8"),
    ):
        payload += np.ascontiguousarray(arr, dtype=dtype).tobytes()
    payload += _CRC.pack(zlib.crc32(bytes(payload)))
    with open(path, "wb") as fh:
        fh.write(bytes(payload))


def load_checkpoint(
    path, expected_config_hash: bytes | None = None, force: bool = False
) -> Checkpoint:
    """Parse and verify a checkpoint file.

    Args:
        expected_config_hash: when given, the stored hash must match or the
            load is refused; ``force=True`` downgrades the mismatch to a load
            anyway (the caller takes responsibility for compatibility).

    Raises:
        CheckpointError: wrong magic or version, checksum failure, truncated
            or oversized payload, or an unforced config-hash mismatch.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size + _FIXED.size + _CRC.size:
        raise CheckpointError(f"file too short to be a checkpoint ({len(data)} bytes)")
    magic, version = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (stored_crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(data[: len(data) - _CRC.size]) != stored_crc:
        raise CheckpointError("checksum mismatch; the file is corrupted")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (this reader handles "
            f"{FORMAT_VERSION})"
        )

    (
        config_hash, seed_data, seed_model, seed_train, tau,
        lr_base, gamma_start, gamma_floor, gamma_floor_epoch,
        lr_kind_code, gamma_kind_code,
        beta1, beta2, weight_decay,
        moment_t, est_step, epoch,
        dim, n,
    ) = _FIXED.unpack_from(data, _HEAD.size)
    if lr_kind_code >= len(_LR_KINDS) or gamma_kind_code >= len(_GAMMA_KINDS):
        raise CheckpointError(
            f"unknown schedule kind codes ({lr_kind_code}, {gamma_kind_code})"
        )

    expected_len = (
        _HEAD.size + _FIXED.size + 8 * (3 * dim + 2 * n) + 8 * n + _CRC.size
    )
    if len(data) != expected_len:
        raise CheckpointError(
            f"payload is {len(data)} bytes but the header implies {expected_len}"
        )

    off = _HEAD.size + _FIXED.size

    def block(count, dtype):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).copy()
        off += count * 8
        return arr

    omega = block(dim, "<f8")
    m = block(dim, "<f8")
    v = block(dim, "<f8")
    u_x = block(n, "<f8")
    u_z = block(n, "<f8")
    last_update = block(n, "<i8")

    if expected_config_hash is not None and config_hash != expected_config_hash:
        if not force:
            raise CheckpointError(
                "checkpoint was written under a different configuration "
                f"(stored hash {config_hash.hex()[:16]}..., expected "
                f"{bytes(expected_config_hash).hex()[:16]}...); pass force to "
                "load anyway"
            )
    return Checkpoint(
        omega=omega,
        moments=MomentState(
            m=m, v=v, t=int(moment_t),
            beta1=beta1, beta2=beta2, weight_decay=weight_decay,
        ),
        estimators=EstimatorState(
            u_x=u_x, u_z=u_z, step=int(est_step), last_update=last_update
        ),
        tau=tau,
        schedules=ScheduleConfig(
            lr_base=lr_base,
            lr_kind=_LR_KINDS[lr_kind_code],
            gamma_kind=_GAMMA_KINDS[gamma_kind_code],
            gamma_start=gamma_start,
            gamma_floor=gamma_floor,
            gamma_floor_epoch=int(gamma_floor_epoch),
        ),
        config_hash=config_hash,
        seeds=(int(seed_data), int(seed_model), int(seed_train)),
        epoch=int(epoch),
        version=version,
    )


def check_checkpoint_shape(c: Checkpoint, dim: int, n: int) -> None:
    """Refuse a checkpoint whose arrays do not fit the current model/corpus.

    Args:
        dim: expected parameter-vector length.
        n: expected corpus size (anchor count).
    """
    if c.omega.size != dim:
        raise CheckpointError(
            f"checkpoint holds {c.omega.size} parameters, model has {dim}"
        )
    if c.estimators.u_x.size != n:
        raise CheckpointError(
            f"checkpoint estimators are sized for n={c.estimators.u_x.size}, "
            f"corpus has n={n}"
        )
