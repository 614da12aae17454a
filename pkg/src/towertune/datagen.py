"""Synthetic paired image/text corpora with planted concept structure.

Samples are grouped into concepts. Both rows of a pair are noisy copies of
their concept's prototype, so same-concept pairs are semantic near-duplicates
of each other: exactly the planted false negatives the retrieval audit in the
harness looks for. A fraction of the per-sample noise is shared across the two
modalities (see ``DatasetSpec.noise_alignment``) so that held-out pair-level
retrieval is learnable rather than a within-concept lottery.

All randomness flows through ``numpy.random.default_rng`` (PCG64) seeded from
``DatasetSpec.seed``; generation is bit-reproducible for a fixed spec.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DataFormatError, SchemaError

MAGIC = b"FCDS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHIIII")  # magic, version, n, d_img, d_txt, k_concepts
_SEED = struct.Struct("<Q")


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for one synthetic paired corpus.

    Args:
        n: number of image/text pairs, at least 2.
        d_img: raw image feature width.
        d_txt: raw text feature width.
        k_concepts: number of planted concepts, between 1 and n.
        noise_sigma: per-sample noise scale, non-negative.
        seed: RNG seed (PCG64). Stored in the serialized file.
        noise_alignment: fraction (in [0, 1], as a mixing coefficient alpha) of
            the text noise that is a fixed linear image of the pair's image
            noise. 0 makes the modal noises independent; 1 makes them a
            deterministic linear map of each other. NaN marks a value that was
            not recorded by the serialization format.
    """

    n: int
    d_img: int
    d_txt: int
    k_concepts: int
    noise_sigma: float
    seed: int
    noise_alignment: float = 0.7

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"n must be positive, got {self.n}")
        if self.d_img < 1:
            raise ConfigurationError(f"d_img must be positive, got {self.d_img}")
        if self.d_txt < 1:
            raise ConfigurationError(f"d_txt must be positive, got {self.d_txt}")
        if self.k_concepts < 1:
            raise ConfigurationError(
                f"k_concepts must be positive, got {self.k_concepts}"
            )
        if self.noise_sigma < 0:
            raise ConfigurationError(
                f"noise_sigma must be non-negative, got {self.noise_sigma}"
            )
        if self.noise_alignment < 0 or self.noise_alignment > 1:
            raise ConfigurationError(
                f"noise_alignment must lie in [0, 1], got {self.noise_alignment}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must fit in uint64, got {self.seed}")


@dataclass
class PairedDataset:
    """A realized corpus: row i of ``images`` is paired with row i of ``texts``."""

    images: np.ndarray
    texts: np.ndarray
    concepts: np.ndarray
    spec: DatasetSpec

    @property
    def n(self) -> int:
        return self.images.shape[0]

    def same_concept(self) -> np.ndarray:
        """Boolean (n, n) matrix: entry (i, j) is True iff pair i and pair j
        share a concept. The diagonal is True."""
        return self.concepts[:, None] == self.concepts[None, :]


def _concept_assignment(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Balanced assignment: tile 0..k-1 to length n, then shuffle.

    Every concept receives floor(n/k) or ceil(n/k) samples; in particular
    k == n yields exactly one sample per concept.
    """
    base = np.tile(np.arange(k, dtype=np.uint32), n // k + 1)[:n]
    return base[rng.permutation(n)]


def _cross_modal_map(d_img: int, d_txt: int, rng: np.random.Generator) -> np.ndarray:
    """The fixed (d_img, d_txt) map carrying image-space structure into text
    space, used for both prototypes and the aligned noise component.

    Equal widths use the identity so that a pair's prototypes point in the
    same direction (the zero-noise audit invariant: cosine 1 exactly for
    shared concepts). Different widths use a semi-orthogonal map; the image of
    an isotropic Gaussian stays isotropic when d_img >= d_txt and spans a
    rank-d_img subspace otherwise.

    One Gaussian block is drawn either way, keeping the stream layout
    identical across shapes.
    """
    g = rng.standard_normal((d_img, d_txt))
    if d_img == d_txt:
        return np.eye(d_img)
    if d_img > d_txt:
        q, _ = np.linalg.qr(g)
        return q
    q, _ = np.linalg.qr(g.T)
    return q.T


def generate(spec: DatasetSpec) -> PairedDataset:
    """Draw one corpus from a spec.

    Text prototypes are a fixed random positive scale times the cross-modal
    image of the matching image prototype, so the pairing is exact in
    direction but not in magnitude. Draw order (fixed for reproducibility):
    concept prototypes, prototype scale, the cross-modal map, the concept
    assignment, image noise, text residual noise.

    Generation preconditions (checked here, not at spec construction, so that
    subset specs produced by :func:`split` stay representable): n >= 2 and
    k_concepts <= n.

    Returns:
        PairedDataset with float64 features and uint32 concept labels.
    """
    if spec.n < 2:
        raise ConfigurationError(f"n must be at least 2 to generate, got {spec.n}")
    if spec.k_concepts > spec.n:
        raise ConfigurationError(
            f"k_concepts must not exceed n={spec.n}, got {spec.k_concepts}"
        )
    if not np.isfinite(spec.noise_sigma):
        raise ConfigurationError("noise_sigma must be finite to generate")
    if not np.isfinite(spec.noise_alignment):
        raise ConfigurationError("noise_alignment must be finite to generate")
    rng = np.random.default_rng(spec.seed)

    proto_img = rng.standard_normal((spec.k_concepts, spec.d_img))
    proto_scale = float(np.exp(0.25 * rng.standard_normal()))
    cross = _cross_modal_map(spec.d_img, spec.d_txt, rng)
    proto_txt = proto_scale * (proto_img @ cross)

    concepts = _concept_assignment(spec.n, spec.k_concepts, rng)
    xi = rng.standard_normal((spec.n, spec.d_img))
    zeta = rng.standard_normal((spec.n, spec.d_txt))

    alpha = spec.noise_alignment
    images = proto_img[concepts] + spec.noise_sigma * xi
    texts = proto_txt[concepts] + spec.noise_sigma * (
        alpha * (xi @ cross) + np.sqrt(1.0 - alpha * alpha) * zeta
    )
    return PairedDataset(images=images, texts=texts, concepts=concepts, spec=spec)


def split(
    dataset: PairedDataset, test_fraction: float, seed: int
) -> tuple[PairedDataset, PairedDataset]:
    """Disjoint, exhaustive train/test partition. Pairing is preserved:
    image and text rows move together.

    Args:
        dataset: corpus to partition.
        test_fraction: fraction of pairs routed to the test subset; the test
            subset gets round(n * test_fraction) pairs and must end up with at
            least 1 while leaving at least 2 for training.
        seed: permutation seed, independent of the generation seed.
    """
    n = dataset.n
    n_test = int(round(n * test_fraction))
    n_train = n - n_test
    if n_test < 1 or n_train < 2:
        raise ConfigurationError(
            f"test_fraction {test_fraction} gives a degenerate split "
            f"(train {n_train}, test {n_test}) of n={n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train_idx, test_idx = np.sort(perm[n_test:]), np.sort(perm[:n_test])

    def take(idx):
        sub_spec = replace(dataset.spec, n=len(idx))
        return PairedDataset(
            images=dataset.images[idx].copy(),
            texts=dataset.texts[idx].copy(),
            concepts=dataset.concepts[idx].copy(),
            spec=sub_spec,
        )

    return take(train_idx), take(test_idx)


def save_dataset(dataset: PairedDataset, path) -> None:
    """Serialize to the FCDS v1 binary layout.

    Little-endian throughout: magic "FCDS", u16 version, u32 n / d_img /
    d_txt / k_concepts, row-major float64 images, row-major float64 texts,
    u32 concept labels, u64 generation seed. noise_sigma and noise_alignment
    are not part of the format.
    """
    n, d_img = dataset.images.shape
    d_txt = dataset.texts.shape[1]
    if dataset.texts.shape[0] != n or dataset.concepts.shape[0] != n:
        raise SchemaError(
            f"inconsistent row counts: images {n}, texts {dataset.texts.shape[0]}, "
            f"concepts {dataset.concepts.shape[0]}"
        )
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(MAGIC, FORMAT_VERSION, n, d_img, d_txt, dataset.spec.k_concepts)
        )
        fh.write(np.ascontiguousarray(dataset.images, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.texts, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.concepts, dtype="<u4").tobytes())
        fh.write(_SEED.pack(dataset.spec.seed))


def load_dataset(path) -> PairedDataset:
    """Parse an FCDS v1 file. Refuses truncated, malformed, or inconsistent
    payloads; never returns partial data.

    The reconstructed spec carries NaN for noise_sigma and noise_alignment
    since the format does not record them.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DataFormatError("file too short for the FCDS header", offset=len(data))
    magic, version, n, d_img, d_txt, k_concepts = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported format version {version} (this reader handles "
            f"{FORMAT_VERSION})",
            offset=4,
        )
    if n < 1 or d_img < 1 or d_txt < 1 or k_concepts < 1:
        raise SchemaError(
            f"header declares an invalid shape: n={n}, d_img={d_img}, "
            f"d_txt={d_txt}, k_concepts={k_concepts}"
        )

    img_row = d_img * 8
    img_bytes = n * img_row
    txt_bytes = n * d_txt * 8
    lbl_bytes = n * 4
    expected = _HEADER.size + img_bytes + txt_bytes + lbl_bytes + _SEED.size
    if len(data) != expected:
        body = len(data) - _HEADER.size
        if 0 <= body < img_bytes and body % img_row == 0:
            raise SchemaError(
                f"header declares n={n} but the images section holds only "
                f"{body // img_row} complete rows"
            )
        if len(data) < expected:
            raise DataFormatError("file truncated", offset=len(data))
        raise DataFormatError("unexpected trailing bytes", offset=expected)

    off = _HEADER.size
    images = np.frombuffer(data, dtype="<f8", count=n * d_img, offset=off)
    off += img_bytes
    texts = np.frombuffer(data, dtype="<f8", count=n * d_txt, offset=off)
    off += txt_bytes
    concepts = np.frombuffer(data, dtype="<u4", count=n, offset=off)
    off += lbl_bytes
    (seed,) = _SEED.unpack_from(data, off)

    if concepts.max() >= k_concepts:
        raise SchemaError(
            f"concept label {int(concepts.max())} out of range for "
            f"k_concepts={k_concepts}"
        )
    spec = DatasetSpec(
        n=n,
        d_img=d_img,
        d_txt=d_txt,
        k_concepts=k_concepts,
        noise_sigma=float("nan"),
        seed=seed,
        noise_alignment=float("nan"),
    )
    return PairedDataset(
        images=images.reshape(n, d_img).copy(),
        texts=texts.reshape(n, d_txt).copy(),
        concepts=concepts.copy(),
        spec=spec,
    )
