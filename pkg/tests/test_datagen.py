"""Tests for synthetic paired-dataset generation, splitting, and the binary file format."""

import numpy as np
import pytest

from towertune import (
    ConfigurationError,
    DataFormatError,
    DatasetSpec,
    SchemaError,
    generate,
    load_dataset,
    save_dataset,
    split,
)
from towertune.datagen import FORMAT_VERSION, MAGIC


def _spec(**kwargs):
    base = dict(n=16, d_img=6, d_txt=6, k_concepts=4, noise_sigma=0.1, seed=0)
    base.update(kwargs)
    return DatasetSpec(**base)


class TestSpecValidation:
    def test_rejects_nonpositive_n(self):
        with pytest.raises(ConfigurationError, match="n"):
            DatasetSpec(n=0, d_img=3, d_txt=3, k_concepts=1, noise_sigma=0.0, seed=0)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ConfigurationError, match="noise_sigma"):
            _spec(noise_sigma=-0.5)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ConfigurationError, match="d_txt"):
            _spec(d_txt=0)

    def test_generate_rejects_more_concepts_than_samples(self):
        with pytest.raises(ConfigurationError, match="k_concepts"):
            generate(_spec(n=4, k_concepts=5))

    def test_rejects_alignment_outside_unit_interval(self):
        with pytest.raises(ConfigurationError, match="noise_alignment"):
            _spec(noise_alignment=1.5)


class TestGenerate:
    def test_single_concept_zero_noise_collapses_rows(self):
        """With one concept and no noise every sample is the prototype itself."""
        data = generate(_spec(n=4, k_concepts=1, noise_sigma=0.0))
        np.testing.assert_array_equal(data.images, np.tile(data.images[0], (4, 1)))
        np.testing.assert_array_equal(data.texts, np.tile(data.texts[0], (4, 1)))

    def test_one_concept_per_sample_gives_distinct_rows(self):
        data = generate(_spec(n=8, k_concepts=8, noise_sigma=0.0))
        assert len(np.unique(data.concepts)) == 8
        # all pairwise image rows differ
        for i in range(8):
            for j in range(i + 1, 8):
                assert not np.array_equal(data.images[i], data.images[j])

    def test_determinism(self):
        spec = _spec(n=2048, d_img=8, d_txt=8, k_concepts=64, seed=7)
        a = generate(spec)
        b = generate(spec)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.texts, b.texts)
        np.testing.assert_array_equal(a.concepts, b.concepts)

    def test_seed_changes_output(self):
        a = generate(_spec(seed=1))
        b = generate(_spec(seed=2))
        assert not np.array_equal(a.images, b.images)

    def test_shapes_and_label_range(self):
        data = generate(_spec(n=10, d_img=5, d_txt=7, k_concepts=3))
        assert data.images.shape == (10, 5)
        assert data.texts.shape == (10, 7)
        assert data.concepts.shape == (10,)
        assert data.concepts.min() >= 0
        assert data.concepts.max() < 3

    def test_concept_counts_balanced(self):
        """Concept sizes differ by at most one so false negatives exist for every concept."""
        data = generate(_spec(n=10, k_concepts=4))
        counts = np.bincount(data.concepts, minlength=4)
        assert counts.max() - counts.min() <= 1

    def test_same_concept_audit(self):
        data = generate(_spec(n=12, k_concepts=3))
        mask = data.same_concept()
        assert mask.shape == (12, 12)
        np.testing.assert_array_equal(mask, mask.T)
        assert mask.diagonal().all()


class TestFalseNegativeAudit:
    """At zero noise, cosine similarity under the identity encoder separates concepts exactly."""

    def test_cosine_one_iff_shared_concept(self):
        data = generate(_spec(n=12, d_img=6, d_txt=6, k_concepts=3, noise_sigma=0.0))
        img = data.images / np.linalg.norm(data.images, axis=1, keepdims=True)
        txt = data.texts / np.linalg.norm(data.texts, axis=1, keepdims=True)
        cos = img @ txt.T
        same = data.same_concept()
        assert np.all(cos[same] > 1.0 - 1e-12)
        assert np.all(cos[~same] < 1.0 - 1e-6)


class TestSplit:
    def test_sizes(self):
        data = generate(_spec(n=10))
        train, test = split(data, test_fraction=0.2, seed=0)
        assert train.n == 8
        assert test.n == 2

    def test_disjoint_exhaustive_partition(self):
        data = generate(_spec(n=4, k_concepts=2))
        train, test = split(data, test_fraction=0.5, seed=3)
        assert train.n == 2 and test.n == 2
        rows = np.vstack([train.images, test.images])
        # every original row appears exactly once across the two splits
        matched = set()
        for row in rows:
            hits = np.where((data.images == row).all(axis=1))[0]
            assert hits.size == 1
            matched.add(int(hits[0]))
        assert matched == set(range(4))

    def test_determinism(self):
        data = generate(_spec(n=20))
        a_train, a_test = split(data, test_fraction=0.25, seed=9)
        b_train, b_test = split(data, test_fraction=0.25, seed=9)
        np.testing.assert_array_equal(a_train.images, b_train.images)
        np.testing.assert_array_equal(a_test.texts, b_test.texts)

    def test_concept_labels_preserved(self):
        data = generate(_spec(n=12, k_concepts=3, noise_sigma=0.0))
        train, _ = split(data, test_fraction=0.25, seed=1)
        for i in range(train.n):
            hit = np.where((data.images == train.images[i]).all(axis=1))[0][0]
            assert train.concepts[i] == data.concepts[hit]

    def test_degenerate_fraction_rejected(self):
        data = generate(_spec(n=4))
        with pytest.raises(ConfigurationError):
            split(data, test_fraction=0.9, seed=0)
        with pytest.raises(ConfigurationError):
            split(data, test_fraction=0.0, seed=0)


class TestFileFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        data = generate(_spec(n=14, d_img=5, d_txt=3, k_concepts=4))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.images, data.images)
        np.testing.assert_array_equal(loaded.texts, data.texts)
        np.testing.assert_array_equal(loaded.concepts, data.concepts)
        assert loaded.spec.seed == data.spec.seed

    def test_magic_and_version_bytes(self, tmp_path):
        data = generate(_spec(n=3, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert int.from_bytes(raw[4:6], "little") == FORMAT_VERSION

    def test_bad_magic_rejected(self, tmp_path):
        data = generate(_spec(n=3, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError) as err:
            load_dataset(path)
        assert err.value.offset == 0

    def test_unknown_version_rejected(self, tmp_path):
        data = generate(_spec(n=3, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(DataFormatError) as err:
            load_dataset(path)
        assert err.value.offset == 4

    def test_truncated_file_rejected_atomically(self, tmp_path):
        data = generate(_spec(n=6, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 9])
        with pytest.raises(DataFormatError, match="offset"):
            load_dataset(path)

    def test_header_row_count_mismatch_is_schema_error(self, tmp_path):
        """A header promising 4 rows over a body holding 3 is a schema problem, not a parse problem."""
        data = generate(_spec(n=4, d_img=3, d_txt=3, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = path.read_bytes()
        row_bytes = 3 * 8
        path.write_bytes(raw[: len(raw) - row_bytes])
        trimmed = bytearray(path.read_bytes())
        # drop one image row instead: remove 24 bytes right after the image block start
        header = 24
        body = trimmed[header:]
        body = body[row_bytes:]
        path.write_bytes(bytes(trimmed[:header]) + bytes(body))
        with pytest.raises((SchemaError, DataFormatError)):
            load_dataset(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        data = generate(_spec(n=3, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        path.write_bytes(path.read_bytes() + b"\x00\x01")
        with pytest.raises(DataFormatError):
            load_dataset(path)

    def test_out_of_range_label_rejected(self, tmp_path):
        data = generate(_spec(n=3, d_img=2, d_txt=2, k_concepts=2))
        path = tmp_path / "pairs.fcds"
        save_dataset(data, path)
        raw = bytearray(path.read_bytes())
        # labels live right before the trailing u64 seed
        label_start = len(raw) - 8 - 3 * 4
        raw[label_start : label_start + 4] = (7).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(SchemaError):
            load_dataset(path)


try:
    from hypothesis import given, settings
    from hypothesis import strategies as st

    HAVE_HYPOTHESIS = True
except ImportError:  # pragma: no cover
    HAVE_HYPOTHESIS = False


if HAVE_HYPOTHESIS:

    class TestGenerateProperties:
        @given(
            n=st.integers(min_value=2, max_value=40),
            k=st.integers(min_value=1, max_value=40),
            seed=st.integers(min_value=0, max_value=2**32 - 1),
        )
        @settings(max_examples=40, deadline=None)
        def test_round_trip_and_balance(self, n, k, seed, tmp_path_factory):
            if k > n:
                k = n
            spec = DatasetSpec(
                n=n, d_img=4, d_txt=4, k_concepts=k, noise_sigma=0.05, seed=seed
            )
            data = generate(spec)
            counts = np.bincount(data.concepts, minlength=k)
            assert counts.max() - counts.min() <= 1
            path = tmp_path_factory.mktemp("fcds") / "d.fcds"
            save_dataset(data, path)
            loaded = load_dataset(path)
            np.testing.assert_array_equal(loaded.images, data.images)
            np.testing.assert_array_equal(loaded.concepts, data.concepts)

        @given(
            n=st.integers(min_value=4, max_value=30),
            seed=st.integers(min_value=0, max_value=1000),
            frac_pct=st.integers(min_value=10, max_value=50),
        )
        @settings(max_examples=40, deadline=None)
        def test_split_partition(self, n, seed, frac_pct):
            data = generate(
                DatasetSpec(n=n, d_img=3, d_txt=3, k_concepts=2, noise_sigma=0.1, seed=seed)
            )
            frac = frac_pct / 100.0
            if round(n * frac) < 1 or n - round(n * frac) < 2:
                return
            train, test = split(data, test_fraction=frac, seed=seed)
            assert train.n + test.n == n
            joint = np.vstack([train.images, test.images])
            assert np.unique(joint, axis=0).shape[0] == n
