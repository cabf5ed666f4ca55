import json

import numpy as np
import pytest

from driftrank import embed


class TestFnv1a:
    def test_reference_vectors(self):
        # classic FNV-1a 64-bit test vectors
        assert embed.fnv1a_64(b"") == 0xCBF29CE484222325
        assert embed.fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert embed.fnv1a_64(b"foobar") == 0x85944171F73967E8


class TestEmbedText:
    def test_empty_is_zero(self):
        vec = embed.embed_text("", 16)
        np.testing.assert_array_equal(vec, np.zeros(16))
        assert embed.embed_text("  \t ...", 16).sum() == 0.0

    def test_deterministic_bitwise(self):
        a = embed.embed_text("The Quick brown-fox", 64)
        b = embed.embed_text("The Quick brown-fox", 64)
        np.testing.assert_array_equal(a, b)

    def test_order_invariance(self):
        a = embed.embed_text("aa bb", 32)
        b = embed.embed_text("bb aa", 32)
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        vec = embed.embed_text("tokens spread across the space", 128)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-9

    def test_coordinate_and_sign_contract(self):
        d = 32
        h = embed.fnv1a_64(b"qq")
        vec = embed.embed_text("qq", d)
        expected_sign = -1.0 if (h >> 63) & 1 else 1.0
        assert vec[h % d] == expected_sign
        assert np.count_nonzero(vec) == 1

    def test_case_and_punctuation_folding(self):
        a = embed.embed_text("Hello, WORLD!", 64)
        b = embed.embed_text("hello world", 64)
        np.testing.assert_array_equal(a, b)

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            embed.embed_text("x", 1)

    def test_disjoint_texts_nearly_orthogonal(self):
        # cosine of independent hashed bags concentrates near zero at d=128
        rng = np.random.default_rng(99)
        d = 128
        ok = 0
        for i in range(100):
            words_a = [f"a{i}w{j}" for j in rng.integers(0, 1000, size=12)]
            words_b = [f"b{i}w{j}" for j in rng.integers(0, 1000, size=12)]
            va = embed.embed_text(" ".join(words_a), d)
            vb = embed.embed_text(" ".join(words_b), d)
            if abs(float(va @ vb)) < 0.3:
                ok += 1
        assert ok >= 95


class TestLoadPrecomputed:
    def _write(self, tmp_path, records):
        path = tmp_path / "vecs.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
        return path

    def test_unit_vector_unchanged(self, tmp_path):
        path = self._write(tmp_path, [{"id": "c1", "vec": [1.0, 0.0, 0.0]}])
        out = embed.load_precomputed(path, 3)
        np.testing.assert_allclose(out["c1"], [1.0, 0.0, 0.0], atol=1e-15)

    def test_renormalized(self, tmp_path):
        path = self._write(tmp_path, [{"id": "c1", "vec": [0.0, 2.0, 0.0]}])
        out = embed.load_precomputed(path, 3)
        np.testing.assert_allclose(out["c1"], [0.0, 1.0, 0.0], atol=1e-15)

    def test_zero_kept_as_zero(self, tmp_path):
        path = self._write(tmp_path, [{"id": "c1", "vec": [0.0, 0.0, 0.0]}])
        out = embed.load_precomputed(path, 3)
        np.testing.assert_array_equal(out["c1"], np.zeros(3))

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = self._write(tmp_path, [{"id": "c1", "vec": [1.0, 0.0]}])
        with pytest.raises(ValueError, match="dimension"):
            embed.load_precomputed(path, 3)
