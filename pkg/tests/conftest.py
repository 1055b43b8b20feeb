import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from affmap.dataset import load_manifest
from affmap.providers.embedding import EmbeddingVector, TestEmbeddingProvider

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "desk"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def desk_manifest():
    return load_manifest(FIXTURE_DIR / "manifest.json")


@pytest.fixture(scope="session")
def object_positions():
    doc = json.loads((FIXTURE_DIR / "object_positions.json").read_text())
    return {label: np.array(pos) for label, pos in doc.items()}


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> Path:
    """Copy of the desk fixture in a scratch dir; cwd moved there so the
    fixture's relative-path config works."""
    dest = tmp_path / "desk"
    shutil.copytree(FIXTURE_DIR, dest)
    monkeypatch.chdir(dest)
    return dest


@pytest.fixture
def test_embed():
    return TestEmbeddingProvider()


class PairSimilarityProvider:
    """Embedding provider realizing prescribed pairwise similarities.

    The prescribed Gram matrix (1 on the diagonal, scripted values on pairs,
    0 elsewhere) is factored by eigendecomposition into unit vectors, so
    sim(a, b) reproduces the script to numerical precision. Texts outside the
    script get dedicated orthogonal axes.
    """

    def __init__(self, pair_sims: dict[tuple[str, str], float], extra_axes: int = 16):
        self._texts = sorted({t for pair in pair_sims for t in pair})
        n = len(self._texts)
        gram = np.eye(n)
        index = {t: i for i, t in enumerate(self._texts)}
        for (a, b), s in pair_sims.items():
            gram[index[a], index[b]] = gram[index[b], index[a]] = s
        eigvals, eigvecs = np.linalg.eigh(gram)
        if eigvals.min() < -1e-9:
            raise ValueError("scripted similarities are not realizable")
        factors = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        self.dimension = n + extra_axes
        self._vectors: dict[str, EmbeddingVector] = {}
        for t, i in index.items():
            vec = np.zeros(self.dimension)
            vec[:n] = factors[i]
            vec /= np.linalg.norm(vec)
            self._vectors[t] = EmbeddingVector(tuple(vec))
        self._extra: dict[str, int] = {}

    def embed(self, text: str) -> EmbeddingVector:
        text = text.strip()
        if text in self._vectors:
            return self._vectors[text]
        slot = self._extra.setdefault(text, len(self._extra))
        vec = np.zeros(self.dimension)
        vec[len(self._texts) + slot % (self.dimension - len(self._texts))] = 1.0
        return EmbeddingVector(tuple(vec))


@pytest.fixture
def pair_embed():
    return PairSimilarityProvider
