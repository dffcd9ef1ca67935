import numpy as np

from flowcut import FeatureMap


def cluster_features(labels: np.ndarray, dim: int = 12, noise: float = 0.0,
                     seed: int = 0) -> FeatureMap:
    """Feature grid emitting one orthonormal direction per label value."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    k = int(labels.max()) + 1
    assert dim >= k, "need dim >= number of labels for orthonormal directions"
    q, _ = np.linalg.qr(rng.normal(size=(dim, k)))
    data = np.ascontiguousarray(q.T[labels])
    if noise > 0.0:
        data = data + noise * rng.normal(size=data.shape)
    return FeatureMap(data)


def random_affinity(rng: np.random.Generator, n: int,
                    epsilon: float = 1e-5) -> np.ndarray:
    """Random symmetric {epsilon, 1} weights with unit diagonal."""
    ones = rng.random((n, n)) < rng.uniform(0.2, 0.8)
    ones = np.triu(ones, 1)
    ones = ones | ones.T
    w = np.where(ones, 1.0, epsilon)
    np.fill_diagonal(w, 1.0)
    return w
