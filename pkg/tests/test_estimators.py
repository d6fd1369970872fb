import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from excursion_lab import ValidationError
from excursion_lab.estimators import CriticalRadiusEstimator, ExcursionMonteCarlo, KodairaEmbedding

from oracles import cp1_normalized_kernel


def test_embedding_transform_and_kernel():
    emb = KodairaEmbedding(N=5).fit()
    z = np.array([0.1 + 0.2j, -0.5j, 1.3])
    U = emb.transform(z[:, None])
    assert U.shape == (3, 6)
    assert np.allclose(np.linalg.norm(U, axis=1), 1.0)
    K = emb.kernel(z[:, None], z[:, None])
    assert np.allclose(K, cp1_normalized_kernel(5, z[:, None], z[None, :]), atol=1e-12)
    real = np.column_stack([z.real, z.imag])
    assert np.allclose(emb.transform(real), U)


def test_embedding_requires_fit_and_valid_input():
    with pytest.raises(NotFittedError):
        KodairaEmbedding().transform([[0.1j]])
    emb = KodairaEmbedding(N=2).fit()
    with pytest.raises(ValidationError):
        emb.transform(np.zeros((2, 3)))


def test_params_and_clone():
    est = KodairaEmbedding(family="EllipticCurve", N=1, degL=3)
    c = clone(est).set_params(N=2)
    assert c.get_params()["N"] == 2 and est.N == 1
    assert c.fit().n_sections_ == 6


def test_critical_radius_estimator():
    est = CriticalRadiusEstimator(N=2, pair_budget=16).fit()
    assert est.r_hat_ > 0
    assert est.mesh_.max_edge_length <= 0.2 / math.sqrt(2) * (1 + 1e-9)
    with pytest.raises(ValidationError):
        CriticalRadiusEstimator(edge_factor=2.0).fit()


def test_monte_carlo_estimator():
    est = ExcursionMonteCarlo(N=1, u=0.9, n_samples=100, seed=1).fit()
    assert est.mean_chi_ == 1.0 and est.prob_nonempty_ == 1.0
