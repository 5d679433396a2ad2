import math

import numpy as np
import pytest

from pspin_complexity.freeconv import semicircle_density
from pspin_complexity.rmt import (
    log_det_experiment,
    sample_goe,
    sample_goe_stack,
    wegner_check,
)


def test_seed_determinism():
    a = sample_goe(50, seed=123).matrix
    b = sample_goe(50, seed=123).matrix
    assert np.array_equal(a, b)
    c = sample_goe(50, seed=124).matrix
    assert not np.array_equal(a, c)
    stack = sample_goe_stack(3, 50, seed=123)
    assert stack.shape == (3, 50, 50)
    assert np.array_equal(stack[0], stack[0].T)


def test_entry_covariances(seed):
    n = 24
    stack = sample_goe_stack(4000, n, seed=seed)
    var_diag = stack[:, np.arange(n), np.arange(n)].var(axis=0)
    se = math.sqrt(2.0) * (2.0 / n) / math.sqrt(4000)
    assert np.max(np.abs(var_diag - 2.0 / n)) <= 4 * se
    var_off = stack[:, 0, 1:].var(axis=0)
    se_off = math.sqrt(2.0) * (1.0 / n) / math.sqrt(4000)
    assert np.max(np.abs(var_off - 1.0 / n)) <= 4 * se_off
    # symmetry pairs are the same entry
    assert np.array_equal(stack[:, 2, 5], stack[:, 5, 2])


def test_semicircle_law_ks(seed):
    n = 2000
    eigs = np.sort(np.linalg.eigvalsh(sample_goe(n, seed=seed).matrix))
    emp = (np.arange(n) + 0.5) / n
    x = np.linspace(-1.999, 1.999, 4001)
    dens = semicircle_density(x)
    cdf = np.cumsum(dens) * (x[1] - x[0])
    cdf /= cdf[-1]
    theo = np.interp(eigs, x, cdf, left=0.0, right=1.0)
    assert np.max(np.abs(emp - theo)) <= 0.02


def test_largest_eigenvalue_limit(seed):
    vals = []
    for k in range(20):
        g = sample_goe(2000, seed=seed + 1000 + k).matrix
        vals.append(np.linalg.eigvalsh(g)[-1])
    mean = float(np.mean(vals))
    assert 1.9 <= mean <= 2.05


def test_operator_norm_tail(seed):
    # ||G||_op <= ||G||_F, and the Frobenius norm concentrates near
    # sqrt(N+1) ~ 7.14 at N = 50, so crossing 8 is detectable cheaply
    n = 50
    crossings = 0
    for lo in range(0, 10000, 2000):
        stack = sample_goe_stack(2000, n, seed=seed + lo)
        fro = np.linalg.norm(stack, axis=(1, 2))
        suspicious = np.nonzero(fro >= 8.0)[0]
        for idx in suspicious:
            if np.max(np.abs(np.linalg.eigvalsh(stack[idx]))) >= 8.0:
                crossings += 1
    assert crossings == 0


def test_top_eigenvector_delocalized(seed):
    n = 200
    over = 0
    trials = 1000
    for lo in range(0, trials, 100):
        stack = sample_goe_stack(100, n, seed=seed + 7000 + lo)
        _, vecs = np.linalg.eigh(stack)
        top = vecs[:, :, -1]
        over += int(np.sum(np.max(np.abs(top), axis=1) >= 0.5))
    assert over <= 0.01 * trials


def test_trace_square_statistic(seed):
    n = 20
    stack = sample_goe_stack(10000, n, seed=seed + 99)
    tr2 = np.einsum("sij,sij->s", stack, stack)
    want = n + 1.0  # sum of entry variances at ambient n
    se = tr2.std(ddof=1) / math.sqrt(tr2.size)
    assert abs(tr2.mean() - want) <= 3 * se


def test_log_det_zero_diagonal(seed):
    rep = log_det_experiment(np.zeros(200), samples=40, seed=seed)
    assert abs(rep.empirical - (-0.5)) <= 0.08
    assert abs(rep.predicted - (-0.5)) <= 2e-3
    assert rep.resampled == 0


def test_log_det_shifted_diagonal(seed):
    from scipy.integrate import quad

    rep = log_det_experiment(np.full(200, 10.0), samples=40, seed=seed)
    oracle, _ = quad(
        lambda u: math.log(abs(10 + u)) * math.sqrt(4 - u * u) / (2 * math.pi), -2, 2
    )
    assert abs(rep.predicted - oracle) <= 1e-3
    assert abs(rep.empirical - rep.predicted) <= 0.05


def test_log_det_rejects_large_diagonal():
    with pytest.raises(ValueError):
        log_det_experiment(np.full(10, 80.0))


def test_wegner_linear_scaling(seed):
    n = 400
    rep = wegner_check(np.zeros(n), interval=(-1e-3, 1e-3), samples=60, seed=seed)
    assert rep.fitted_c <= 5.0
    assert rep.mean_count <= rep.fitted_c * n * 2e-3 * 2.0 + 0.05
    # counts scale linearly in the window width within a factor 2
    per_width = [c / (n * w) for c, w in zip(rep.counts, rep.widths) if c > 0]
    assert max(per_width) <= 2.0 * min(per_width)


def test_wegner_full_support(seed):
    n = 150
    rep = wegner_check(np.zeros(n), interval=(-3.0, 3.0), samples=20, seed=seed)
    assert abs(rep.mean_count - n) <= 1.0
