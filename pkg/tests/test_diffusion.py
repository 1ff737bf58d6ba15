import numpy as np
import pytest

from trajvid.diffusion import (
    NoiseSchedule,
    posterior_step,
    q_sample,
    sampling_timesteps,
    sinusoidal_embedding,
)
from trajvid.errors import InvariantViolation, StepOutOfRangeError


def test_schedule_sanity():
    sched = NoiseSchedule(num_steps=1000, beta_start=1e-4, beta_end=0.02)
    assert sched.alpha_bar[0] == 1.0
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert 0 < sched.alpha_bar[-1] < 1
    # signal and noise coefficients stay on the unit circle
    coefs = np.sqrt(sched.alpha_bar) ** 2 + np.sqrt(1 - sched.alpha_bar) ** 2
    np.testing.assert_allclose(coefs, 1.0, atol=1e-12)


def test_schedule_validation():
    with pytest.raises(InvariantViolation):
        NoiseSchedule(beta_start=0.02, beta_end=1e-4)
    with pytest.raises(InvariantViolation):
        NoiseSchedule(beta_start=0.0, beta_end=0.5)


def test_q_sample_zero_steps_is_identity_boundary(rng):
    # alpha_bar index 1 with a tiny beta keeps x0 almost intact; the formal
    # t=0 boundary (alpha_bar == 1) means "original sample"
    sched = NoiseSchedule(num_steps=10, beta_start=1e-4, beta_end=2e-4)
    x0 = rng.normal(size=(2, 3, 4, 4))
    noise = np.zeros_like(x0)
    out = q_sample(x0, 1, noise, sched)
    np.testing.assert_allclose(out, np.sqrt(sched.alpha_bar[1]) * x0, atol=1e-12)
    assert sched.alpha_bar[0] == 1.0


def test_q_sample_zero_signal(rng):
    sched = NoiseSchedule()
    noise = rng.normal(size=(1, 2, 4, 4))
    out = q_sample(np.zeros_like(noise), 500, noise, sched)
    np.testing.assert_allclose(out, np.sqrt(1 - sched.alpha_bar[500]) * noise, atol=1e-12)


def test_q_sample_rejects_bad_steps(rng):
    sched = NoiseSchedule(num_steps=100)
    x = rng.normal(size=(1, 1, 2, 2))
    with pytest.raises(StepOutOfRangeError):
        q_sample(x, 0, x, sched)
    with pytest.raises(StepOutOfRangeError):
        q_sample(x, 101, x, sched)


def test_q_sample_monte_carlo_variance(rng):
    sched = NoiseSchedule(num_steps=1000, beta_start=1e-4, beta_end=0.02)
    n = 100_000
    for t in (1, 500, 1000):
        noise = rng.standard_normal(size=n)
        out = q_sample(np.zeros(n), t, noise, sched)
        want = 1.0 - sched.alpha_bar[t]
        assert abs(out.var() - want) / want < 0.02


def test_posterior_step_zero_eps_final_step(rng):
    sched = NoiseSchedule()
    x1 = rng.normal(scale=0.1, size=(1, 2, 4, 4))
    out = posterior_step(x1, 1, 0, np.zeros_like(x1), sched, clip_x0=1.0)
    np.testing.assert_allclose(out, x1 / np.sqrt(sched.alpha_bar[1]), atol=1e-12)


def test_posterior_step_matches_ddpm_ancestral_formula(rng):
    sched = NoiseSchedule(num_steps=50)
    t = 20
    x = rng.normal(size=(2, 3, 4, 4))
    eps = rng.normal(size=x.shape)
    z = rng.normal(size=x.shape)
    got = posterior_step(x, t, t - 1, eps, sched, z=z)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    x0_hat = (x - np.sqrt(1 - ab_t) * eps) / np.sqrt(ab_t)
    var = (1 - ab_prev) / (1 - ab_t) * (1 - ab_t / ab_prev)
    want = np.sqrt(ab_prev) * x0_hat + np.sqrt(1 - ab_prev - var) * eps + np.sqrt(var) * z
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_sampling_timesteps_strided():
    ts = sampling_timesteps(1000, 50)
    assert ts[0] == 1000 and ts[-1] == 1
    assert len(ts) == 50
    assert all(a > b for a, b in zip(ts, ts[1:]))
    assert sampling_timesteps(10, 50) == list(range(10, 0, -1))


def test_sinusoidal_embedding_shapes():
    emb = sinusoidal_embedding(np.array([1, 500, 1000]), 64)
    assert emb.shape == (3, 64)
    assert np.all(np.isfinite(emb))
    assert not np.allclose(emb[0], emb[1])
