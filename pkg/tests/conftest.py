import pytest

from aging_mimo import (
    DopplerParams,
    ScenarioConfig,
    estimation_params,
    uniform_interference_profile,
)


def make_uniform(L, K, N, *, p=10.0, p_p=None, beta_cross=1.0, shadow_db=0.0,
                 alpha=None, fd_ts=0.1, seed=0, tau=10, T=196):
    """Scenario config + uniform fading + estimation stats, one call."""
    cfg = ScenarioConfig(
        L=L, K=K, N=N, p=p, p_p=p if p_p is None else p_p, tau=tau, T=T,
        doppler=DopplerParams(normalized=fd_ts), seed=seed,
    )
    lsf = uniform_interference_profile(cfg, beta_cross, shadow_db)
    stats = estimation_params(lsf, cfg.alpha if alpha is None else alpha, cfg.p, cfg.p_p)
    return cfg, lsf, stats


@pytest.fixture
def small_draw():
    from aging_mimo import sample_estimate, trial_rng

    cfg, lsf, stats = make_uniform(2, 3, 8, beta_cross=0.5, seed=3)
    draw = sample_estimate(stats, lsf, cfg.N, trial_rng(3, 2, 0))
    return cfg, lsf, stats, draw
