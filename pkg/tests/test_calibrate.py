"""Inverse problems: perturbation recovery, parameter calibration, sensitivity."""

import numpy as np
import pytest

from diffocean import scenarios
from diffocean.calibrate import (
    BsfObservations,
    OptimHistory,
    OptimRecord,
    bsf_calibration_loss,
    calibrate_params,
    gaussian_perturbation,
    reconstruct_initial_state,
    reference_bsf_observations,
    sensitivity_grid,
)
from diffocean.dyncore import PhysParams, StepConfig, step_n
from diffocean.errors import DomainError
from diffocean.grid import Field, Staggering, make_channel_grid
from diffocean.scenarios import linear_profile_field


@pytest.fixture(scope="module")
def small_setup():
    """Scaled-down channel: same physics, quick to roll out."""
    g = make_channel_grid(32, 24, 2e6, 1.5e6, 400.0, -1e-4, 2e-11)
    p = PhysParams(
        A_h=3435.5036038313715,
        r_bot=1e-5,
        tau0=0.1,
        kappa_T=500.0,
        lambda_relax=1e-7,
        T_star=linear_profile_field(g, 25.0, 5.0),
    )
    c = StepConfig(dt=200.0)
    state0 = scenarios.initial_state(g, p, seed=77, noise_u=0.1)
    start = step_n(state0, 40, p, g, c)
    return g, p, c, start


def test_gaussian_perturbation_zero_amplitude_is_bitwise_copy():
    g = make_channel_grid(16, 12, 1e6, 1e6, 100.0, 0.0, 0.0)
    rng = np.random.default_rng(0)
    f = Field(rng.standard_normal(g.shape), Staggering.CENTER)
    out = gaussian_perturbation(f, g, 0.0, 1e5, (5e5, 5e5))
    assert out.values.tobytes() == f.values.tobytes()
    assert out.values is not f.values


def test_gaussian_perturbation_center_value():
    g = make_channel_grid(16, 12, 1.6e6, 1.2e6, 100.0, 0.0, 0.0)
    f = Field(np.full(g.shape, 2.0), Staggering.CENTER)
    # center an exact cell: (i + 0.5) dx, (j + 0.5) dy
    xc, yc = g.x_center[7], g.y_center[5]
    out = gaussian_perturbation(f, g, 1.5, 2e5, (xc, yc))
    assert out.values[7, 5] == pytest.approx(3.5, rel=1e-15)
    assert out.values.max() == out.values[7, 5]


def test_gaussian_perturbation_integral():
    g = make_channel_grid(64, 48, 4e6, 3e6, 100.0, 0.0, 0.0)
    f = Field(np.zeros(g.shape), Staggering.CENTER)
    sigma = 3.0 * g.dx
    out = gaussian_perturbation(f, g, 1.0, sigma, (2e6, 1.5e6))
    got = np.sum(out.values)
    expected = 2 * np.pi * sigma**2 / (g.dx * g.dy)
    assert got == pytest.approx(expected, rel=0.01)


def test_gaussian_perturbation_periodic_in_x():
    g = make_channel_grid(16, 12, 1.6e6, 1.2e6, 100.0, 0.0, 0.0)
    f = Field(np.zeros(g.shape), Staggering.CENTER)
    out = gaussian_perturbation(f, g, 1.0, 2e5, (0.0, 0.6e6))
    # cell centers sit half a cell off the origin: column 0 pairs with -1
    np.testing.assert_allclose(out.values[0, :], out.values[-1, :], rtol=1e-12)
    np.testing.assert_allclose(out.values[1, :], out.values[-2, :], rtol=1e-12)


def test_gaussian_perturbation_requires_positive_sigma():
    g = make_channel_grid(8, 8, 1e6, 1e6, 100.0, 0.0, 0.0)
    f = Field(np.zeros(g.shape), Staggering.CENTER)
    with pytest.raises(DomainError):
        gaussian_perturbation(f, g, 1.0, 0.0, (0.0, 0.0))


def test_history_rejects_non_increasing_iterations():
    h = OptimHistory([])
    h.append(OptimRecord(0, 1.0, {}, 0.1, 0.5))
    with pytest.raises(DomainError):
        h.append(OptimRecord(0, 0.5, {}, 0.1, 0.5))


def test_reconstruct_identical_start_has_zero_loss_and_gradient(small_setup):
    g, p, c, start = small_setup
    history, recovered = reconstruct_initial_state(
        start.T, start.T, 2, 0.25, 3,
        base_state=start, params=p, g=g, stepcfg=c, line_search=False,
    )
    assert history.records[0].loss == 0.0
    assert history.records[0].grad_norm == 0.0
    assert history.final.loss == 0.0
    assert recovered.values.tobytes() == start.T.values.tobytes()


def test_reconstruct_single_cell_descent(small_setup):
    g, p, c, start = small_setup
    perturbed = Field(start.T.values.copy(), Staggering.CENTER)
    perturbed.values[10, 10] += 1.0
    history, _ = reconstruct_initial_state(
        start.T, perturbed, 1, 0.25, 2,
        base_state=start, params=p, g=g, stepcfg=c,
    )
    losses = history.column("loss")
    assert losses[1] < losses[0]
    assert losses[2] <= losses[1]


def test_reconstruct_descent_property_and_freezing(small_setup):
    g, p, c, start = small_setup
    sigma = g.Lx / 16
    perturbed = gaussian_perturbation(
        start.T, g, 1.0, sigma, (0.5 * g.Lx, 0.5 * g.Ly)
    )
    frozen_before = tuple(
        np.asarray(getattr(start, n).values).tobytes() for n in ("u", "v", "eta")
    )
    params_before = (float(p.A_h), float(p.r_bot), p.T_star.values.tobytes())
    history, recovered = reconstruct_initial_state(
        start.T, perturbed, 4, 0.25, 15,
        base_state=start, params=p, g=g, stepcfg=c,
    )
    losses = history.column("loss")
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    distances = history.column("distance")
    assert distances[-1] < distances[0]
    assert recovered.staggering is Staggering.CENTER
    # frozen leaves are bitwise untouched across iterations
    frozen_after = tuple(
        np.asarray(getattr(start, n).values).tobytes() for n in ("u", "v", "eta")
    )
    assert frozen_after == frozen_before
    assert (float(p.A_h), float(p.r_bot), p.T_star.values.tobytes()) == params_before


def test_observations_validated():
    g = make_channel_grid(8, 8, 1e6, 1e6, 100.0, 0.0, 0.0)
    psi = Field(np.zeros(g.shape), Staggering.CENTER)
    with pytest.raises(DomainError):
        BsfObservations(step_indices=(2, 1), psi=[psi, psi], norm=1.0)
    with pytest.raises(DomainError):
        BsfObservations(step_indices=(1,), psi=[psi, psi], norm=1.0)


def test_calibration_loss_zero_at_truth(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20, 40])
    loss = bsf_calibration_loss(obs, start, p, g, c)
    assert float(loss((float(p.A_h), float(p.r_bot)))) == 0.0


def test_calibrate_gradient_vanishes_at_truth(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20, 40])
    history, _ = calibrate_params(
        obs, (float(p.A_h), float(p.r_bot)),
        state0=start, base_params=p, g=g, stepcfg=c, alpha=1.0, iters=1,
    )
    at_truth = history.records[0].grad_norm
    perturbed_history, _ = calibrate_params(
        obs, (1.5 * float(p.A_h), 0.5 * float(p.r_bot)),
        state0=start, base_params=p, g=g, stepcfg=c, alpha=1.0, iters=1,
    )
    away = perturbed_history.records[0].grad_norm
    assert at_truth <= 1e-6 * away


def test_calibrate_recovers_small_perturbation(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, range(10, 101, 10))
    truth_a, truth_r = float(p.A_h), float(p.r_bot)
    history, (a_est, r_est) = calibrate_params(
        obs, (1.3 * truth_a, 0.7 * truth_r),
        state0=start, base_params=p, g=g, stepcfg=c, alpha=25.0, iters=40,
    )
    assert abs(r_est - truth_r) / truth_r < 0.05
    assert abs(a_est - truth_a) / truth_a < abs(1.3 * truth_a - truth_a) / truth_a
    losses = history.column("loss")
    assert losses[-1] < 1e-2 * losses[0]
    assert all(x > 0 for x in history.column("A_h"))
    assert all(x > 0 for x in history.column("r_bot"))


def test_calibrate_more_observations_do_not_hurt(small_setup):
    g, p, c, start = small_setup
    truth_a, truth_r = float(p.A_h), float(p.r_bot)
    init = (1.3 * truth_a, 0.7 * truth_r)

    def recovery_error(indices):
        obs = reference_bsf_observations(start, p, g, c, indices)
        _, (a_est, r_est) = calibrate_params(
            obs, init, state0=start, base_params=p, g=g, stepcfg=c,
            alpha=25.0, iters=15,
        )
        return np.hypot(
            np.log(a_est / truth_a), np.log(r_est / truth_r)
        )

    single = recovery_error([10])
    ten = recovery_error(range(10, 101, 10))
    assert ten <= single


def test_calibrate_histories_reproducible(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20, 40])
    init = (1.2 * float(p.A_h), 0.8 * float(p.r_bot))
    run = lambda: calibrate_params(
        obs, init, state0=start, base_params=p, g=g, stepcfg=c,
        alpha=10.0, iters=5,
    )[0]
    h1, h2 = run(), run()
    for a, b in zip(h1.records, h2.records):
        assert np.float64(a.loss).tobytes() == np.float64(b.loss).tobytes()
        assert a.metrics == b.metrics
        assert np.float64(a.grad_norm).tobytes() == np.float64(b.grad_norm).tobytes()


def test_calibrate_rejects_nonpositive_init(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20])
    with pytest.raises(DomainError):
        calibrate_params(
            obs, (-1.0, 1e-5), state0=start, base_params=p, g=g, stepcfg=c
        )


@pytest.fixture(scope="module")
def small_grid_result(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20, 40])
    truth_a, truth_r = float(p.A_h), float(p.r_bot)
    result = sensitivity_grid(
        (truth_a / 10, truth_a * 10), (truth_r / 10, truth_r * 10), 3, 3,
        obs=obs, state0=start, base_params=p, g=g, stepcfg=c,
    )
    return result, truth_a, truth_r


def test_sensitivity_grid_populated_and_truth_is_minimum(small_grid_result):
    result, truth_a, truth_r = small_grid_result
    assert result.loss.shape == (3, 3)
    assert np.all(np.isfinite(result.loss))
    assert result.A_values[1] == pytest.approx(truth_a, rel=1e-12)
    assert result.r_values[1] == pytest.approx(truth_r, rel=1e-12)
    # geomspace reproduces the truth only to round-off, so the center-cell
    # loss is tiny rather than exactly zero
    assert result.loss[1, 1] <= 1e-25
    mags = np.hypot(
        result.dL_dAh * result.A_values[:, None],
        result.dL_drbot * result.r_values[None, :],
    )
    assert mags[1, 1] == np.min(mags)


def test_sensitivity_corner_gradients_point_toward_truth(small_grid_result):
    result, truth_a, truth_r = small_grid_result
    la = np.log(result.A_values)
    lr = np.log(result.r_values)
    for i in (0, 2):
        for j in (0, 2):
            ga = result.dL_dAh[i, j] * result.A_values[i]
            gr = result.dL_drbot[i, j] * result.r_values[j]
            to_truth = (np.log(truth_a) - la[i], np.log(truth_r) - lr[j])
            inner = -ga * to_truth[0] - gr * to_truth[1]
            assert inner > 0.0


@pytest.mark.xfail(
    strict=True,
    reason=(
        "At 62.5 km spacing the viscous cutoff 2*pi*sqrt(A_h/r_bot) = 116 km "
        "is below the resolvable 2*dx, so bottom friction out-damps lateral "
        "viscosity at every wavelength the desk-scale channel can carry; the "
        "full ocean model resolves that band and sees the opposite ordering."
    ),
)
def test_sensitivity_A_h_dominates_in_log_coordinates(small_grid_result):
    result, _, _ = small_grid_result
    ga = np.abs(result.dL_dAh * result.A_values[:, None])
    gr = np.abs(result.dL_drbot * result.r_values[None, :])
    assert np.sum(ga > gr) > ga.size / 2


def test_sensitivity_grid_validates_sample_counts(small_setup):
    g, p, c, start = small_setup
    obs = reference_bsf_observations(start, p, g, c, [20])
    with pytest.raises(DomainError):
        sensitivity_grid((1.0, 10.0), (1e-6, 1e-4), 2, 3,
                         obs=obs, state0=start, base_params=p, g=g, stepcfg=c)
