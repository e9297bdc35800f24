"""Monte Carlo experiments comparing simulated statistics with closed forms."""

from __future__ import annotations

import numpy as np

from .forward import direction_waves, synthesize_far_field
from .geometry import build_direction_set
from .imaging import indicator_multi_points
from .noise import (
    StatsReport,
    VoxelGrid,
    clutter_weights,
    cov_herglotz_noise,
    cov_indicator_measurement,
    fluctuation_sampler,
    monte_carlo,
    snr,
    speckle_covariance_analytic,
    squared_exponential,
    summarize_mean,
    summarize_snr,
    summarize_variance,
    white_noise,
)

BATCH = 500


def herglotz_noise_covariance(wp, quad, sigma, trials, seed, separations=(0.0, 2.0, 5.0)):
    """E[H(z) H(z')^H] by simulation at k|z - z'| in ``separations``.

    ``rel_error`` is the worst entry error over the variance scale 2 sigma^2 / 3.
    """
    z0 = np.zeros(3)
    u = np.array([1.0, 2.0, 2.0]) / 3.0
    others = [s / wp.kappa * u for s in separations]
    phases = [np.exp(1j * wp.kappa * quad.nodes @ z) * quad.mean_weights for z in [z0] + others]
    acc = np.zeros((len(others), 3, 3), dtype=complex)
    seqs = np.random.SeedSequence(int(seed)).spawn((trials + BATCH - 1) // BATCH)
    done = 0
    for seq in seqs:
        m = min(BATCH, trials - done)
        xi = white_noise(quad, sigma, np.random.default_rng(seq), m)
        H = np.einsum("bkc,pk->pbc", xi, np.stack(phases))
        for i in range(len(others)):
            acc[i] += np.einsum("bi,bj->ij", H[0], np.conj(H[i + 1]))
        done += m
    scale = 2.0 * sigma**2 / 3.0
    reports = []
    for i, (s, z) in enumerate(zip(separations, others)):
        est = acc[i] / trials
        ref = cov_herglotz_noise(z0, z, wp, sigma)
        err = np.abs(est - ref)
        a, b = np.unravel_index(int(np.argmax(err)), err.shape)
        # CI of a complex mean of products, per entry, over the same scale
        reports.append(
            StatsReport(
                f"herglotz_cov_kr{s:g}",
                float(est[a, b].real),
                float(ref[a, b]),
                trials,
                float(err.max() / scale),
                float(1.96 * sigma**2 / np.sqrt(trials) / scale),
            )
        )
    return reports


def noisy_indicator_samples(inc, trial, wp, quad, dirs, sigma, trials, seed, threads=1):
    """(clean value, noisy samples) of the multi-measurement indicator at z_D."""
    waves, index = direction_waves(dirs, wp)
    data = synthesize_far_field(inc, waves, quad, index)
    clean = float(indicator_multi_points(data, dirs, trial, inc.center))

    def stat(rng, _t):
        noisy = data.with_blocks(data.blocks + white_noise(quad, sigma, rng, len(data)))
        return indicator_multi_points(noisy, dirs, trial, inc.center)

    return clean, monte_carlo(stat, trials, seed, threads).ravel()


def measurement_noise_reports(inc, trial, wp, quad, dirs, sigma, trials, seed, mode, threads=1):
    clean, s = noisy_indicator_samples(inc, trial, wp, quad, dirs, sigma, trials, seed, threads)
    var = cov_indicator_measurement(inc.center, inc.center, trial, wp, sigma, dirs.n, mode)
    return {
        "variance": summarize_variance("indicator_variance", s, var),
        "mean": summarize_mean("indicator_mean", s, clean),
        "snr": summarize_snr("snr", s, snr(inc, wp, sigma, dirs.n, mode)),
    }


def snr_ratio_report(inc, trial, wp, quad, sigma, trials, seed, mode, sizes=((4, 5), (8, 9)), threads=1):
    """MC SNR ratio between n and 4n directions; the closed form predicts 2."""
    values, ns = [], []
    for i, (M, N) in enumerate(sizes):
        dirs = build_direction_set(M, N)
        _, s = noisy_indicator_samples(inc, trial, wp, quad, dirs, sigma, trials, seed + i, threads)
        values.append(s.mean() / s.std(ddof=1))
        ns.append(dirs.n)
    expected = float(np.sqrt(ns[1] / ns[0]))
    ratio = values[1] / values[0]
    return StatsReport.build(f"snr_ratio_n{ns[0]}_n{ns[1]}", ratio, expected, trials, float("nan"))


def speckle_report(
    fluct_kind, trial, wp, dirs, mode, grid: VoxelGrid, sigma, corr_length, z, trials, seed, threads=1
):
    """MC variance of the clutter-perturbed indicator at z versus the double voxel sum."""
    waves, _ = direction_waves(dirs, wp)
    draw = fluctuation_sampler(grid, corr_length)
    # the perturbation is linear in the field, so the weights are computed once
    g = clutter_weights(fluct_kind, grid, waves, trial, z, wp, n=dirs.n)[0]

    def stat(rng, _t):
        return g @ draw(rng, sigma).ravel()

    s = monte_carlo(stat, trials, seed, threads).ravel()
    analytic = speckle_covariance_analytic(
        fluct_kind, trial, wp, squared_exponential(sigma, corr_length), grid, z, z, mode
    )
    return summarize_variance(f"speckle_{fluct_kind}_{mode}", s, analytic)
