"""Discrete-space analogues of the adversarial objectives with exact
best-response analysis.

On a finite sample space of K points, the discriminator objective
``V = sum_k p_data(k) * D_k + p_gen(k) * [m - D_k]^+`` separates across
points, so its minimum can be computed pointwise and cross-checked against
exhaustive search. These routines numerically certify that the minimum
equals the margin exactly when the two densities agree, that the minimizing
discriminator is m-or-0 pointwise, and that at matched densities every
constant discriminator level in [0, m] is optimal and leaves the generator
objective indifferent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHECK_K_CAP = 16
FULL_SEARCH_K_CAP = 4
# Grid used by the confirmatory full product search; per-point search uses
# the caller's grid_step directly.
FULL_SEARCH_POINTS = 21


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability vector on a finite sample space."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("a density is a non-empty 1-D vector")
        if np.any(probs < 0):
            raise ValueError("density entries must be non-negative")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"density entries must sum to 1, got {probs.sum()!r}")

    @property
    def k(self):
        return self.probs.size

    @classmethod
    def uniform(cls, k):
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def random(cls, rng, k):
        v = rng.random(k) + 1e-9
        return cls(v / v.sum())


def _as_probs(density):
    return density.probs if isinstance(density, DiscreteDensity) else np.asarray(density, dtype=np.float64)


def _check_d_values(d_values):
    d = np.asarray(d_values, dtype=np.float64)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("discriminator values must be finite and non-negative")
    return d


@dataclass
class EquilibriumReport:
    """Outcome of one certification check."""

    v_value: float
    u_value: float | None = None
    best_response: np.ndarray | None = None
    constant_gamma_ok: bool | None = None
    value_identity_certified: bool | None = None
    flat_optimum_certified: bool | None = None
    details: dict = field(default_factory=dict)


def hinge_affine_min(a, b, m):
    """Minimize ``phi(y) = a*y + b*[m - y]^+`` over y >= 0.

    Returns ``(y_star, phi(y_star), unique)``: the minimizer is m when a < b
    and 0 otherwise; it is not unique when a == 0 or a == b.
    """
    if a < 0 or b < 0:
        raise ValueError("coefficients must be non-negative")
    if m <= 0:
        raise ValueError("margin must be positive")
    y_star = float(m) if a < b else 0.0
    value = a * y_star + b * max(0.0, m - y_star)
    unique = not (a == 0.0 or a == b)
    return y_star, value, unique


def discriminator_objective(p_data, p_gen, d_values, m):
    """V = sum p_data*D + p_gen*[m - D]^+ on the discrete space."""
    pd, pg = _as_probs(p_data), _as_probs(p_gen)
    d = _check_d_values(d_values)
    return float(np.sum(pd * d + pg * np.maximum(0.0, m - d)))


def generator_objective(p_gen, d_values):
    """U = sum p_gen*D on the discrete space."""
    return float(np.sum(_as_probs(p_gen) * _check_d_values(d_values)))


def best_response(p_data, p_gen, m):
    """Pointwise minimizer of V: D_k = m where p_data < p_gen, else 0."""
    pd, pg = _as_probs(p_data), _as_probs(p_gen)
    return np.where(pd < pg, float(m), 0.0)


def brute_force_min_v(p_data, p_gen, m, grid_step, confirm_separability=None):
    """Exhaustive minimization of V over per-point grids on [0, m].

    V separates across points, so the per-point scan is exact up to grid
    resolution. For K <= 4 (default) a full product-space search over a
    coarse grid re-confirms separability; a mismatch raises RuntimeError.

    Returns ``(v_min, argmin_d)``.
    """
    pd, pg = _as_probs(p_data), _as_probs(p_gen)
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    k = pd.size
    grid = np.linspace(0.0, m, int(round(m / grid_step)) + 1)
    # phi table: rows = grid points, cols = sample-space points
    values = pd[None, :] * grid[:, None] + pg[None, :] * (m - grid[:, None])
    best_idx = np.argmin(values, axis=0)
    argmin_d = grid[best_idx]
    v_min = float(values[best_idx, np.arange(k)].sum())

    if confirm_separability is None:
        confirm_separability = k <= FULL_SEARCH_K_CAP
    if confirm_separability:
        if k > FULL_SEARCH_K_CAP:
            raise ValueError(
                f"full product search is limited to K <= {FULL_SEARCH_K_CAP}, got K={k}"
            )
        coarse = np.linspace(0.0, m, FULL_SEARCH_POINTS)
        mesh = np.stack(
            [g.ravel() for g in np.meshgrid(*([coarse] * k), indexing="ij")], axis=1
        )
        totals = mesh @ pd + np.maximum(0.0, m - mesh) @ pg
        full_min = float(totals.min())
        phi_coarse = pd[None, :] * coarse[:, None] + pg[None, :] * (m - coarse[:, None])
        separable_min = float(phi_coarse.min(axis=0).sum())
        if abs(full_min - separable_min) > 1e-9:
            raise RuntimeError(
                f"separability violated: product search {full_min} vs pointwise {separable_min}"
            )
    return v_min, argmin_d


def compare_densities(p, q):
    """Count where p < q and where p != q; the counts must vanish together.

    Returns ``(below_count, differ_count, consistent)`` where ``consistent``
    asserts that both counts are zero or both are nonzero.
    """
    pa, qa = _as_probs(p), _as_probs(q)
    if pa.shape != qa.shape:
        raise ValueError("densities must share a sample space")
    below = int(np.count_nonzero(pa < qa))
    differ = int(np.count_nonzero(pa != qa))
    return below, differ, (below == 0) == (differ == 0)


def check_equilibrium_value(p_data, p_gen, m, tol=1e-12, grid_step=None):
    """Certify: min_D V equals m exactly when the densities agree on support.

    Both directions are checked against the brute-force minimum and the
    closed-form best response; the report carries each piece.
    """
    pd, pg = _as_probs(p_data), _as_probs(p_gen)
    if pd.size > CHECK_K_CAP:
        raise ValueError(f"check ops are limited to K <= {CHECK_K_CAP}")
    if grid_step is None:
        grid_step = m / 1000.0
    v_brute, d_brute = brute_force_min_v(pd, pg, m, grid_step)
    d_star = best_response(pd, pg, m)
    v_star = discriminator_objective(pd, pg, d_star, m)
    densities_equal = bool(np.all(pd == pg))
    v_equals_m = abs(v_brute - m) <= tol
    certified = v_equals_m == densities_equal and abs(v_star - v_brute) <= max(
        tol, grid_step * float(np.max(pd + pg))
    )
    return EquilibriumReport(
        v_value=v_brute,
        best_response=d_star,
        value_identity_certified=bool(certified),
        details={
            "v_best_response": v_star,
            "densities_equal": densities_equal,
            "v_equals_m": v_equals_m,
        },
    )


def check_flat_optimum(p_data, m, tol=1e-12, gamma_count=11, perturbations=100, seed=0):
    """Certify the matched-density optimum: with p_gen = p_data, every
    constant discriminator level in [0, m] attains V = m, and the generator
    objective cannot be improved by any alternative density.

    Points with zero data density are exempt from the constancy requirement;
    the check verifies V is insensitive to the discriminator's values there.
    """
    pd = _as_probs(p_data)
    if pd.size > CHECK_K_CAP:
        raise ValueError(f"check ops are limited to K <= {CHECK_K_CAP}")
    rng = np.random.default_rng(seed)
    support = pd > 0.0
    gammas = np.linspace(0.0, m, gamma_count)
    constant_ok = True
    worst_v_gap = 0.0
    for gamma in gammas:
        d = np.full(pd.size, gamma)
        if not np.all(support):
            # off-support values may be anything in [0, m]
            d[~support] = rng.random(int(np.count_nonzero(~support))) * m
        v = discriminator_objective(pd, pd, d, m)
        worst_v_gap = max(worst_v_gap, abs(v - m))
        if abs(v - m) > tol:
            constant_ok = False
    # Generator indifference: against a constant discriminator, every density
    # yields the same objective value.
    u_base = generator_objective(pd, np.full(pd.size, gammas[-1]))
    worst_u_gap = 0.0
    indifferent = True
    for _ in range(perturbations):
        alt = DiscreteDensity.random(rng, pd.size)
        u_alt = generator_objective(alt, np.full(pd.size, gammas[-1]))
        worst_u_gap = max(worst_u_gap, abs(u_alt - u_base))
        if abs(u_alt - u_base) > tol:
            indifferent = False
    return EquilibriumReport(
        v_value=m if constant_ok else m + worst_v_gap,
        u_value=u_base,
        constant_gamma_ok=constant_ok,
        flat_optimum_certified=bool(constant_ok and indifferent),
        details={
            "worst_v_gap": worst_v_gap,
            "worst_u_gap": worst_u_gap,
            "gammas": [float(g) for g in gammas],
        },
    )


# ---------------------------------------------------------------------------
# randomized certification sweeps (shared by the CLI and the acceptance suite)

@dataclass
class SweepReport:
    name: str
    trials: int
    failures: int
    worst_gap: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.failures == 0


def sweep_scalar_minimizer(trials=1000, margins=(1.0, 10.0), grid_step=1e-3,
                           tol=1e-9, seed=0):
    """Closed-form scalar minimizer vs. dense-grid search over [0, 2m]."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = 0.0
    for _ in range(trials):
        a, b = rng.random(2) * 10.0
        for m in margins:
            _, value, _ = hinge_affine_min(a, b, m)
            grid = np.linspace(0.0, 2.0 * m, int(round(2.0 * m / grid_step)) + 1)
            brute = float(np.min(a * grid + b * np.maximum(0.0, m - grid)))
            gap = abs(value - brute)
            worst = max(worst, gap)
            if gap > tol:
                failures += 1
    return SweepReport("scalar-minimizer", trials * len(margins), failures, worst)


def sweep_density_comparison(trials=100_000, k_max=16, seed=0):
    """The strict-below and anywhere-differ sets vanish together."""
    rng = np.random.default_rng(seed)
    failures = 0
    for i in range(trials):
        k = int(rng.integers(2, k_max + 1))
        p = DiscreteDensity.random(rng, k)
        q = p if i % 4 == 0 else DiscreteDensity.random(rng, k)
        _, _, consistent = compare_densities(p, q)
        if not consistent:
            failures += 1
    return SweepReport("density-comparison", trials, failures, 0.0)


def sweep_equilibrium_value(trials_equal=200, trials_unequal=200, k_max=8,
                            m=10.0, tol_equal=1e-12, grid_step=1e-2, seed=0):
    """Matched pairs reach exactly m; unequal pairs fall strictly below and
    match the closed-form best response within grid resolution."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = 0.0
    for _ in range(trials_equal):
        k = int(rng.integers(2, k_max + 1))
        p = DiscreteDensity.random(rng, k)
        v_min, _ = brute_force_min_v(p, p, m, grid_step, confirm_separability=False)
        gap = abs(v_min - m)
        worst = max(worst, gap)
        if gap > tol_equal:
            failures += 1
    for _ in range(trials_unequal):
        k = int(rng.integers(2, k_max + 1))
        p = DiscreteDensity.random(rng, k)
        q = DiscreteDensity.random(rng, k)
        v_min, _ = brute_force_min_v(p, q, m, grid_step, confirm_separability=False)
        d_star = best_response(p, q, m)
        v_star = discriminator_objective(p, q, d_star, m)
        resolution = grid_step * float(np.max(p.probs + q.probs)) * p.k
        if v_min >= m:
            failures += 1
        if abs(v_star - v_min) > resolution:
            failures += 1
        worst = max(worst, abs(v_star - v_min))
    return SweepReport(
        "equilibrium-value", trials_equal + trials_unequal, failures, worst
    )


def sweep_flat_optimum(trials=50, k_max=8, m=10.0, tol=1e-12, perturbations=100, seed=0):
    """Random strictly positive densities all certify the flat optimum."""
    rng = np.random.default_rng(seed)
    failures = 0
    worst = 0.0
    for i in range(trials):
        k = int(rng.integers(2, k_max + 1))
        p = DiscreteDensity.random(rng, k)
        report = check_flat_optimum(p, m, tol=tol, perturbations=perturbations, seed=seed + i)
        worst = max(worst, report.details["worst_v_gap"], report.details["worst_u_gap"])
        if not report.flat_optimum_certified:
            failures += 1
    return SweepReport("flat-optimum", trials, failures, worst)
