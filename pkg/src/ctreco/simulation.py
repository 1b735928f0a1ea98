"""Monte Carlo study on the two-bottom-series semi-annual hierarchy.

The data-generating process is a pair of AR(2) bottom series with
correlated Gaussian innovations, summed into one upper series and
temporally aggregated over two half-periods.  Because the process is
known, the one-period-ahead forecast error covariance of the stacked
vector has a closed form, against which the sample covariances of base
and reconciled draws can be compared (Frobenius gap), alongside
CRPS/energy-score accuracy relative to the bootstrap base forecasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ctreco.covariance import CovarianceMatrix, CovarianceSpec, build_omega
from ctreco.hierarchy import (
    CrossTemporalStructure,
    build_cross_sectional,
    build_cross_temporal,
    build_temporal,
    stack_window,
)
from ctreco.models import forecast
from ctreco.probabilistic import GaussianForecast, ctjb_sample, sample_gaussian
from ctreco.reconcile import (
    bottom_up,
    build_projection,
    partly_bottom_up,
    set_negative_to_zero,
)
from ctreco.residuals import (
    aggregate_levels,
    assemble_multistep,
    assemble_onestep,
    fit_level_models,
)
from ctreco.scoring import ScoreRaw, frobenius_gap, relative_indices, score_draws

__all__ = [
    "SimulationConfig",
    "StudyResult",
    "study_structure",
    "true_covariance",
    "simulate_dgp",
    "run_study",
    "DEFAULT_METHODS",
    "DEFAULT_SAMPLERS",
]

DEFAULT_METHODS = (
    "base",
    "ct-bu",
    "ct-shrcs-bute",
    "ct-wlsvte-bucs",
    "oct-wlsv",
    "oct-bdshr",
    "octh-shr",
    "octh-bshr",
    "octh-hshr",
    "octh-hbshr",
)
DEFAULT_SAMPLERS = ("ctjb", "gauss-g", "gauss-b", "gauss-h", "gauss-hb")

_GAUSS_KINDS = {"gauss-g": "sam", "gauss-b": "b", "gauss-h": "h", "gauss-hb": "hb"}


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of the study; defaults reproduce the reference setup."""

    phi_b: tuple[float, float] = (1.34, -0.74)
    phi_c: tuple[float, float] = (0.95, -0.42)
    sigma_b: float = 0.9
    sigma_c: float = 1.8
    rho: float = -0.8
    years: int = 500
    replicates: int = 50
    L: int = 500
    seed: int = 0
    max_order: int = 5
    redraw_sigmas: bool = False  # draw sigmas from U(0.5, 2) per replicate

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("innovation correlation must satisfy |rho| < 1")
        if self.sigma_b <= 0 or self.sigma_c <= 0:
            raise ValueError("innovation scales must be positive")
        for phi in (self.phi_b, self.phi_c):
            companion = np.array([[phi[0], phi[1]], [1.0, 0.0]])
            if np.max(np.abs(np.linalg.eigvals(companion))) >= 1.0:
                raise ValueError(f"AR coefficients {phi} are not stationary")
        if min(self.years, self.replicates, self.L) < 1:
            raise ValueError("years, replicates and L must be positive")


def study_structure() -> CrossTemporalStructure:
    """The fixed hierarchy of the study: A = B + C, m = 2."""
    cs = build_cross_sectional(np.array([[1.0, 1.0]]))
    return build_cross_temporal(cs, build_temporal(2))


def true_covariance(config: SimulationConfig) -> CovarianceMatrix:
    """Closed-form one-period-ahead error covariance of the stacked vector.

    Built from the 4x4 covariance of the high-frequency bottom forecast
    errors (order B then C, two steps each) and expanded through the
    summation matrix.
    """
    st = study_structure()
    pb1 = config.phi_b[0]
    pc1 = config.phi_c[0]
    vb = config.sigma_b**2
    vc = config.sigma_c**2
    vbc = config.rho * config.sigma_b * config.sigma_c
    Q = np.array(
        [
            [vb, pb1 * vb, vbc, pc1 * vbc],
            [pb1 * vb, vb * (1 + pb1**2), pb1 * vbc, vbc * (1 + pb1 * pc1)],
            [vbc, pb1 * vbc, vc, pc1 * vc],
            [pc1 * vbc, vbc * (1 + pb1 * pc1), pc1 * vc, vc * (1 + pc1**2)],
        ]
    )
    values = st.summation @ Q @ st.summation.T
    return CovarianceMatrix(
        values, CovarianceSpec("hb", lam=0.0), factor=st.summation, core=Q
    )


def simulate_dgp(
    config: SimulationConfig, seed=None, extra_periods: int = 0
) -> np.ndarray:
    """Simulate the (3, T) highest-frequency panel, A = B + C.

    ``extra_periods`` appends whole extra most-aggregated periods, used
    as held-out truth in the study.
    """
    rng = np.random.default_rng(seed)
    m = 2
    T = (config.years + extra_periods) * m
    burn = 300
    cov = np.array(
        [
            [config.sigma_b**2, config.rho * config.sigma_b * config.sigma_c],
            [config.rho * config.sigma_b * config.sigma_c, config.sigma_c**2],
        ]
    )
    chol = np.linalg.cholesky(cov)
    eps = rng.standard_normal(size=(T + burn, 2)) @ chol.T
    phis = np.array([config.phi_b, config.phi_c])
    y = np.zeros((T + burn, 2))
    for t in range(2, T + burn):
        y[t] = phis[:, 0] * y[t - 1] + phis[:, 1] * y[t - 2] + eps[t]
    bottoms = y[burn:].T
    return np.vstack([bottoms.sum(axis=0, keepdims=True), bottoms])


@dataclass(frozen=True, eq=False)
class StudyResult:
    """Averaged study outputs, one row per method, one column per sampler."""

    methods: tuple[str, ...]
    samplers: tuple[str, ...]
    orders: tuple[int, ...]
    frobenius: np.ndarray = field(repr=False)  # (methods, samplers)
    # (methods, samplers), relative to base@ctjb
    avg_rel_crps: dict = field(repr=False)  # keys: k values and "all"
    rel_es: dict = field(repr=False)  # keys: k values and "all"
    raw_crps: np.ndarray = field(repr=False)  # (methods, samplers, n, p)
    raw_es: np.ndarray = field(repr=False)  # (methods, samplers, p)


def _reconcile_draws(
    method: str,
    draws: np.ndarray,
    st: CrossTemporalStructure,
    one_step,
    multi,
    maps: dict,
) -> np.ndarray:
    if method == "base":
        return draws
    if method == "ct-bu":
        return bottom_up(st, draws[:, st.bottom_hf_indices()])
    if method == "ct-shrcs-bute":
        return partly_bottom_up(
            st, "cs_then_te_bu", draws, CovarianceSpec("shr"), one_step
        )
    if method == "ct-wlsvte-bucs":
        return partly_bottom_up(
            st, "te_then_cs_bu", draws, CovarianceSpec("wlsv"), one_step
        )
    if method in maps:
        return draws @ maps[method].M.T
    raise ValueError(f"unknown reconciliation method {method!r}")


_METHOD_OMEGAS = {
    "oct-ols": ("ols", None),
    "oct-struc": ("struc", None),
    "oct-wlsv": ("wlsv", "one_step"),
    "oct-bdshr": ("bdshr", "one_step"),
    "octh-shr": ("shr", "multi"),
    "octh-bshr": ("b", "multi"),
    "octh-hshr": ("h", "multi"),
    "octh-hbshr": ("hb", "multi"),
}


def run_study(
    config: SimulationConfig,
    methods: tuple[str, ...] = DEFAULT_METHODS,
    samplers: tuple[str, ...] = DEFAULT_SAMPLERS,
    nonneg: bool = False,
) -> StudyResult:
    """Full sampling-by-reconciliation grid, averaged over replicates.

    Per replicate: simulate, fit one AR model per (series, order) by
    AICc, draw L base samples per sampler, reconcile per method, score
    against the held-out period, and measure the Frobenius gap between
    each cell's draw covariance and the closed-form truth.  Relative
    indices use the bootstrap base forecasts as benchmark.
    """
    for mth in methods:
        if mth not in ("base", "ct-bu", "ct-shrcs-bute", "ct-wlsvte-bucs") and (
            mth not in _METHOD_OMEGAS
        ):
            raise ValueError(f"unknown method {mth!r}")
    for smp in samplers:
        if smp != "ctjb" and smp not in _GAUSS_KINDS:
            raise ValueError(f"unknown sampler {smp!r}")
    if "base" not in methods or "ctjb" not in samplers:
        raise ValueError("the benchmark cell (base, ctjb) must be in the grid")

    st = study_structure()
    omega_true = true_covariance(config)
    n, p = st.n, len(st.te.factors)
    n_m, n_s = len(methods), len(samplers)

    crps_sum = np.zeros((n_m, n_s, n, p))
    es_sum = np.zeros((n_m, n_s, p))
    frob_sum = np.zeros((n_m, n_s))

    root = np.random.SeedSequence(config.seed)
    children = root.spawn(config.replicates)

    for rep in range(config.replicates):
        ss = children[rep]
        sim_seed, sigma_seed, *sampler_seeds = ss.spawn(2 + n_s)
        cfg = config
        if config.redraw_sigmas:
            srng = np.random.default_rng(sigma_seed)
            cfg = replace(
                config,
                sigma_b=float(srng.uniform(0.5, 2.0)),
                sigma_c=float(srng.uniform(0.5, 2.0)),
            )
        hf = simulate_dgp(cfg, seed=sim_seed, extra_periods=1)
        train, truth_hf = hf[:, :-2], hf[:, -2:]
        z = stack_window(st, truth_hf)

        data = aggregate_levels(st, train)
        models = fit_level_models(data, max_order=config.max_order)
        one_step = assemble_onestep(st, models, data)
        multi = assemble_multistep(st, models, data)

        xhat = np.empty(st.dim)
        for i in range(st.n):
            for k in st.te.factors:
                Mk = st.te.periods_at(k)
                xhat[st.block_slice(i, k)] = forecast(
                    models[(i, k)], data[(i, k)], Mk
                )

        maps = {}
        for mth in methods:
            if mth in _METHOD_OMEGAS:
                kind, which = _METHOD_OMEGAS[mth]
                rs = {"one_step": one_step, "multi": multi, None: None}[which]
                omega = build_omega(CovarianceSpec(kind), st, rs)
                maps[mth] = build_projection(st, omega)

        for s_idx, smp in enumerate(samplers):
            if smp == "ctjb":
                sample = ctjb_sample(
                    st, models, data, one_step, config.L, seed=sampler_seeds[s_idx]
                )
            else:
                spec = CovarianceSpec(_GAUSS_KINDS[smp], lam=0.0)
                sigma = build_omega(spec, st, multi)
                sample = sample_gaussian(
                    GaussianForecast(xhat, sigma), st, config.L,
                    seed=sampler_seeds[s_idx],
                )
            for m_idx, mth in enumerate(methods):
                draws = _reconcile_draws(mth, sample.draws, st, one_step, multi, maps)
                if nonneg and mth != "base":
                    draws = set_negative_to_zero(st, draws)
                raw = score_draws(st, draws, z)
                crps_sum[m_idx, s_idx] += raw.crps
                es_sum[m_idx, s_idx] += raw.es
                emp_cov = np.cov(draws.T, bias=True)
                frob_sum[m_idx, s_idx] += frobenius_gap(emp_cov, omega_true)

    crps_avg = crps_sum / config.replicates
    es_avg = es_sum / config.replicates
    frob_avg = frob_sum / config.replicates

    bench = ScoreRaw(
        label="base@ctjb",
        orders=st.te.factors,
        crps=crps_avg[methods.index("base"), samplers.index("ctjb")],
        es=es_avg[methods.index("base"), samplers.index("ctjb")],
    )
    crps_tables: dict = {k: np.empty((n_m, n_s)) for k in st.te.factors}
    crps_tables["all"] = np.empty((n_m, n_s))
    es_tables: dict = {k: np.empty((n_m, n_s)) for k in st.te.factors}
    es_tables["all"] = np.empty((n_m, n_s))
    for m_idx in range(n_m):
        for s_idx in range(n_s):
            raw = ScoreRaw(
                label=f"{methods[m_idx]}@{samplers[s_idx]}",
                orders=st.te.factors,
                crps=crps_avg[m_idx, s_idx],
                es=es_avg[m_idx, s_idx],
            )
            rep = relative_indices(raw, bench)
            for k in st.te.factors:
                crps_tables[k][m_idx, s_idx] = rep.avg_rel_crps[k]
                es_tables[k][m_idx, s_idx] = rep.rel_es[k]
            crps_tables["all"][m_idx, s_idx] = rep.avg_rel_crps_overall
            es_tables["all"][m_idx, s_idx] = rep.avg_rel_es_overall

    return StudyResult(
        methods=tuple(methods),
        samplers=tuple(samplers),
        orders=st.te.factors,
        frobenius=frob_avg,
        avg_rel_crps=crps_tables,
        rel_es=es_tables,
        raw_crps=crps_avg,
        raw_es=es_avg,
    )
