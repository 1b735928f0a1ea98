"""Residual matrices for cross-temporal covariance estimation.

Residuals are laid out as one wide matrix E whose columns follow the
canonical stacked-vector ordering and whose rows correspond to
most-aggregated periods: row tau, block (series i, order k), column h
holds the error made for the h-th order-k value of period tau.

Three kinds are produced:

* ``multi_step``: the error of the h-step-ahead fitted value, forecast
  from the end of the previous most-aggregated period.  Suitable for all
  covariance estimators.
* ``one_step``: ordinary (rolling-origin, one-step-ahead) residuals,
  distributed into the same layout by target time.  Cells within an order
  are valid for per-series variances and same-time cross-series
  covariances, but cross-horizon cells are time-shifted copies, so this
  kind is only accepted by diagonal/block-diagonal estimators.
* ``overlapping_multi_step``: multi-step residuals pooled over all phase
  shifts of the aggregation windows, enlarging the row count.

Leading periods whose forecast origin lacks enough history for some
fitted model are dropped so that E stays rectangular and time-aligned
across blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ctreco.hierarchy import CrossTemporalStructure, temporally_aggregate
from ctreco.models import ARModel, fit_ar, fitted_multistep

__all__ = [
    "ResidualSet",
    "aggregate_levels",
    "fit_level_models",
    "assemble_multistep",
    "assemble_onestep",
    "assemble_overlapping",
    "overlapping_series",
]

LevelKey = tuple[int, int]  # (series index, temporal aggregation order)


@dataclass(frozen=True, eq=False)
class ResidualSet:
    """Residuals in the canonical wide layout.

    Attributes:
        structure: the cross-temporal structure the columns refer to.
        E: (N, n * (m + k_star)) residual matrix.
        kind: one of ``one_step``, ``multi_step``,
            ``overlapping_multi_step``.
    """

    structure: CrossTemporalStructure
    E: np.ndarray = field(repr=False)
    kind: str

    def __post_init__(self):
        if self.kind not in ("one_step", "multi_step", "overlapping_multi_step"):
            raise ValueError(f"unknown residual kind {self.kind!r}")
        E = np.asarray(self.E, dtype=float)
        if E.ndim != 2 or E.shape[1] != self.structure.dim:
            raise ValueError(
                f"E must have {self.structure.dim} columns, got shape {E.shape}"
            )
        if not np.all(np.isfinite(E)):
            raise ValueError("residual matrix contains non-finite entries")
        E.flags.writeable = False
        object.__setattr__(self, "E", E)

    @property
    def n_periods(self) -> int:
        return self.E.shape[0]

    def block(self, series: int, k: int) -> np.ndarray:
        """Rows-by-horizons residuals of one (series, order) block."""
        return self.E[:, self.structure.block_slice(series, k)]

    def order_matrix(self, k: int) -> np.ndarray:
        """Residuals of order k pooled over time cells, one column per series.

        Rows are (period, within-period position) pairs, aligned across
        series, as needed by per-order cross-sectional estimators.
        """
        n = self.structure.n
        cols = [self.block(i, k) for i in range(n)]
        return np.stack([c.reshape(-1) for c in cols], axis=1)

    def columns(self, series_indices, orders) -> np.ndarray:
        """Sub-matrix of E for given series (major) and orders (descending)."""
        st = self.structure
        idx = [
            st.index_of(i, k, j)
            for i in series_indices
            for k in orders
            for j in range(st.te.periods_at(k))
        ]
        return self.E[:, idx]


def aggregate_levels(
    structure: CrossTemporalStructure, hf: np.ndarray
) -> dict[LevelKey, np.ndarray]:
    """Aggregate an (n, T) highest-frequency panel to every order.

    T must be a multiple of m.  Returns a dict keyed by (series, k).
    """
    hf = np.asarray(hf, dtype=float)
    n, T = hf.shape
    st = structure
    if n != st.n:
        raise ValueError(f"expected {st.n} series, got {n}")
    if T % st.te.m:
        raise ValueError(f"series length {T} not divisible by m={st.te.m}")
    return {
        (i, k): temporally_aggregate(hf[i], k)
        for i in range(n)
        for k in st.te.factors
    }


def fit_level_models(
    data: dict[LevelKey, np.ndarray],
    max_order: int = 5,
    criterion: str = "aicc",
) -> dict[LevelKey, ARModel]:
    """Fit one AR model per (series, order) series."""
    return {
        key: fit_ar(series, max_order=max_order, criterion=criterion)
        for key, series in data.items()
    }


def _check_inputs(structure, models, data):
    st = structure
    keys = {(i, k) for i in range(st.n) for k in st.te.factors}
    missing = keys - set(models) | keys - set(data)
    if missing:
        raise ValueError(f"missing models or data for levels: {sorted(missing)}")
    lengths = {k: data[(0, k)].size for k in st.te.factors}
    N = lengths[st.te.factors[0]]
    for (i, k), series in data.items():
        if series.size != N * (st.te.m // k):
            raise ValueError(
                f"series ({i}, {k}) has length {series.size}, expected "
                f"{N * (st.te.m // k)}"
            )
    return N


def _row_offset(structure, models) -> int:
    """Periods to drop so every block's forecast origin has enough history."""
    st = structure
    off = 0
    for (i, k), model in models.items():
        Mk = st.te.periods_at(k)
        off = max(off, math.ceil(model.order / Mk))
    return off


def assemble_multistep(
    structure: CrossTemporalStructure,
    models: dict[LevelKey, ARModel],
    data: dict[LevelKey, np.ndarray],
) -> ResidualSet:
    """Multi-step residuals: every value of period tau is predicted from
    the end of period tau - 1, at its own horizon."""
    st = structure
    N = _check_inputs(st, models, data)
    off = _row_offset(st, models)
    if off >= N:
        raise ValueError("not enough periods to form any residual row")
    E = np.empty((N - off, st.dim))
    for (i, k), series in data.items():
        Mk = st.te.periods_at(k)
        block = np.empty((N - off, Mk))
        for h in range(1, Mk + 1):
            fitted = fitted_multistep(models[(i, k)], series, h=h)
            targets = np.arange(off, N) * Mk + h - 1
            block[:, h - 1] = series[targets] - fitted[targets]
        E[:, st.block_slice(i, k)] = block
    return ResidualSet(structure=st, E=E, kind="multi_step")


def assemble_onestep(
    structure: CrossTemporalStructure,
    models: dict[LevelKey, ARModel],
    data: dict[LevelKey, np.ndarray],
) -> ResidualSet:
    """Ordinary one-step residuals arranged by target time."""
    st = structure
    N = _check_inputs(st, models, data)
    off = _row_offset(st, models)
    if off >= N:
        raise ValueError("not enough periods to form any residual row")
    E = np.empty((N - off, st.dim))
    for (i, k), series in data.items():
        Mk = st.te.periods_at(k)
        fitted = fitted_multistep(models[(i, k)], series, h=1)
        res = series - fitted
        E[:, st.block_slice(i, k)] = res[off * Mk :].reshape(N - off, Mk)
    return ResidualSet(structure=st, E=E, kind="one_step")


def overlapping_series(series: np.ndarray, k: int, s: int) -> np.ndarray:
    """k-period sums with the window start shifted by s observations.

    Element j sums entries jk+s .. (j+1)k+s-1 (0-based); the result has
    floor((T - s) / k) elements.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if not 0 <= s < k:
        raise ValueError(f"shift must satisfy 0 <= s < k, got s={s}, k={k}")
    n_windows = (y.size - s) // k
    return y[s : s + n_windows * k].reshape(n_windows, k).sum(axis=1)


def assemble_overlapping(
    structure: CrossTemporalStructure,
    models: dict[LevelKey, ARModel],
    hf: np.ndarray,
) -> ResidualSet:
    """Multi-step residuals pooled over all window phase shifts.

    Models must already be fit on the unshifted series; they are applied
    to each shifted series without re-estimation.  One row is produced per
    (period, shift) window with full horizon coverage, ordered by window
    end time.
    """
    st = structure
    hf = np.asarray(hf, dtype=float)
    m = st.te.m
    n, T = hf.shape
    if n != st.n or T % m:
        raise ValueError("hf panel must be (n, T) with m dividing T")
    N = T // m

    shifted: dict[tuple[int, int, int], np.ndarray] = {}
    fitted_cache: dict[tuple[int, int, int, int], np.ndarray] = {}
    for i in range(n):
        for k in st.te.factors:
            for sk in range(k):
                shifted[(i, k, sk)] = overlapping_series(hf[i], k, sk)

    def fitted_for(i, k, sk, h):
        key = (i, k, sk, h)
        if key not in fitted_cache:
            fitted_cache[key] = fitted_multistep(
                models[(i, k)], shifted[(i, k, sk)], h=h
            )
        return fitted_cache[key]

    rows = []
    for tau in range(N):
        for s in range(m):
            if s > 0 and tau >= N - 1:
                continue  # shifted window runs past the sample
            row = np.empty(st.dim)
            ok = True
            for i in range(n):
                for k in st.te.factors:
                    Mk = st.te.periods_at(k)
                    sk = s % k
                    j0 = (tau * m + s - sk) // k
                    x = shifted[(i, k, sk)]
                    if j0 < models[(i, k)].order or j0 + Mk > x.size:
                        ok = False
                        break
                    for h in range(1, Mk + 1):
                        fitted = fitted_for(i, k, sk, h)
                        t = j0 + h - 1
                        row[st.index_of(i, k, h - 1)] = x[t] - fitted[t]
                if not ok:
                    break
            if ok:
                rows.append(row)
    if not rows:
        raise ValueError("not enough periods to form any residual row")
    return ResidualSet(
        structure=st, E=np.asarray(rows), kind="overlapping_multi_step"
    )
