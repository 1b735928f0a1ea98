"""Shared fixtures: synthetic dataset and hierarchy files."""

import json

import numpy as np
import pytest


@pytest.fixture
def toy_files(tmp_path):
    """A = B + C semi-annual dataset (m = 2) with coherent uppers."""
    rng = np.random.default_rng(99)
    T = 80
    b = np.zeros((2, T + 50))
    eps = rng.normal(size=(2, T + 50))
    for t in range(2, T + 50):
        b[0, t] = 1.1 * b[0, t - 1] - 0.5 * b[0, t - 2] + eps[0, t]
        b[1, t] = 0.7 * b[1, t - 1] - 0.2 * b[1, t - 2] + eps[1, t]
    b = b[:, 50:] + 30.0  # keep values positive for nonneg tests
    a = b.sum(axis=0)

    hierarchy = tmp_path / "hierarchy.json"
    hierarchy.write_text(
        json.dumps(
            {
                "agg_matrix": [[1.0, 1.0]],
                "m": 2,
                "series_names": ["A", "B", "C"],
            }
        )
    )
    data = tmp_path / "data.csv"
    lines = ["A,B,C"]
    for t in range(T):
        lines.append(f"{a[t]:.10g},{b[0, t]:.10g},{b[1, t]:.10g}")
    data.write_text("\n".join(lines) + "\n")
    return {"hierarchy": hierarchy, "data": data, "tmp": tmp_path, "T": T}
