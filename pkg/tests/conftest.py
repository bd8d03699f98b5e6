import csv

import pytest

from mpclogreg.data import gen_synthetic


@pytest.fixture
def write_dataset(tmp_path):
    """Factory writing a small synthetic dataset as a CSV file (features
    without the implicit intercept column, binary label last)."""

    def _write(filename="data.csv", n=80, n_features=4, seed=0, label="label"):
        ds = gen_synthetic(n, n_features, seed=seed)
        path = tmp_path / filename
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(1, n_features + 1)] + [label])
            for row, y in zip(ds.X[:, 1:], ds.y):
                writer.writerow([repr(float(v)) for v in row] + [int(y)])
        return path

    return _write
