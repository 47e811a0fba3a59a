import numpy as np
import pandas as pd
import pytest

from gpukalc_trainer.dataset import Dataset


def power_frame(n: int, seed: int, duplicate: str | None = None) -> pd.DataFrame:
    """Synthetic launch-feature rows with a known generative power function:

        power_w = 30 + 40*occupancy + 0.003*inst_issue_cycles
                  + 12*(glob_load_sm > 50) + N(0, 1)
    """
    rng = np.random.default_rng(seed)
    occ = rng.uniform(0.1, 1.0, n)
    iic = rng.uniform(0.0, 20000.0, n)
    loads = rng.integers(0, 200, n).astype(float)
    frame = pd.DataFrame({
        "kernel": [f"bench_{i}" for i in range(n)],
        "occupancy": occ,
        "inst_issue_cycles": iic,
        "glob_load_sm": loads,
        "block_size": rng.choice([64.0, 128.0, 256.0, 512.0, 1024.0], n),
        "reg_thread": rng.integers(8, 64, n).astype(float),
        "cache_penalty": rng.uniform(0.0, 500.0, n),
        "power_w": (30.0 + 40.0 * occ + 0.003 * iic + 12.0 * (loads > 50)
                    + rng.normal(0.0, 1.0, n)),
    })
    if duplicate:
        src = duplicate.removesuffix("_dup")
        frame.insert(1, duplicate, frame[src])
    return frame


@pytest.fixture()
def make_dataset(tmp_path):
    """Builder: frame -> Dataset, round-tripped through a real CSV file."""
    from gpukalc_trainer.dataset import load_dataset

    def build(frame: pd.DataFrame, target: str = "power_w") -> Dataset:
        path = tmp_path / "features.csv"
        frame.to_csv(path, index=False)
        return load_dataset(path, target=target)

    return build
