import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eegflow.core import ChannelLayout, Recording, RunConfig, TrialMeta  # noqa: E402
from eegflow.features import FeatureMatrix  # noqa: E402
from eegflow.pipeline import eval_stage, extract_dataset, select_stage  # noqa: E402
from eegflow.synth import SynthSpec, generate_dataset  # noqa: E402

FS = 128


def make_recording(samples, names=None, model_type=1, fs=FS, meta=None):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    names = names or [f"C{i}" for i in range(samples.shape[1])]
    meta = meta or TrialMeta.for_type("S01", 0, model_type)
    return Recording(ChannelLayout(tuple(names)), fs, samples, meta)


def informative_matrix(n_rows=600, n_noise=19, seed=0, noise_sd=0.01):
    """Feature 0 = label + N(0, noise_sd); the rest are independent N(0, 1)."""
    rng = np.random.default_rng(seed)
    y = np.tile([1, 2, 3], n_rows // 3 + 1)[:n_rows]
    rng.shuffle(y)
    X = rng.normal(size=(n_rows, n_noise + 1))
    X[:, 0] = y + rng.normal(0, noise_sd, n_rows)
    names = ("informative",) + tuple(f"noise_{i}" for i in range(n_noise))
    return FeatureMatrix(X, y, names)


@pytest.fixture(scope="session")
def informative():
    return informative_matrix()


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    generate_dataset(SynthSpec(), out)
    return out


class RunResult:
    def __init__(self, dataset, cfg):
        t0 = time.perf_counter()
        self.features, self.epochs, self.cleaned = extract_dataset(dataset, cfg)
        self.selection = select_stage(self.features, cfg)
        self.report = eval_stage(self.features, self.selection, cfg)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def synthetic_run(synthetic_dataset):
    """extract -> select -> eval over the default 8-subject dataset."""
    return RunResult(synthetic_dataset, RunConfig())


@pytest.fixture(scope="session")
def synthetic_rerun(synthetic_dataset, synthetic_run):
    return RunResult(synthetic_dataset, RunConfig())
