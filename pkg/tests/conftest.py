import functools

import numpy as np
import pytest

from rank_sphericity.montecarlo import ExperimentConfig, run_experiment

# Fixed once for the whole suite; never tuned to make a check pass.
MC_SEED = 12345
MC_REPS = 2000


@functools.lru_cache(maxsize=None)
def _mc_cell(scenario, n, p, v, reps, seed):
    cfg = ExperimentConfig(
        scenarios=[scenario],
        n_list=[n],
        p_list=[p],
        v_list=[v],
        reps=reps,
        methods=("SR", "SK"),
        master_seed=seed,
    )
    return run_experiment(cfg, keep_records=True)


@pytest.fixture(scope="session")
def mc_cell():
    """Cached Monte Carlo cell runner shared by every test module.

    ``mc_cell("I", 20, 100, 0.0)`` returns an McReport with records.
    """

    def run(scenario, n, p, v=0.0, reps=MC_REPS, seed=MC_SEED):
        return _mc_cell(scenario, n, p, float(v), reps, seed)

    return run


@pytest.fixture
def rng():
    return np.random.default_rng(20160401)
