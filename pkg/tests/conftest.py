import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gpttomo.pipeline import (
    PipelineConfig,
    build_model_for_rep,
    consistent_state_space,
    reparametrized_states,
    simulate_run_tables,
)
from gpttomo.tomofit import FitOptions


@pytest.fixture(scope="session")
def paper_run():
    """Seven paper-scale repetitions: models, consistent spaces, sphere frames.

    Shared by the decoherence-to-classicality, soundness and decay-fit
    acceptance criteria; computed once per session.
    """
    config = PipelineConfig.from_dict({"seed": 2024, "simulate": {"repetitions": 7}})
    options = FitOptions(restarts=3, tol=1e-7, max_iter=300, seed=2024)
    models, frames = [], []
    for rep in range(7):
        tables = simulate_run_tables(config, rep)
        model = build_model_for_rep(tables, 4, options)
        cons = consistent_state_space(model)
        frames.append(reparametrized_states(model, cons))
        models.append(model)
    return {"config": config, "models": models, "frames": frames}
