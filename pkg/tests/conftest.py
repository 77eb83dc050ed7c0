import json

import pytest

from gbbo.space import (
    Condition,
    ParamKind,
    Parameter,
    SearchSpace,
    parse_task,
)

# Task description exercising all four parameter kinds plus one condition.
EXAMPLE_TASK = {
    "parameter": {
        "x1": {"type": "float", "default": 0, "bound": [-5, 10]},
        "x2": {"type": "int", "bound": [0, 15]},
        "x3": {"type": "cat", "default": "a1", "choice": ["a1", "a2", "a3"]},
        "x4": {"type": "ord", "default": 1, "choice": [1, 2, 3]},
    },
    "condition": {
        "cdn1": {"type": "equal", "parent": "x3", "child": "x1", "value": "a3"}
    },
    "number_of_trials": 200,
    "time_budget": 10800,
    "task_type": "soc",
    "parallel_strategy": "async",
    "worker_num": 10,
    "use_history": True,
}


@pytest.fixture
def example_task_text() -> str:
    return json.dumps(EXAMPLE_TASK)


@pytest.fixture
def example_spec(example_task_text):
    return parse_task(example_task_text)


@pytest.fixture
def example_space(example_spec):
    return example_spec.space


@pytest.fixture
def mixed_space() -> SearchSpace:
    """Unconditioned space with every parameter kind."""
    return SearchSpace(
        (
            Parameter("lr", ParamKind.FLOAT, -5.0, 10.0),
            Parameter("depth", ParamKind.INTEGER, 0.0, 15.0),
            Parameter("kernel", ParamKind.CATEGORICAL, choices=("a1", "a2", "a3")),
            Parameter("level", ParamKind.ORDINAL, choices=(1, 2, 3)),
        )
    )


@pytest.fixture
def float_space() -> SearchSpace:
    return SearchSpace(
        (
            Parameter("x1", ParamKind.FLOAT, 0.0, 1.0),
            Parameter("x2", ParamKind.FLOAT, 0.0, 1.0),
        )
    )
