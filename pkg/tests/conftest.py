import json

import numpy as np
import pytest

from sewrecon.pattern import PanelClassMap, parse_pattern
from sewrecon.synthetic import FAMILIES, generate_pattern

SQUARE_DOC = {
    "type": "demo",
    "panels": {
        "front": {
            "vertices": [[0, 0], [10, 0], [10, 20], [0, 20]],
            "edges": [{"endpoints": [0, 1]}, {"endpoints": [1, 2]},
                      {"endpoints": [2, 3]}, {"endpoints": [3, 0]}],
            "rotation": [0, 0, 0, 1],
            "translation": [0, 0, 0],
        }
    },
    "stitches": [],
}


@pytest.fixture
def square_doc():
    return json.loads(json.dumps(SQUARE_DOC))


@pytest.fixture
def square(square_doc):
    return parse_pattern(json.dumps(square_doc))


@pytest.fixture
def square_cmap():
    return PanelClassMap(["back", "front"], {})


@pytest.fixture(scope="session")
def synthetic_patterns():
    rng = np.random.default_rng(1234)
    return [generate_pattern(FAMILIES[i % len(FAMILIES)], rng) for i in range(40)]


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A prepared on-disk dataset: 3 seen families, dress held out."""
    from sewrecon.dataio import prepare_dataset
    from sewrecon.synthetic import SyntheticSpec, generate_synthetic_dataset, write_dataset

    root = tmp_path_factory.mktemp("tiny")
    spec = SyntheticSpec({"skirt": 6, "top": 6, "tee": 6, "dress": 3}, unseen=["dress"], n_val=1, n_test=1)
    patterns, meshes, cmap, split = generate_synthetic_dataset(spec, np.random.default_rng(5))
    write_dataset(root, patterns, meshes, cmap, split)
    prepare_dataset(root, n_points=64, seed=0)
    return root


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
