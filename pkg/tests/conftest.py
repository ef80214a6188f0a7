import json

import numpy as np
import pytest

from subsetbart.data import ColumnSpec, Dataset, PredictorSchema
from subsetbart.tree import DecisionRule

LEVELS10 = tuple(f"c{k}" for k in range(1, 11))


@pytest.fixture
def mixed_schema():
    return PredictorSchema(
        (
            ColumnSpec("x1", "continuous"),
            ColumnSpec("g", "categorical", LEVELS10),
            ColumnSpec("x2", "continuous"),
            ColumnSpec("h", "categorical", ("a", "b", "c")),
        )
    )


def random_dataset(schema, n, seed, y=True):
    rng = np.random.default_rng(seed)
    xc = rng.uniform(size=(n, schema.p_cont))
    xk = np.column_stack([rng.integers(0, k, n) for k in schema.n_levels]) if schema.p_cat else np.empty((n, 0), int)
    return Dataset(xc, xk.astype(np.int64), rng.normal(size=n) if y else None, schema)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, header, rows, schema=None):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
        path.write_text("\n".join(lines) + "\n")
        if schema is not None:
            sp = tmp_path / (name + ".schema.json")
            sp.write_text(json.dumps(schema))
            return path, sp
        return path

    return _write


def random_rule(t, node_id, rng):
    """Valid rule at ``node_id`` or None when the drawn variable cannot split."""
    var = int(rng.integers(0, t.schema.p))
    avail = t.available_set(node_id, var)
    if var < t.schema.p_cont:
        lo, hi = avail
        if not hi > lo:
            return None
        return DecisionRule.continuous(var, rng.uniform(lo, hi))
    levels = sorted(avail)
    if len(levels) < 2:
        return None
    mask = rng.integers(0, 2, len(levels)).astype(bool)
    if mask.all() or not mask.any():
        mask[0] = not mask[0]
    return DecisionRule.categorical(var, [v for v, m in zip(levels, mask) if m],
                                    [v for v, m in zip(levels, mask) if not m])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
