import numpy as np
import pytest

from lemda.dataset import ColumnSchema, Dataset, Kind, encode_categories


def make_dataset(columns: dict, kinds: dict, labels, encode=True) -> Dataset:
    """Dataset from plain python columns; ``kinds`` maps name -> kind string."""
    schema = [ColumnSchema(n, kinds[n]) for n in columns] + [ColumnSchema("label", Kind.LABEL)]
    data = dict(columns)
    data["label"] = np.asarray(labels)
    d = Dataset.from_columns(schema, data)
    return encode_categories(d) if encode else d


def numeric_dataset(X, y) -> Dataset:
    X = np.asarray(X, dtype=float)
    cols = {f"x{j}": X[:, j] for j in range(X.shape[1])}
    return make_dataset(cols, {n: "numeric" for n in cols}, y)


@pytest.fixture
def small_mixed():
    rng = np.random.default_rng(11)
    n = 400
    y = (rng.random(n) < 0.3).astype(int)
    proto = np.where(y == 1, rng.choice(["tcp", "udp"], n, p=[0.9, 0.1]),
                     rng.choice(["tcp", "udp", "icmp", "arp"], n))
    cols = {
        "proto": proto.tolist(),
        "rate": rng.lognormal(0, 1, n) * (1 + y),
        "noise": rng.normal(size=n),
    }
    return make_dataset(cols, {"proto": "categorical", "rate": "numeric", "noise": "numeric"}, y)


# -- acceptance reporting -------------------------------------------------------

CRITERIA: dict[int, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.property)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


@pytest.fixture
def criterion():
    """``check(number, title, ok, detail)`` records one PASS/FAIL line, then asserts."""

    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        CRITERIA[number] = line
        print(line)
        assert ok, line

    return check


def skip_criterion(number: int, title: str, reason: str) -> None:
    CRITERIA[number] = f"criterion {number} {title}: SKIP ({reason})"
    print(CRITERIA[number])
    pytest.skip(reason)
