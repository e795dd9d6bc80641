import json
import warnings

import numpy as np
import pytest

from mintime.catalog import UnknownSystem, catalog, names
from mintime.system import (
    DimensionMismatch,
    NonFiniteEntries,
    NonNormalWarning,
    NotNormal,
    TooManyInputs,
    check_normality,
    dump_system,
    load_system,
    make_system,
    singular_set_is_empty,
)


def test_load_double_integrator_document():
    s = load_system({"N": 2, "M": 1, "A": [[0, 1], [0, 0]], "B": [[0], [1]]})
    assert (s.N, s.M, s.k, s.normal) == (2, 1, 1, True)


def test_zero_column_loads_with_warning():
    with pytest.warns(NonNormalWarning):
        s = load_system({"N": 2, "M": 1, "A": [[0, 1], [0, 0]], "B": [[0], [0]]})
    assert not s.normal
    with pytest.raises(NotNormal):
        s.require_normal()


def test_triple_integrator_normal():
    s = catalog("triple-integrator")
    assert s.k == 1 and s.normal and check_normality(s) == [3]


def test_normality_reports():
    assert check_normality(catalog("double-integrator")) == [2]
    assert check_normality(catalog("harmonic")) == [2]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = make_system(np.eye(2), [[1], [0]])
    assert check_normality(s) == [1] and not s.normal


def test_singular_set_emptiness():
    assert not singular_set_is_empty(catalog("double-integrator"))
    assert not singular_set_is_empty(catalog("triple-integrator"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonNormalWarning)
        assert singular_set_is_empty(make_system([[0, 1], [0, 0]], np.eye(2)))


@pytest.mark.parametrize(
    "doc, err",
    [
        ({"N": 2, "M": 1, "A": [[0, 1]], "B": [[0], [1]]}, DimensionMismatch),
        ({"N": 2, "M": 3, "A": [[0, 1], [0, 0]], "B": [[0, 0, 0], [1, 1, 1]]}, TooManyInputs),
        ({"N": 2, "M": 1, "A": [[0, float("nan")], [0, 0]], "B": [[0], [1]]}, NonFiniteEntries),
        ({"N": 2, "M": 1, "A": [[0, 1], [0, 0]], "B": [[0], [1], [2]]}, DimensionMismatch),
    ],
)
def test_bad_documents(doc, err):
    with pytest.raises(err):
        load_system(doc)


def test_round_trip(tmp_path):
    s = catalog("harmonic")
    p = tmp_path / "h.json"
    p.write_text(dump_system(s))
    t = load_system(p)
    assert np.array_equal(t.A, s.A) and np.array_equal(t.B, s.B)
    assert json.loads(dump_system(t)) == json.loads(dump_system(s))


def test_catalog_entries():
    d = catalog("double-integrator")
    assert np.array_equal(d.A, [[0, 1], [0, 0]]) and np.array_equal(d.B, [[0], [1]])
    assert set(names()) >= {"double-integrator", "triple-integrator", "harmonic", "double-integrator-2input", "planar-pendulum"}
    assert catalog("double-integrator-2input").normal


def test_unknown_catalog_lists_names():
    with pytest.raises(UnknownSystem, match="double-integrator"):
        catalog("unknown")
