import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tppg import EventData, discretize, make_structure
from tppg import config as C
from tppg import io
from tppg.io import DataFormatError


# events -----------------------------------------------------------------------

def test_event_file_round_trip_is_bitwise(block10):
    model, data, d = block10
    text = io.format_events(data)
    back = io.parse_events(text, data.p, data.horizon)
    for a, b in zip(data.streams, back.streams):
        np.testing.assert_array_equal(a.times, b.times)
    d2 = discretize(back, d.M, model.kernels)
    np.testing.assert_array_equal(d2.y, d.y)
    np.testing.assert_array_equal(d2.x, d.x)
    assert io.format_events(back) == text


def test_event_file_layout():
    data = EventData(([0.5, 2.0], [0.25]), 3.0)
    assert io.format_events(data) == "node_id,time\n1,0.250000000\n0,0.500000000\n0,2.000000000\n"


@given(st.lists(st.lists(st.integers(1, 10**9), unique=True, max_size=20), min_size=1, max_size=4))
def test_event_round_trip_property(ticks):
    data = EventData(tuple(sorted(t / 1e9 for t in node) for node in ticks), 1.0)
    back = io.parse_events(io.format_events(data), len(ticks), 1.0)
    for a, b in zip(data.streams, back.streams):
        np.testing.assert_array_equal(a.times, b.times)


@pytest.mark.parametrize("text, fragment", [
    ("node,time\n0,1.0\n", "header"),
    ("node_id,time\n0,1.0,3\n", "line 2"),
    ("node_id,time\n2,1.0\n", "node"),
    ("node_id,time\n0,11.0\n", "time"),
    ("node_id,time\n0,2.0\n0,1.0\n", "increasing"),
    ("node_id,time\n0,abc\n", "line 2"),
])
def test_event_parse_errors(text, fragment):
    with pytest.raises(DataFormatError, match=fragment):
        io.parse_events(text, 2, 10.0)


def test_event_parse_infers_p():
    assert io.parse_events("node_id,time\n3,1.0\n", None, 5.0).p == 4


# matrices and outputs ---------------------------------------------------------

def test_matrix_round_trip(tmp_path):
    A = np.random.default_rng(0).normal(size=(4, 4)) * 1e-7
    path = tmp_path / "A.csv"
    path.write_text(io.format_matrix(A))
    np.testing.assert_array_equal(io.read_matrix(path), A)


def test_write_outputs_records_digests(tmp_path):
    files = {tmp_path / "a.txt": "alpha\n", tmp_path / "sub" / "b.txt": "beta\n"}
    io.write_outputs(files, {"command": "x"}, tmp_path / "manifest.json")
    man = json.loads((tmp_path / "manifest.json").read_text())
    for path, text in files.items():
        assert path.read_text() == text
        assert man["outputs"][str(path)] == io.sha256(text.encode())
    assert not list(tmp_path.rglob("*.tmp*"))


# configuration ----------------------------------------------------------------

def test_defaults_and_setting_presets():
    cfg = C.parse_config("model: {p: 10, structure: block, setting: 2}\nsimulation: {T: 50}\n")
    assert cfg.get("fit", "tol") == 1e-8 and cfg.get("cv", "K") == 5
    model = C.model_spec(cfg)
    assert model.p == 10
    np.testing.assert_array_equal(model.B, make_structure("block", 10))
    assert C.kernel_spec(cfg).kind == "exponential"
    assert C.link_spec(cfg).kind == "sigmoid"
    assert C.horizon(cfg) == 50.0
    assert C.n_bins(cfg, 50.0) > 0


def test_explicit_transfer_matrix_from_file(tmp_path):
    B = make_structure("chain", 4)
    (tmp_path / "B.csv").write_text(io.format_matrix(B))
    (tmp_path / "run.yaml").write_text("model: {B: B.csv}\nsimulation: {T: 10}\n")
    cfg = C.load_config(tmp_path / "run.yaml")
    np.testing.assert_array_equal(C.transfer_matrix(cfg), B)


def test_library_configs_follow_sections():
    cfg = C.parse_config("fit: {lambda: 0.2, weight_mode: mle, penalize_mu: false}\n"
                         "cv: {K: 3, lambdas: [1.0, 0.1]}\nbootstrap: {n_replicates: 7}\n")
    f = C.fit_config(cfg, 0.2)
    assert f.lam == 0.2 and f.weight_mode == "mle" and not f.penalize_mu
    assert C.cv_config(cfg).lambdas == (1.0, 0.1) and C.cv_config(cfg).K == 3
    assert C.bootstrap_config(cfg, seed=4).seed == 4 and C.bootstrap_config(cfg).n_replicates == 7


@pytest.mark.parametrize("text, field", [
    ("simulation: {T: 0}\n", "simulation.T"),
    ("simulation: {T: -5}\n", "simulation.T"),
    ("model: {p: 2.5}\n", "model.p"),
    ("model: {structure: ring}\n", "model.structure"),
    ("kernel: {kind: gaussian}\n", "kernel.kind"),
    ("link: {kind: relu}\n", "link.kind"),
    ("fit: {weight_mode: irls}\n", "fit.weight_mode"),
    ("fit: {lambda: fast}\n", "fit.lambda"),
    ("fit: {penalize_mu: 1}\n", "fit.penalize_mu"),
    ("cv: {K: 1}\n", "cv.K"),
    ("cv: {lambdas: [0.1, 1.0]}\n", "cv.lambdas"),
    ("cv: {ratio: 2}\n", "cv.ratio"),
    ("bootstrap: {target_sparsity: 1.5}\n", "bootstrap.target_sparsity"),
    ("fit: {colour: red}\n", "fit.colour"),
    ("extras: {a: 1}\n", "extras"),
])
def test_invalid_fields_are_named(text, field):
    with pytest.raises(C.ConfigError) as info:
        C.parse_config(text)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(C.ConfigError) as info:
        C.parse_config("model:\n  p: 3\n  mu: [1,\n")
    assert info.value.line is not None


def test_missing_config_file(tmp_path):
    with pytest.raises(C.ConfigError, match="cannot read"):
        C.load_config(tmp_path / "nope.yaml")
