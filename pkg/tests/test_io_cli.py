import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from locsparse import cli
from locsparse.config import (ConfigError, DictionaryConfig, ProblemConfig, RunConfig,
                              SolverConfig, SweepConfig, RunSection, parse, serialize)
from locsparse.experiments import default_dictionary
from locsparse.io import (FormatError, checksum, decode_matrix, encode_matrix, read_csv,
                          read_matrix, write_csv, write_matrix)

SMALL = """
[problem]
m1 = 8
m2 = 8
[solver]
v_cap = 0.01
max_iter = 300
[sweep]
v_list = 0.01, 0.001
"""


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(0, 5), st.integers(0, 5)),
              elements=st.floats(allow_nan=False)))
def test_matrix_roundtrip_bitwise(X):
    Y = decode_matrix(encode_matrix(X))
    assert Y.shape == X.shape
    assert Y.tobytes() == np.ascontiguousarray(X).tobytes()


def test_header_layout(tmp_path):
    X = np.arange(6.0).reshape(2, 3)
    write_matrix(tmp_path / "x.lspm", X)
    blob = (tmp_path / "x.lspm").read_bytes()
    assert blob[:4] == b"LSPM"
    assert struct.unpack("<HII", blob[4:14]) == (1, 2, 3)
    assert struct.unpack("<d", blob[14:22])[0] == 0.0
    assert struct.unpack("<d", blob[-8:])[0] == 5.0
    np.testing.assert_array_equal(read_matrix(tmp_path / "x.lspm"), X)


def test_format_errors():
    blob = encode_matrix(np.ones((2, 2)))
    with pytest.raises(FormatError):
        decode_matrix(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        decode_matrix(blob[:-1])
    with pytest.raises(FormatError):
        decode_matrix(blob[:5])
    with pytest.raises(FormatError):
        decode_matrix(blob[:4] + struct.pack("<H", 9) + blob[6:])


def test_csv_roundtrip(tmp_path):
    X = np.random.default_rng(0).normal(size=(3, 4))
    write_csv(tmp_path / "x.csv", X)
    np.testing.assert_array_equal(read_csv(tmp_path / "x.csv"), X)
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    with pytest.raises(FormatError):
        read_csv(tmp_path / "bad.csv")


def test_checksum_is_stable():
    B = default_dictionary().values
    assert checksum(B) == checksum(default_dictionary().values)


configs = st.builds(
    RunConfig,
    problem=st.builds(ProblemConfig, m1=st.integers(1, 300), sigma=st.floats(0, 1),
                      kernel_sigma=st.floats(0, 5)),
    dictionary=st.builds(DictionaryConfig, n_atoms=st.integers(1, 20),
                         peak_time=st.floats(0.01, 3), normalization=st.sampled_from(["l1", "l2"])),
    solver=st.builds(SolverConfig, v_cap=st.floats(1e-9, 1e3), beta=st.floats(0, 5),
                     two_pass=st.booleans(), max_iter=st.integers(1, 10 ** 6)),
    sweep=st.builds(SweepConfig, v_list=st.lists(st.floats(1e-9, 1e3), min_size=1, max_size=6,
                                                 unique=True).map(
                                                     lambda v: tuple(sorted(v, reverse=True)))),
    run=st.builds(RunSection, seed=st.integers(0, 2 ** 64 - 1),
                  out_dir=st.text("abc/_-", min_size=1, max_size=10)),
)


@settings(max_examples=100, deadline=None)
@given(configs)
def test_config_roundtrip(cfg):
    assert parse(serialize(cfg)) == cfg


def test_config_defaults_and_errors():
    cfg = parse("")
    assert (cfg.solver.beta, cfg.solver.lambda0, cfg.solver.mu0) == (0.1, 0.5, 0.1)
    with pytest.raises(ConfigError):
        parse("[solver]\nbeta = abc\n")
    with pytest.raises(ConfigError):
        parse("[solver]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse("[nope]\na = 1\n")
    with pytest.raises(ConfigError):
        parse("[sweep]\nv_list = 0.1, 0.2\n")
    with pytest.raises(ConfigError):
        parse("[problem]\noperator = dense\n")
    with pytest.raises(ConfigError):
        parse("not an ini")


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL)
    return path


def run(args):
    return cli.main([str(a) for a in args])


def test_gen_dict_roundtrip(small_config, tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["gen-dict", "--config", small_config, "--out", out]) == 0
    stored = read_matrix(out / "dictionary.lspm")
    assert stored.tobytes() == default_dictionary().values.tobytes()
    np.testing.assert_allclose(np.linalg.norm(stored, axis=0), 1.0, atol=1e-12)
    first = json.loads(capsys.readouterr().out)["checksum"]
    assert run(["gen-dict", "--config", small_config, "--out", out]) == 0
    assert json.loads(capsys.readouterr().out)["checksum"] == first
    assert parse((out / "config.ini").read_text()).run.out_dir == str(out)


def test_solve_zero_data_and_two_pass(small_config, tmp_path):
    zero = tmp_path / "zero.lspm"
    write_matrix(zero, np.zeros((64, 32)))
    cfg = tmp_path / "zero.ini"
    cfg.write_text(SMALL.replace("[problem]\n", f"[problem]\ndata_path = {zero}\n"))
    out = tmp_path / "z"
    assert run(["solve", "--config", cfg, "--out", out]) == 0
    assert not read_matrix(out / "coefficients.lspm").any()

    out2 = tmp_path / "two"
    assert run(["solve", "--config", small_config, "--out", out2, "--two-pass"]) == 0
    report = json.loads((out2 / "report.json").read_text())
    assert report["two_pass"] is True and "second_pass" in report
    assert len(report["residual_history"]) == report["iterations"]


def test_solve_report_matches_library(small_config, tmp_path):
    from locsparse.admm import solve
    out = tmp_path / "s"
    assert run(["solve", "--config", small_config, "--out", out, "--seed", 5]) == 0
    cfg = parse(SMALL.replace("[problem]", "[run]\nseed = 5\n[problem]"))
    A, B = cli.build_operator(cfg), cli.build_dictionary(cfg)
    W = cli.build_data(cfg, A, B, cli.build_phantom(cfg))
    U, rep = solve(A, B, W, cfg.solver.params())
    report = json.loads((out / "report.json").read_text())
    assert report["iterations"] == rep.iterations
    assert read_matrix(out / "coefficients.lspm").tobytes() == U.tobytes()


def test_sweep_csv(small_config, tmp_path):
    from locsparse.experiments import sweep_v
    out = tmp_path / "w"
    assert run(["sweep", "--config", small_config, "--out", out]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "v_cap,wrong_pixel_percent,weighted_percent,iterations"
    cfg = parse(SMALL)
    table = sweep_v(cli.build_operator(cfg), cli.build_dictionary(cfg), cli.build_phantom(cfg),
                    0.0, 0, cfg.sweep.v_list, cfg.solver.params())
    assert lines[1:] == cli.sweep_csv(table).splitlines()[1:]
    first = (out / "sweep.csv").read_text()
    assert run(["sweep", "--config", small_config, "--out", out]) == 0
    assert (out / "sweep.csv").read_text() == first


def test_analyze(small_config, tmp_path):
    out = tmp_path / "a"
    assert run(["analyze", "--config", small_config, "--out", out]) == 0
    report = json.loads((out / "analysis.json").read_text())
    assert report["mutual_incoherence"] > 0.9
    assert report["scaling_condition"]["satisfied"]
    cfg = parse(SMALL)
    from locsparse.recovery import predict_asymptotic_support
    A, B = cli.build_operator(cfg), cli.build_dictionary(cfg)
    W = cli.build_data(cfg, A, B, cli.build_phantom(cfg))
    assert report["predicted_support"]["argmax"] == \
        predict_asymptotic_support(A, W, B).argmax.tolist()


def test_analyze_identity_dictionary_and_unnormalized(tmp_path):
    from locsparse.dictionary import check_scaling_condition, mutual_incoherence
    assert mutual_incoherence(np.eye(4)) == 0.0
    assert check_scaling_condition(2 * np.eye(3), [0, 1]).violations


def test_dense_operator_from_file(tmp_path):
    A = np.eye(16)
    path = tmp_path / "A.csv"
    write_csv(path, A)
    cfg = tmp_path / "d.ini"
    cfg.write_text(f"[problem]\nm1 = 4\nm2 = 4\noperator = dense\noperator_path = {path}\n"
                   "[solver]\nmax_iter = 200\n")
    assert run(["forward", "--config", cfg, "--out", tmp_path / "f"]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text(f"[problem]\nm1 = 5\nm2 = 4\noperator = dense\noperator_path = {path}\n")
    assert run(["forward", "--config", bad, "--out", tmp_path / "f"]) == 2


def test_exit_codes(small_config, tmp_path, monkeypatch):
    assert run(["solve", "--config", tmp_path / "missing.ini"]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[solver]\nlambda0 = -1\n")
    assert run(["gen-dict", "--config", bad]) == 2
    nan = tmp_path / "nan.lspm"
    write_matrix(nan, np.full((64, 32), np.nan))
    cfg = tmp_path / "nan.ini"
    cfg.write_text(SMALL.replace("[problem]\n", f"[problem]\ndata_path = {nan}\n"))
    assert run(["solve", "--config", cfg, "--out", tmp_path / "n"]) == 3

    def boom(*a, **k):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(cli, "solve", boom)
    assert run(["solve", "--config", small_config, "--out", tmp_path / "n"]) == 3
