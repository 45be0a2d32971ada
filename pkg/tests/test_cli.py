from __future__ import annotations

import csv
import io
import json

import pytest

from cvqds.cli import ConfigError, build_config, load_config, main, read_key


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n\n")
    cfg = build_config("rate", load_config(path), {}, None)
    assert cfg.eps_cor == 2.0 ** -51 and cfg.eps == 2.0 ** -104
    assert cfg.security_bound == 1e-10 and cfg.rep_rate_hz == 1e9


def test_config_range_error_names_setting(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("xi = -0.1\n")
    code, _, err = run(capsys, "compare", "--config", str(path))
    assert code == 2 and "xi" in err


def test_config_parse_error_has_line_number(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("xi = 0.1\n\nnot a setting line\n")
    with pytest.raises(ConfigError, match=":3:"):
        load_config(path)


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("colour = blue\n")
    with pytest.raises(ConfigError, match="colour"):
        load_config(path)


def test_flag_overrides_file_in_echo(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("n = 12\nmsg_bits = 40\n")
    code, out, _ = run(capsys, "hash", "--config", str(path), "--n", "20", "--seed", "3")
    assert code == 0
    header = out.splitlines()[0]
    assert "n=20" in header and "msg_bits=40" in header and "seed=3" in header
    row = rows_of(out)[0]
    assert row["n"] == "20" and row["m"] == "40"


def test_distance_flag_replaces_file_eta(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("eta = 0.5\n")
    cfg = build_config("rate", load_config(path), {"distance_km": 25.0}, None)
    assert cfg.eta is None and cfg.channel.eta == pytest.approx(0.398, abs=1e-3)


def test_contradictory_flags_are_usage_error(capsys):
    code, _, err = run(capsys, "rate", "--eta", "0.5", "--distance-km", "10")
    assert code == 1 and "usage" in err


def test_unknown_flag_is_usage_error(capsys):
    assert run(capsys, "hash", "--bogus", "1")[0] == 1
    assert run(capsys, "hash", "--n", "abc")[0] == 1


def test_hash_known_vector(capsys, tmp_path):
    doc = tmp_path / "doc.bin"
    doc.write_bytes(bytes.fromhex("0123456789abcdef"))
    # x^8 + x^4 + x^3 + x + 1 as 9 bits, LSB-first bytes
    code, out, _ = run(capsys, "hash", "--n", "8", "--poly", "1b01", "--state", "a5", "--doc", str(doc))
    assert code == 0
    row = rows_of(out)[0]
    assert row["m"] == "64" and row["poly"] == "1b01" and len(row["hash"]) == 2


def test_hash_rejects_reducible_poly(capsys):
    code, _, err = run(capsys, "hash", "--n", "8", "--poly", "0101")
    assert code == 2 and "irreducible" in err


def test_keygen_sign_verify_roundtrip(tmp_path, capsys):
    keys = tmp_path / "keys"
    assert run(capsys, "keygen", "--n", "16", "--seed", "5", "--out-dir", str(keys))[0] == 0
    doc = tmp_path / "doc.bin"
    doc.write_bytes(b"pay 10 units to carol")
    code, out, _ = run(capsys, "sign", "--key", str(keys / "signer.key"), "--doc", str(doc), "--seed", "6")
    assert code == 0
    sig = rows_of(out)[0]["sig"]
    assert read_key(keys / "signer.key").used
    code, out, _ = run(capsys, "verify", "--key", str(keys / "recipient-B.key"), "--peer", str(keys / "recipient-C.key"),
                       "--doc", str(doc), "--sig", sig)
    assert code == 0 and rows_of(out)[0]["accept"] == "true"
    code, out, _ = run(capsys, "verify", "--key", str(keys / "recipient-C.key"), "--peer", str(keys / "recipient-B.key"),
                       "--doc", str(doc), "--sig", sig)
    assert code == 0 and rows_of(out)[0]["accept"] == "true"


def test_tampered_document_rejected_and_keys_single_use(tmp_path, capsys):
    keys = tmp_path / "keys"
    run(capsys, "keygen", "--n", "16", "--seed", "8", "--out-dir", str(keys))
    doc = tmp_path / "doc.bin"
    doc.write_bytes(b"original")
    _, out, _ = run(capsys, "sign", "--key", str(keys / "signer.key"), "--doc", str(doc))
    sig = rows_of(out)[0]["sig"]
    doc.write_bytes(b"origina1")
    code, out, _ = run(capsys, "verify", "--key", str(keys / "recipient-B.key"), "--peer", str(keys / "recipient-C.key"),
                       "--doc", str(doc), "--sig", sig)
    assert code == 0 and rows_of(out)[0]["accept"] == "false"
    code, _, err = run(capsys, "verify", "--key", str(keys / "recipient-B.key"), "--peer", str(keys / "recipient-C.key"),
                       "--doc", str(doc), "--sig", sig)
    assert code == 2 and "consumed" in err
    code, _, err = run(capsys, "sign", "--key", str(keys / "signer.key"), "--doc", str(doc))
    assert code == 2


def test_recipient_cannot_sign(tmp_path, capsys):
    keys = tmp_path / "keys"
    run(capsys, "keygen", "--n", "8", "--out-dir", str(keys))
    doc = tmp_path / "doc.bin"
    doc.write_bytes(b"x")
    assert run(capsys, "sign", "--key", str(keys / "recipient-B.key"), "--doc", str(doc))[0] == 2


def test_demo_transcript_and_determinism(capsys):
    argv = ("demo", "--msg-bits", "128", "--n", "16", "--seed", "7", "--rounds", "20000", "--format", "json")
    code, first, _ = run(capsys, *argv)
    assert code == 0
    assert run(capsys, *argv)[1] == first
    lines = [json.loads(ln) for ln in first.splitlines()]
    assert lines[0]["command"] == "demo" and lines[0]["seed"] == 7
    steps = [e["step"] for e in lines[1:]]
    assert steps[0] == "distribution" and steps[-1] == "outcome"
    assert lines[-1]["bob_accept"] and lines[-1]["charlie_accept"]


def test_demo_tamper_rejected(capsys):
    code, out, _ = run(capsys, "demo", "--msg-bits", "64", "--n", "16", "--rounds", "0", "--tamper", "5",
                       "--format", "json")
    assert code == 0
    assert json.loads(out.splitlines()[-1])["charlie_accept"] is False
    assert run(capsys, "demo", "--msg-bits", "64", "--rounds", "0", "--tamper", "64")[0] == 2


def test_compare_ordering(capsys):
    code, out, _ = run(capsys, "compare", "--msg-bits", "1000000", "--l", "10000", "--starts", "1")
    assert code == 0
    rows = {r["scheme"]: int(r["sig_len"]) for r in rows_of(out)}
    assert rows["otuh"] < rows["insert-zeros"] < rows["append-ones"]


def test_rate_json_output(tmp_path, capsys):
    target = tmp_path / "rate.json"
    code, out, _ = run(capsys, "rate", "--distance-km", "25", "--xi", "1e-3", "--starts", "1",
                       "--format", "json", "--output", str(target))
    assert code == 0 and out == ""
    doc = json.loads(target.read_text())
    assert doc["config"]["distance_km"] == 25.0
    assert doc["rows"][0]["rate_per_s"] > 0


def test_rate_infeasible_exit_code(capsys):
    code, _, _ = run(capsys, "rate", "--eta", "0.001", "--xi", "0.05", "--N", "1e6", "--starts", "1")
    assert code == 3


def test_curve_columns(capsys):
    code, out, _ = run(capsys, "curve", "--d-min", "0", "--d-max", "10", "--steps", "2", "--starts", "1")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 2 and list(rows[0]) == ["distance_km", "eta", "mu", "x_th", "p_sig", "p_test",
                                                "kappa", "gamma", "n_min", "N_fin", "rate_per_s", "sig_len"]


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert all(r["status"] == "PASS" for r in rows_of(out))
