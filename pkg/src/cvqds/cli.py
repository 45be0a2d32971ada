"""Command-line front end.

Exit codes: 0 ok, 1 usage error, 2 configuration error, 3 infeasible
operating point or failed self-test.

Configuration precedence is built-in defaults < ``--config`` file < flags.
Every output starts with a header naming the command, the seed and the
effective configuration, so identical headers mean identical runs.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checks
from .bits import RandomBits, bits_to_hex, bytes_to_bits, hex_to_bits
from .bounds import FiniteSizeBudget
from .channel import ChannelModel, FidelityTestFn, PulseParams, run_distribution
from .gf2poly import Gf2Poly, is_irreducible, random_irreducible
from .otuh import (
    RECIPIENT_B,
    RECIPIENT_C,
    SIGNER,
    Forge,
    KeyBundle,
    MessagePacket,
    Tamper,
    keygen_split,
    run_protocol,
    sign,
    verify,
)
from .rate import (
    CompetitorModel,
    SearchConfig,
    competitor_length,
    eta_from_distance,
    optimize_point,
    point_summary,
    rate_curve,
)
from .toeplitz import HashSpec, toeplitz_hash

__all__ = ["main", "RunConfig", "ConfigError", "UsageError", "load_config", "read_key", "write_key"]

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

COMMANDS = ("rate", "curve", "keygen", "sign", "verify", "demo", "hash", "compare", "selftest")
CURVE_COLUMNS = ("distance_km", "eta", "mu", "x_th", "p_sig", "p_test", "kappa", "gamma",
                 "n_min", "N_fin", "rate_per_s", "sig_len")


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


# name -> (type, default, validity predicate, description of the valid range)
_SETTINGS = {
    "eta": (float, None, lambda v: 0 < v <= 1, "in (0, 1]"),
    "distance_km": (float, None, lambda v: v >= 0, ">= 0"),
    "xi": (float, 0.0, lambda v: v >= 0, ">= 0"),
    "N": (float, 1e11, lambda v: v >= 1, ">= 1"),
    "rep_rate_hz": (float, 1e9, lambda v: v > 0, "> 0"),
    "msg_bits": (int, 1000, lambda v: v >= 1, ">= 1"),
    "security_bound": (float, 1e-10, lambda v: 0 < v < 1, "in (0, 1)"),
    "eps": (float, 2.0 ** -104, lambda v: 0 < v < 1, "in (0, 1)"),
    "eps_cor": (float, 2.0 ** -51, lambda v: 0 < v < 1, "in (0, 1)"),
    "eps_prime": (float, 1e-11, lambda v: 0 < v < 1, "in (0, 1)"),
    "f_ec": (float, 1.1, lambda v: v >= 1, ">= 1"),
    "seed": (int, 0, lambda v: 0 <= v < 2 ** 64, "in [0, 2^64)"),
    "format": (str, "csv", lambda v: v in ("csv", "json"), "csv or json"),
    "workers": (int, 1, lambda v: v >= 1, ">= 1"),
    "starts": (int, 6, lambda v: v >= 1, ">= 1"),
    "d_min": (float, 0.0, lambda v: v >= 0, ">= 0"),
    "d_max": (float, 40.0, lambda v: v >= 0, ">= 0"),
    "steps": (int, 9, lambda v: v >= 1, ">= 1"),
    "n": (int, 16, lambda v: 1 <= v <= 4096, "in [1, 4096]"),
    "l": (int, 10_000, lambda v: v >= 1, ">= 1"),
    "c": (int, 2, lambda v: v >= 2, ">= 2"),
    "mu": (float, 0.3, lambda v: v > 0, "> 0"),
    "x_th": (float, 0.5, lambda v: v > 0, "> 0"),
    "p_sig": (float, 0.8, lambda v: 0 < v <= 1, "in (0, 1]"),
    "p_test": (float, 0.1, lambda v: 0 <= v < 1, "in [0, 1)"),
    "rounds": (int, 200_000, lambda v: v >= 0, ">= 0"),
}

# the comparison table defaults to the benchmark operating point
_COMMAND_DEFAULTS = {"compare": {"eta": 0.4, "xi": 1e-3}}


def _convert(name: str, raw: str):
    kind = _SETTINGS[name][0]
    try:
        if kind is int:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def load_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SETTINGS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict
    output: str | None = None
    # settings echoed in the output header
    shown: tuple = ()

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def channel(self) -> ChannelModel:
        if self.values["eta"] is not None:
            eta = self.values["eta"]
        elif self.values["distance_km"] is not None:
            eta = eta_from_distance(self.values["distance_km"])
        else:
            eta = 0.4
        return ChannelModel(eta=eta, xi=self.values["xi"])

    @property
    def budget(self) -> FiniteSizeBudget:
        v = self.values
        return FiniteSizeBudget(eps=v["eps"], eps_cor=v["eps_cor"], eps_prime=v["eps_prime"],
                                security_bound=v["security_bound"], f_ec=v["f_ec"])

    @property
    def search(self) -> SearchConfig:
        v = self.values
        return SearchConfig(N=v["N"], rep_rate_hz=v["rep_rate_hz"], starts=v["starts"], seed=v["seed"])


def build_config(command: str, file_values: dict, flag_values: dict, output: str | None,
                 shown=()) -> RunConfig:
    values = {k: spec[1] for k, spec in _SETTINGS.items()}
    values.update(_COMMAND_DEFAULTS.get(command, {}))
    for layer in (file_values, flag_values):
        # a distance given in a later layer replaces an eta from an earlier one, and vice versa
        if "eta" in layer:
            values["distance_km"] = None
        if "distance_km" in layer:
            values["eta"] = None
        values.update(layer)
    if file_values.get("eta") is not None and file_values.get("distance_km") is not None:
        raise ConfigError("eta and distance_km are mutually exclusive")
    for name, value in values.items():
        if value is None:
            continue
        ok = _SETTINGS[name][2]
        if not ok(value) or (isinstance(value, float) and not math.isfinite(value)):
            raise ConfigError(f"{name} = {value} out of range: must be {_SETTINGS[name][3]}")
    if values["d_max"] < values["d_min"]:
        raise ConfigError("d_max must be >= d_min")
    if values["p_sig"] + values["p_test"] > 1:
        raise ConfigError("p_sig + p_test must be <= 1")
    return RunConfig(command, values, output, tuple(shown))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser, names) -> None:
    for name in names:
        flag = "--" + name.replace("_", "-")
        choices = ("csv", "json") if name == "format" else None
        p.add_argument(flag, dest=name, default=None, choices=choices,
                       metavar=None if choices else name.upper())


def _parser() -> _Parser:
    top = _Parser(prog="cvqds", description="Continuous-variable quantum digital signature toolkit.")
    sub = top.add_subparsers(dest="command", parser_class=_Parser, required=True)
    common = ["seed", "format"]
    budget = ["security_bound", "eps", "eps_cor", "eps_prime", "f_ec"]
    search = ["xi", "N", "rep_rate_hz", "msg_bits", "starts"]
    helps = {
        "rate": "optimize one operating point",
        "curve": "optimized rate versus distance",
        "keygen": "draw and split a set of signing keys",
        "sign": "sign a document with a signer key file",
        "verify": "verify a signature as one recipient",
        "demo": "simulated distribution stage plus a three-party signing run",
        "hash": "LFSR Toeplitz hash of a document",
        "compare": "signature length against encoding-based schemes",
        "selftest": "run the built-in oracle checks",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", default=None, help="key = value settings file")
        p.add_argument("--output", "-o", default=None, help="write output here instead of stdout")
        _add_common(p, common)
        if name in ("rate", "compare", "demo"):
            g = p.add_mutually_exclusive_group()
            _add_common(g, ["eta", "distance_km"])
        if name in ("rate", "curve", "compare"):
            _add_common(p, search + budget)
        if name == "curve":
            _add_common(p, ["workers", "d_min", "d_max", "steps"])
        if name == "compare":
            _add_common(p, ["l", "c"])
        if name in ("keygen", "demo", "hash"):
            _add_common(p, ["n"])
        if name in ("demo", "hash"):
            _add_common(p, ["msg_bits"])
        if name == "demo":
            _add_common(p, ["xi", "mu", "x_th", "p_sig", "p_test", "rounds", "workers"])
            adv = p.add_mutually_exclusive_group()
            adv.add_argument("--tamper", type=int, default=None, metavar="BIT",
                             help="flip this document bit on the Bob-to-Charlie hop")
            adv.add_argument("--forge", choices=("guess", "oracle"), default=None,
                             help="Bob forwards a divisibility forgery")
        if name == "keygen":
            p.add_argument("--out-dir", default=".", help="directory for the three key files")
        if name in ("sign", "verify", "hash"):
            p.add_argument("--doc", default=None, help="document file (raw bytes)")
        if name in ("sign", "verify"):
            p.add_argument("--key", required=True, help="own key file")
        if name == "verify":
            p.add_argument("--peer", required=True, help="other recipient's key file")
            p.add_argument("--sig", required=True, help="signature as hex")
        if name == "hash":
            p.add_argument("--poly", default=None, help="degree-n irreducible polynomial as hex")
            p.add_argument("--state", default=None, help="initial LFSR state as hex")
    return top


def _flag_values(ns: argparse.Namespace) -> dict:
    out = {}
    for name in _SETTINGS:
        raw = getattr(ns, name, None)
        if raw is not None:
            try:
                out[name] = _convert(name, raw)
            except ConfigError as exc:
                raise UsageError(str(exc)) from None
    return out


# ---- output ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


# settings that change how a run executes but never what it outputs
_EXECUTION_ONLY = ("seed", "format", "workers")


def _header(cfg: RunConfig) -> dict:
    shown = {k: cfg.values[k] for k in cfg.shown
             if k not in _EXECUTION_ONLY and cfg.values[k] is not None}
    return {"command": cfg.command, "seed": cfg.seed, "config": shown}


def render_rows(cfg: RunConfig, rows: list[dict], columns=None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    if cfg.format == "json":
        doc = dict(_header(cfg), rows=[{c: _jsonable(r.get(c)) for c in columns} for r in rows])
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    settings = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(_header(cfg)["config"].items()))
    buf.write(f"# cvqds {cfg.command} seed={cfg.seed} {settings}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


# ---- key files ------------------------------------------------------------

def write_key(path, bundle: KeyBundle) -> None:
    lines = [f"role={bundle.role}", f"n={bundle.n}", f"X={bits_to_hex(bundle.X)}",
             f"Y={bits_to_hex(bundle.Y)}"]
    if bundle.used:
        lines.append("used=1")
    Path(path).write_text("\n".join(lines) + "\n")


def read_key(path) -> KeyBundle:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read key file {path}: {exc.strerror}") from None
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        fields[k] = v
    missing = {"role", "n", "X", "Y"} - fields.keys()
    if missing:
        raise ConfigError(f"{path}: missing {', '.join(sorted(missing))}")
    try:
        n = int(fields["n"])
        bundle = KeyBundle(hex_to_bits(fields["X"], n), hex_to_bits(fields["Y"], 2 * n), fields["role"],
                           used=fields.get("used") == "1")
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return bundle


def _read_doc(path) -> np.ndarray:
    if path is None:
        raise UsageError("--doc is required")
    try:
        return bytes_to_bits(Path(path).read_bytes())
    except OSError as exc:
        raise ConfigError(f"cannot read document {path}: {exc.strerror}") from None


def _fresh(bundle: KeyBundle, path) -> None:
    if bundle.used:
        raise ConfigError(f"{path}: key already consumed")


# ---- commands -------------------------------------------------------------

def cmd_rate(cfg: RunConfig, ns) -> tuple[str, int]:
    ch = cfg.channel
    pt = optimize_point(ch, cfg.budget, cfg.msg_bits, cfg.search, distance_km=cfg.distance_km)
    return render_rows(cfg, [point_summary(pt)]), EXIT_OK if pt.ok else EXIT_INFEASIBLE


def cmd_curve(cfg: RunConfig, ns) -> tuple[str, int]:
    grid = [round(float(d), 9) for d in np.linspace(cfg.d_min, cfg.d_max, cfg.steps)]
    pts = rate_curve(grid, cfg.xi, cfg.budget, cfg.msg_bits, cfg.search, workers=cfg.workers)
    return render_rows(cfg, [p.to_row() for p in pts], CURVE_COLUMNS), EXIT_OK


def cmd_keygen(cfg: RunConfig, ns) -> tuple[str, int]:
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for bundle in keygen_split(cfg.n, RandomBits(cfg.seed)):
        path = out_dir / f"{bundle.role}.key"
        write_key(path, bundle)
        rows.append({"role": bundle.role, "n": bundle.n, "path": str(path)})
    return render_rows(cfg, rows), EXIT_OK


def cmd_sign(cfg: RunConfig, ns) -> tuple[str, int]:
    doc = _read_doc(ns.doc)
    key = read_key(ns.key)
    _fresh(key, ns.key)
    if key.role != SIGNER:
        raise ConfigError(f"{ns.key}: role {key.role} cannot sign")
    if doc.size == 0:
        raise ConfigError("empty document")
    packet, _ = sign(doc, key, RandomBits(cfg.seed))
    write_key(ns.key, key)
    return render_rows(cfg, [{"m": doc.size, "n": key.n, "sig": bits_to_hex(packet.sig)}]), EXIT_OK


def cmd_verify(cfg: RunConfig, ns) -> tuple[str, int]:
    doc = _read_doc(ns.doc)
    own, peer = read_key(ns.key), read_key(ns.peer)
    _fresh(own, ns.key)
    if {own.role, peer.role} != {RECIPIENT_B, RECIPIENT_C}:
        raise ConfigError("verify needs one recipient-B and one recipient-C key")
    try:
        sig = hex_to_bits(ns.sig, 2 * own.n)
    except ValueError as exc:
        raise ConfigError(f"--sig: {exc}") from None
    accept = verify(MessagePacket(doc, sig), own, peer.shares())
    write_key(ns.key, own)
    return render_rows(cfg, [{"role": own.role, "m": doc.size, "accept": accept}]), EXIT_OK


def cmd_demo(cfg: RunConfig, ns) -> tuple[str, int]:
    ch = cfg.channel
    events = []
    if cfg.rounds:
        if cfg.p_sig + cfg.p_test > 1:
            raise ConfigError("p_sig + p_test must be <= 1")
        probs = (cfg.p_sig, cfg.p_test, 1.0 - cfg.p_sig - cfg.p_test)
        data = run_distribution(cfg.rounds, probs, PulseParams.for_channel(cfg.mu, cfg.x_th, ch), ch,
                                FidelityTestFn(), seed=cfg.seed, workers=cfg.workers)
        events.append({"step": "distribution", "rounds": data.N, "N_suc": data.N_suc,
                       "N_fail": data.N_fail, "N_test": data.N_test, "N_trash": data.N_trash,
                       "bit_error_rate": data.error_rate, "F_hat": data.F_hat})
    # the protocol stream is kept apart from the distribution-stage chunk streams
    source = RandomBits(np.random.SeedSequence([cfg.seed, 1]))
    doc = source.take(cfg.msg_bits)
    bundles = keygen_split(cfg.n, source)
    adversary = None
    if ns.tamper is not None:
        if not 0 <= ns.tamper < cfg.msg_bits:
            raise ConfigError(f"--tamper {ns.tamper} outside document of {cfg.msg_bits} bits")
        adversary = Tamper(ns.tamper, "bob-charlie")
    elif ns.forge is not None:
        adversary = Forge(ns.forge, seed=cfg.seed)
    tr = run_protocol(doc, bundles, adversary, source)
    events.extend(tr.events)
    events.append({"step": "outcome", "bob_accept": tr.bob_accept, "charlie_accept": tr.charlie_accept,
                   "aborted": tr.aborted})
    if cfg.format == "json":
        lines = [json.dumps(_header(cfg))] + [json.dumps({k: _jsonable(v) for k, v in e.items()})
                                              for e in events]
        return "\n".join(lines) + "\n", EXIT_OK
    rows = []
    for e in events:
        rest = {k: _jsonable(v) for k, v in e.items() if k not in ("step", "frm", "to", "party", "accept")}
        rows.append({"step": e["step"], "from": e.get("frm"), "to": e.get("to"), "party": e.get("party"),
                     "accept": e.get("accept"), "detail": json.dumps(rest, sort_keys=True) if rest else ""})
    return render_rows(cfg, rows, ("step", "from", "to", "party", "accept", "detail")), EXIT_OK


def cmd_hash(cfg: RunConfig, ns) -> tuple[str, int]:
    source = RandomBits(cfg.seed)
    doc = _read_doc(ns.doc) if ns.doc is not None else source.take(cfg.msg_bits)
    if doc.size == 0:
        raise ConfigError("empty document")
    n = cfg.n
    try:
        if ns.poly is not None:
            p = Gf2Poly.from_hex(ns.poly, n + 1)
            if p.degree != n or not is_irreducible(p):
                raise ConfigError(f"--poly is not an irreducible polynomial of degree {n}")
        else:
            p, _ = random_irreducible(n, source)
        state = hex_to_bits(ns.state, n) if ns.state is not None else source.take(n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    digest = toeplitz_hash(HashSpec(p, state), doc)
    row = {"n": n, "m": doc.size, "poly": p.to_hex(), "state": bits_to_hex(state), "hash": bits_to_hex(digest)}
    return render_rows(cfg, [row]), EXIT_OK


def cmd_compare(cfg: RunConfig, ns) -> tuple[str, int]:
    m = cfg.msg_bits
    pt = optimize_point(cfg.channel, cfg.budget, m, cfg.search, distance_km=cfg.distance_km)
    rows = [{"scheme": "otuh", "msg_bits": m, "h": "", "sig_len": pt.signature_length if pt.ok else ""}]
    for scheme in ("append-ones", "insert-zeros"):
        res = competitor_length(CompetitorModel(scheme, l=cfg.l, c=cfg.c), m)
        rows.append({"scheme": scheme, "msg_bits": m, "h": res["h"], "sig_len": res["total"]})
    return render_rows(cfg, rows), EXIT_OK if pt.ok else EXIT_INFEASIBLE


def cmd_selftest(cfg: RunConfig, ns) -> tuple[str, int]:
    results = checks.run_all()
    rows = [{"check": r.name, "status": "PASS" if r.ok else "FAIL", "detail": r.detail} for r in results]
    return render_rows(cfg, rows), EXIT_OK if all(r.ok for r in results) else EXIT_INFEASIBLE


_HANDLERS = {
    "rate": cmd_rate, "curve": cmd_curve, "keygen": cmd_keygen, "sign": cmd_sign, "verify": cmd_verify,
    "demo": cmd_demo, "hash": cmd_hash, "compare": cmd_compare, "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        ns = _parser().parse_args(argv)
        flags = _flag_values(ns)
        file_values = load_config(ns.config) if ns.config else {}
        shown = [k for k in _SETTINGS if hasattr(ns, k)]
        cfg = build_config(ns.command, file_values, flags, ns.output, shown)
        text, code = _HANDLERS[ns.command](cfg, ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
